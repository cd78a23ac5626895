// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero when any selected criterion fails.
//
//   acceptance                 all criteria
//   acceptance --criterion 3   one criterion (repeatable)

#include "countgraph/io.hpp"
#include "countgraph/mcem.hpp"
#include "countgraph/select.hpp"
#include "countgraph/simulate.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <sys/wait.h>

using namespace countgraph;
namespace fs = std::filesystem;

namespace {

using cd = std::complex<double>;
constexpr double kPi = 3.14159265358979323846;

struct Verdict {
  bool pass = false;
  std::string detail;
};

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(double v, int digits = 3) {
  std::ostringstream os;
  os.precision(digits);
  os << v;
  return os.str();
}

// stable model with n <= 6, p <= 3; rescaled into the stationary region
ModelParams random_stable_model(Rng& rng) {
  const int n = 1 + static_cast<int>(rng.uniform() * 6);
  const int p = 1 + static_cast<int>(rng.uniform() * 3);
  std::vector<Matrix> ar(p, Matrix(n, n));
  for (auto& a : ar)
    for (int i = 0; i < n * n; ++i) a.data()[i] = 0.4 * rng.normal();
  Vector sigma(n);
  for (int i = 0; i < n; ++i) sigma[i] = 0.2 + 1.5 * rng.uniform();
  ModelParams m(Matrix::Zero(1, n), ar, sigma);
  const double target = 0.3 + 0.65 * rng.uniform();
  const double r = m.spectral_radius();
  for (int k = 1; k <= p; ++k) m.ar()[k - 1] *= std::pow(target / r, k);
  return m;
}

std::vector<ModelParams> model_set() {
  Rng rng(20240601);
  std::vector<ModelParams> out;
  for (int i = 0; i < 100; ++i) out.push_back(random_stable_model(rng));
  return out;
}

// B(w)^* Sigma^{-1} B(w) assembled from the AR polynomial
ComplexMatrix transfer_inverse(const ModelParams& m, double w) {
  const int n = m.n();
  ComplexMatrix b = ComplexMatrix::Identity(n, n);
  for (int k = 1; k <= m.p(); ++k) b -= m.ar(k).cast<cd>() * std::exp(cd(0, -k * w));
  const Vector s = m.sigma().array().square().inverse();
  return b.adjoint() * s.cast<cd>().asDiagonal() * b;
}

Verdict criterion1() {
  Stopwatch sw;
  const auto models = model_set();
  double worst = 0.0;
  for (const auto& m : models) {
    const WStack w = compute_W(m);
    for (int g = 0; g < 32; ++g) {
      const double omega = 2.0 * kPi * g / 32.0 - kPi;
      const ComplexMatrix d = transfer_inverse(m, omega) - inverse_spectral_from_W(w, omega);
      worst = std::max(worst, d.cwiseAbs().maxCoeff());
    }
  }
  const double t = sw.seconds();
  return {worst <= 1e-10 && t < 5.0,
          "100 models x 32 frequencies, max |direct - W expansion| = " + fmt(worst) + ", " + fmt(t) + " s"};
}

Verdict criterion2() {
  Stopwatch sw;
  const auto models = model_set();
  double worst = 0.0;
  for (const auto& m : models) {
    const Matrix r = stationary_covariance(m).block();
    const Matrix a = m.companion();
    Matrix q = Matrix::Zero(r.rows(), r.cols());
    q.topLeftCorner(m.n(), m.n()) = m.sigma().array().square().matrix().asDiagonal();
    const double res = (r - a * r * a.transpose() - q).cwiseAbs().maxCoeff() / r.cwiseAbs().maxCoeff();
    worst = std::max(worst, res);
  }
  const ModelParams scalar(Matrix::Zero(1, 1), {Matrix::Constant(1, 1, 0.5)}, Vector::Ones(1));
  const double err = std::abs(stationary_covariance(scalar).block()(0, 0) - 4.0 / 3.0);
  const double t = sw.seconds();
  return {worst <= 1e-10 && err <= 1e-12 && t < 5.0,
          "max relative fixed-point residual " + fmt(worst) + ", AR(1) error " + fmt(err) + ", " + fmt(t) + " s"};
}

Verdict criterion3() {
  Stopwatch sw;
  // Y = (1, 0, 2), p = 1, a = 0.5, sigma = 1, intercept-only design at 0
  const double a = 0.5;
  CountMatrix y(1, 3);
  y << 1, 0, 2;
  const CountPanel panel = make_panel(y, Matrix::Ones(3, 1));
  const ModelParams m(Matrix::Zero(1, 1), {Matrix::Constant(1, 1, a)}, Vector::Ones(1));

  // 61^3 grid quadrature of the exact posterior
  Eigen::Matrix3d k;
  for (int s = 0; s < 3; ++s)
    for (int t = 0; t < 3; ++t) k(s, t) = std::pow(a, std::abs(s - t)) / (1 - a * a);
  const Eigen::Matrix3d kinv = k.inverse();
  const int g = 61;
  const double lo = -6.0, hi = 4.0, h = (hi - lo) / (g - 1);
  double z = 0;
  Eigen::Vector3d mom = Eigen::Vector3d::Zero();
  for (int i = 0; i < g; ++i)
    for (int j = 0; j < g; ++j)
      for (int l = 0; l < g; ++l) {
        const Eigen::Vector3d x(lo + i * h, lo + j * h, lo + l * h);
        double lp = -0.5 * x.dot(kinv * x);
        for (int t = 0; t < 3; ++t) lp += y(0, t) * x[t] - std::exp(x[t]);
        const double w = std::exp(lp);
        z += w;
        mom += w * x;
      }
  const Eigen::Vector3d exact = mom / z;

  ChainConfig cfg;
  cfg.m = 50000;
  cfg.burn_in = 2000;
  cfg.seed = 17;
  const SamplerResult res = sample_latent(panel, m, cfg);
  const int batches = 50, size = cfg.m / batches;
  bool ok = true;
  std::ostringstream os;
  for (int t = 0; t < 3; ++t) {
    std::vector<double> bm(batches, 0.0);
    for (int s = 0; s < cfg.m; ++s) bm[s / size] += res.samples[s].values(0, t) / size;
    double mean = 0;
    for (double v : bm) mean += v / batches;
    double var = 0;
    for (double v : bm) var += (v - mean) * (v - mean) / (batches - 1);
    const double se = std::sqrt(var / batches);
    const double zscore = std::abs(mean - exact[t]) / se;
    ok = ok && zscore <= 3.0;
    os << "X(" << t + 1 << ") " << fmt(mean, 4) << " vs " << fmt(exact[t], 4) << " (" << fmt(zscore, 2)
       << " SE); ";
  }
  const double t = sw.seconds();
  os << fmt(t) << " s";
  return {ok && t < 60.0, os.str()};
}

Verdict criterion4() {
  Stopwatch sw;
  StudyDesign d;
  d.n = 3;
  d.p = 1;
  d.length = 100;
  d.sparsity = 0.5;
  d.noise_variance = 0.25;
  const TruthSpec spec = make_study_truth(d, 4);
  const SimulationResult sim = generate(spec);
  ChainConfig cc;
  cc.m = 50;
  cc.burn_in = 50;
  const auto draws = sample_latent(sim.panel, spec.params, cc);
  const SufficientStats stats = SufficientStats::from_samples(sim.panel, draws.samples, 1);
  const MStepSettings defaults;
  GaussianBlockObjective obj(stats, 0.5, defaults.smoothing, true, defaults.stationarity_margin);

  Rng rng(99);
  double worst = 0.0;
  for (int pt = 0; pt < 20; ++pt) {
    Matrix a(3, 3);
    for (int i = 0; i < 9; ++i) a.data()[i] = 0.35 * rng.normal();
    ModelParams th(spec.params.beta(), {a}, Vector::Constant(3, 0.3 + rng.uniform()));
    if (th.spectral_radius() > 0.9) th.ar()[0] *= 0.9 / th.spectral_radius();
    const Vector x = GaussianBlockObjective::pack(th);
    Vector grad;
    obj.value(x, &grad);
    Vector fd(x.size());
    for (int j = 0; j < x.size(); ++j) {
      const double step = 1e-5 * (1.0 + std::abs(x[j]));
      Vector xp = x, xm = x;
      xp[j] += step;
      xm[j] -= step;
      fd[j] = (obj.value(xp) - obj.value(xm)) / (2 * step);
    }
    worst = std::max(worst, (grad - fd).norm() / fd.norm());
  }
  const double t = sw.seconds();
  return {worst <= 1e-5 && t < 30.0,
          "20 points, max relative gradient error " + fmt(worst) + ", " + fmt(t) + " s"};
}

Verdict criterion5() {
  Stopwatch sw;
  StudyDesign d;
  d.n = 3;
  d.p = 1;
  d.length = 150;
  d.sparsity = 0.5;
  d.noise_variance = 0.25;
  d.beta = {1.0, 0.0, 0.5, 0.5};
  const TruthSpec spec = make_study_truth(d, 5);
  const SimulationResult sim = generate(spec);
  FitConfig cfg;
  cfg.gamma = 0.1;
  cfg.chain.m = 200;
  cfg.chain.burn_in = 200;
  cfg.chain.seed = 5;
  FitTrace trace;
  bool converged = false;
  try {
    const FitResult fit = run_mcem(sim.panel, initial_params(sim.panel, 1), cfg);
    trace = fit.trace;
    converged = fit.converged;
  } catch (const DivergenceError& e) {
    trace = e.trace();
  }
  int counted = 0, up = 0, big_drops = 0;
  for (const auto& r : trace.records) {
    if (!r.increment) continue;
    ++counted;
    if (*r.increment >= 0.0) ++up;
    if (*r.increment < -3.0 * r.increment_se) ++big_drops;
  }
  const double frac = counted ? static_cast<double>(up) / counted : 0.0;
  const double t = sw.seconds();
  return {counted > 0 && frac >= 0.9 && big_drops == 0 && t < 600.0,
          std::to_string(up) + "/" + std::to_string(counted) + " increments non-negative, " +
              std::to_string(big_drops) + " drops beyond 3 SE, " + std::to_string(trace.records.size()) +
              " iterations (" + (converged ? "converged" : "max-iter reached") + "), " + fmt(t) + " s"};
}

double f1_score(const std::set<std::pair<int, int>>& truth, const std::set<std::pair<int, int>>& est) {
  int tp = 0;
  for (const auto& e : est) tp += truth.count(e) ? 1 : 0;
  const int fp = static_cast<int>(est.size()) - tp;
  const int fn = static_cast<int>(truth.size()) - tp;
  if (tp == 0) return (fp == 0 && fn == 0) ? 1.0 : 0.0;
  return 2.0 * tp / (2.0 * tp + fp + fn);
}

std::set<std::pair<int, int>> undirected_set(const GraphResult& g) {
  std::set<std::pair<int, int>> s;
  for (const auto& e : g.undirected) s.insert({e.i, e.j});
  return s;
}

std::set<std::pair<int, int>> directed_set(const GraphResult& g) {
  std::set<std::pair<int, int>> s;
  for (const auto& e : g.directed) s.insert({e.from, e.to});
  return s;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

const std::vector<double> kSimulationGrid{0, 0.0698, 0.2911, 0.5857, 0.6872, 0.9963, 1.8527, 2.6891, 3};

struct RecoveryRun {
  std::vector<double> f1_undirected, f1_directed, chosen;
  std::vector<std::vector<SweepPoint>> sweeps;
  double seconds = 0.0;
};

// shared by criteria 6 and 9
const RecoveryRun& recovery_run() {
  static const RecoveryRun run = [] {
    RecoveryRun out;
    Stopwatch sw;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const TruthSpec spec = make_study_truth(StudyDesign{}, seed);
      const SimulationResult sim = generate(spec);
      FitConfig cfg;
      cfg.chain.seed = derive_seed(seed, 77);
      auto points = tradeoff_sweep(sim.panel, 2, cfg, kSimulationGrid);
      const SelectionReport rep = select_gamma(points);
      const SweepPoint& best = rep.points[rep.chosen_index];
      out.f1_undirected.push_back(f1_score(undirected_set(sim.truth_graph), undirected_set(best.graph)));
      out.f1_directed.push_back(f1_score(directed_set(sim.truth_graph), directed_set(best.graph)));
      out.chosen.push_back(best.gamma);
      out.sweeps.push_back(rep.points);
      std::cerr << "  seed " << seed << ": gamma* " << best.gamma << ", F1 undirected "
                << out.f1_undirected.back() << ", directed " << out.f1_directed.back() << " ("
                << best.graph.undirected.size() << "/" << sim.truth_graph.undirected.size() << " and "
                << best.graph.directed.size() << "/" << sim.truth_graph.directed.size() << " edges)\n";
    }
    out.seconds = sw.seconds();
    return out;
  }();
  return run;
}

Verdict criterion6() {
  const RecoveryRun& r = recovery_run();
  const double fu = median(r.f1_undirected), fd = median(r.f1_directed);
  std::ostringstream os;
  os << "median F1 undirected " << fmt(fu) << ", directed " << fmt(fd) << " over 5 seeds (gamma*:";
  for (double g : r.chosen) os << " " << g;
  os << "), " << fmt(r.seconds / 60.0) << " min";
  return {fu >= 0.8 && fd >= 0.8 && r.seconds <= 3600.0, os.str()};
}

Verdict criterion7() {
  Stopwatch sw;
  int hits = 0;
  std::ostringstream picks;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(derive_seed(seed, 5));
    Matrix a = random_sparse_ar(3, 1, 0.5, 0.3, derive_seed(seed, 6)).ar[0];
    a.diagonal().setConstant(0.6);
    ModelParams truth(Matrix::Zero(4, 3), {a}, Vector::Constant(3, 0.5));
    if (truth.spectral_radius() > 0.9) truth.ar()[0] *= 0.9 / truth.spectral_radius();
    truth.beta().row(0).setConstant(1.0);
    truth.beta().row(2).setConstant(0.5);
    truth.beta().row(3).setConstant(0.5);
    TruthSpec spec;
    spec.params = truth;
    spec.length = 300;
    spec.seed = derive_seed(seed, 7);
    spec.covariates = build_covariates(300, 12.0);
    const SimulationResult sim = generate(spec);
    FitConfig cfg;
    cfg.chain.seed = derive_seed(seed, 8);
    cfg.max_iter = 50;
    const SelectionReport rep = select_order(sim.panel, {0, 1, 2, 3}, cfg);
    hits += *rep.chosen_order == 1 ? 1 : 0;
    picks << " " << *rep.chosen_order;
  }
  const double t = sw.seconds();
  return {hits >= 8 && t <= 1800.0,
          "p=1 chosen in " + std::to_string(hits) + "/10 seeds (picks:" + picks.str() + "), " + fmt(t) + " s"};
}

Verdict criterion8() {
  Stopwatch sw;
  auto points = [](const std::vector<double>& g, const std::vector<double>& b) {
    std::vector<SweepPoint> pts(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
      pts[i].gamma = g[i];
      pts[i].bic = b[i];
    }
    return pts;
  };
  const SelectionReport table = select_gamma(points(
      {0, 0.1706, 0.5084, 0.6829, 0.7969, 0.9795, 1.1266, 1.5951, 2.0186, 2.2213, 2.6271, 3.35},
      {12111.43, 10846.09, 10583.76, 10197.97, 10227.05, 10313.73, 10512.76, 10734.25, 10973.20, 11275.20,
       11510.35, 11811.79}));
  // BIC curve of the shape read off the simulation figure: falls to a minimum then rises
  const SelectionReport sim = select_gamma(
      points(kSimulationGrid, {3120.4, 3071.9, 3010.2, 3034.8, 3046.1, 3089.5, 3160.3, 3222.0, 3230.7}));
  const double t = sw.seconds();
  const bool ok = *table.chosen_gamma == 0.6829 && table.points[table.chosen_index].bic == 10197.97 &&
                  *sim.chosen_gamma == 0.2911 && t < 1.0;
  return {ok, "table fixture -> " + fmt(*table.chosen_gamma, 6) + " (BIC " +
                  fmt(table.points[table.chosen_index].bic, 7) + "), simulation fixture -> " +
                  fmt(*sim.chosen_gamma, 6)};
}

Verdict criterion9() {
  const RecoveryRun& r = recovery_run();
  bool ok = true;
  std::ostringstream os;
  for (std::size_t s = 0; s < r.sweeps.size(); ++s) {
    const auto& pts = r.sweeps[s];
    int violations = 0;
    for (std::size_t i = 1; i < pts.size(); ++i) {
      if (!pts[i].ok || !pts[i - 1].ok) continue;
      if (pts[i].penalty > pts[i - 1].penalty * 1.01) ++violations;
    }
    const auto& last = pts.back();
    const std::size_t edges = last.ok ? last.graph.undirected.size() : 999;
    ok = ok && violations == 0 && edges <= 2;
    os << "seed " << s + 1 << ": " << violations << " h1 increases, " << edges << " edges at gamma 3; ";
  }
  return {ok, os.str()};
}

int run_command(const std::string& cmd) {
  const int status = std::system((cmd + " > /dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Verdict criterion10(const std::string& cli) {
  Stopwatch sw;
  const fs::path root = fs::temp_directory_path() / "countgraph_acceptance_cli";
  fs::remove_all(root);
  fs::create_directories(root);
  const std::string r = root.string();
  std::vector<std::string> failures;
  auto step = [&](const std::string& args) {
    if (run_command(cli + " " + args) != 0) failures.push_back(args.substr(0, args.find(' ')));
  };
  for (const char* run : {"a", "b"}) {
    const std::string d = r + "/" + run;
    step("simulate --seed 11 --out " + d + "/sim");
    step("fit --counts " + d + "/sim/counts.csv --covariates " + d + "/sim/covariates.csv --order 2 --gamma 0.2911"
         " --seed 11 --max-iter 40 --out " + d + "/fit");
    step("graph-export --params " + d + "/fit/params.json --out " + d + "/export");
  }
  int mismatched = 0;
  const std::vector<std::string> files{"sim/counts.csv",      "sim/truth_graph.json", "fit/params.json",
                                       "fit/graph.json",      "fit/undirected.dot",   "fit/directed.dot",
                                       "export/graph.json",   "export/undirected.dot", "export/directed.dot"};
  for (const auto& f : files) {
    try {
      if (io::read_file(r + "/a/" + f) != io::read_file(r + "/b/" + f)) ++mismatched;
    } catch (const std::exception&) {
      ++mismatched;
    }
  }
  for (const char* f : {"graph.json", "undirected.dot", "directed.dot"}) {
    try {
      if (io::read_file(r + "/a/fit/" + f) != io::read_file(r + "/a/export/" + f)) ++mismatched;
    } catch (const std::exception&) {
      ++mismatched;
    }
  }
  const double t = sw.seconds();
  return {failures.empty() && mismatched == 0 && t < 300.0,
          std::to_string(failures.size()) + " failed commands, " + std::to_string(mismatched) +
              " differing files across runs and re-export, " + fmt(t) + " s"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"countgraph acceptance checks"};
  std::vector<int> selected;
  std::string cli = COUNTGRAPH_CLI_PATH;
  app.add_option("--criterion", selected, "criterion number(s) 1-10")->check(CLI::Range(1, 10));
  app.add_option("--cli", cli, "path to the countgraph executable");
  CLI11_PARSE(app, argc, argv);
  if (selected.empty())
    for (int i = 1; i <= 10; ++i) selected.push_back(i);

  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"spectral identity", criterion1},
      {"stationary covariance", criterion2},
      {"sampler vs quadrature", criterion3},
      {"gradient check", criterion4},
      {"MCEM monotonicity", criterion5},
      {"structure recovery F1", criterion6},
      {"order selection", criterion7},
      {"selection fixtures", criterion8},
      {"gamma sparsity sweep", criterion9},
      {"CLI round trip", [&] { return criterion10(cli); }},
  };

  int failed = 0;
  for (const int c : selected) {
    Verdict v;
    try {
      v = criteria[c - 1].second();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    failed += v.pass ? 0 : 1;
    std::cout << (v.pass ? "PASS" : "FAIL") << " criterion " << c << " (" << criteria[c - 1].first
              << "): " << v.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
