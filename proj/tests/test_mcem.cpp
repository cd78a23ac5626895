#include "countgraph/mcem.hpp"
#include "countgraph/simulate.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace countgraph;

namespace {

ModelParams stable_model(Rng& rng, int n, int p, int q) {
  std::vector<Matrix> ar(p, Matrix(n, n));
  for (auto& a : ar)
    for (int i = 0; i < n * n; ++i) a.data()[i] = 0.3 * rng.normal();
  Matrix beta(q, n);
  for (int i = 0; i < q * n; ++i) beta.data()[i] = 0.2 * rng.normal();
  Vector sigma(n);
  for (int i = 0; i < n; ++i) sigma[i] = 0.4 + 0.5 * rng.uniform();
  ModelParams m(beta, ar, sigma);
  const double r = p ? m.spectral_radius() : 0.0;
  if (r > 0.8)
    for (int k = 1; k <= p; ++k) m.ar()[k - 1] *= std::pow(0.8 / r, k);
  return m;
}

struct Fixture {
  CountPanel panel;
  std::vector<LatentSample> samples;
  ModelParams params;
};

Fixture make_fixture(std::uint64_t seed, int n, int p, int len, int m) {
  Rng rng(seed);
  Fixture f;
  f.params = stable_model(rng, n, p, 2);
  Matrix z(len, 2);
  for (int t = 0; t < len; ++t) z.row(t) << 1.0, std::sin(0.3 * t);
  f.params.beta().row(0).setConstant(1.0);
  TruthSpec spec;
  spec.params = f.params;
  spec.length = len;
  spec.seed = seed + 1;
  spec.covariates = z;
  f.panel = generate(spec).panel;
  for (int s = 0; s < m; ++s) {
    Matrix x(n, len);
    for (int i = 0; i < x.size(); ++i) x.data()[i] = 0.5 * rng.normal();
    f.samples.push_back({x});
  }
  return f;
}

}  // namespace

TEST(Penalty, Examples) {
  EXPECT_EQ(penalty_h1(WStack{{Matrix::Constant(1, 1, -3.0), Matrix::Constant(1, 1, 2.0)}}), 0.0);
  Matrix d = Matrix::Zero(3, 3);
  d.diagonal() << 1, 2, 3;
  EXPECT_EQ(penalty_h1(WStack{{d, d}}), 0.0);
  Matrix w0(2, 2), w1(2, 2);
  w0 << -1, 0.2, 0.2, -1;
  w1 << 0, -0.5, 0.1, 0;
  EXPECT_NEAR(penalty_h1(WStack{{w0, w1}}), 1.0, 1e-15);
}

TEST(Penalty, ExactlyZeroForDiagonalDynamics) {
  // large diagonal entries of mixed scale must not leave rounding residue
  Matrix a = Matrix::Zero(10, 10);
  for (int i = 0; i < 10; ++i) a(i, i) = (i % 2 ? -0.37 : 0.41) * (1.0 + 0.1 * i);
  const ModelParams m(Matrix::Zero(1, 10), {a, 0.3 * a}, Vector::LinSpaced(10, 0.07, 0.13));
  EXPECT_EQ(penalty_h1(compute_W(m)), 0.0);
}

TEST(EstimateQ, DefinitionAndLinearity) {
  const Fixture f = make_fixture(1, 2, 1, 12, 5);
  double mean = 0.0;
  for (const auto& s : f.samples) mean += joint_log_density(f.panel, s, f.params);
  mean /= 5.0;
  EXPECT_NEAR(estimate_Q(f.panel, f.samples, f.params, 0.0), mean, 1e-9);
  const double h1 = penalty_h1(compute_W(f.params));
  EXPECT_NEAR(estimate_Q(f.panel, f.samples, f.params, 2.0), mean - 2.0 * h1, 1e-9);
  const std::vector<LatentSample> one{f.samples[0]};
  EXPECT_NEAR(estimate_Q(f.panel, one, f.params, 0.7),
              joint_log_density(f.panel, f.samples[0], f.params) - 0.7 * h1, 1e-9);
  EXPECT_THROW(estimate_Q(f.panel, {}, f.params, 0.0), InputError);
}

TEST(SufficientStats, QMatchesDirectRoute) {
  for (int p : {0, 1, 2, 3}) {
    const Fixture f = make_fixture(10 + p, 3, p, 15, 4);
    const SufficientStats st = SufficientStats::from_samples(f.panel, f.samples, p);
    for (bool init : {true, false}) {
      DensityOptions opt;
      opt.include_initial_block = init;
      const double direct = estimate_Q(f.panel, f.samples, f.params, 0.3, opt);
      EXPECT_NEAR(q_from_stats(f.panel, st, f.params, 0.3, init), direct, 1e-8 * std::abs(direct)) << p;
    }
  }
}

TEST(Objective, ValueSplitsIntoPoissonAndGaussianParts) {
  const Fixture f = make_fixture(3, 3, 2, 14, 3);
  const SufficientStats st = SufficientStats::from_samples(f.panel, f.samples, 2);
  GaussianBlockObjective obj(st, 0.4, 1e-12, true, 1e-3);
  const double total = obj.value(GaussianBlockObjective::pack(f.params)) +
                       poisson_block_value(f.panel, f.params.beta(), st.exp_mean) + st.xy_mean;
  EXPECT_NEAR(total, q_from_stats(f.panel, st, f.params, 0.4, true), 1e-7);
}

TEST(Objective, PackUnpackRoundTrip) {
  Rng rng(4);
  const ModelParams m = stable_model(rng, 3, 2, 1);
  ModelParams back = ModelParams::zeros(3, 2, 1);
  back.beta() = m.beta();
  GaussianBlockObjective::unpack(GaussianBlockObjective::pack(m), back);
  EXPECT_LE((back.to_vector() - m.to_vector()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Objective, GradientMatchesFiniteDifferences) {
  for (int p : {1, 2}) {
    const Fixture f = make_fixture(20 + p, 3, p, 20, 4);
    const SufficientStats st = SufficientStats::from_samples(f.panel, f.samples, p);
    GaussianBlockObjective obj(st, 0.5, 1e-2, true, 1e-3);
    Rng rng(7);
    for (int trial = 0; trial < 5; ++trial) {
      const ModelParams th = stable_model(rng, 3, p, 2);
      const Vector x = GaussianBlockObjective::pack(th);
      Vector g;
      obj.value(x, &g);
      Vector fd(x.size());
      for (int j = 0; j < x.size(); ++j) {
        const double h = 1e-5 * (1.0 + std::abs(x[j]));
        Vector xp = x, xm = x;
        xp[j] += h;
        xm[j] -= h;
        fd[j] = (obj.value(xp) - obj.value(xm)) / (2 * h);
      }
      EXPECT_LE((g - fd).norm() / std::max(1.0, fd.norm()), 1e-5) << "p=" << p;
    }
  }
}

TEST(Objective, NonStationaryPointIsInfeasible) {
  const Fixture f = make_fixture(5, 2, 1, 10, 2);
  const SufficientStats st = SufficientStats::from_samples(f.panel, f.samples, 1);
  GaussianBlockObjective obj(st, 0.0, 1e-8, true, 1e-3);
  ModelParams bad = f.params;
  bad.ar()[0] = Matrix::Identity(2, 2) * 1.01;
  EXPECT_EQ(obj.value(GaussianBlockObjective::pack(bad)), -std::numeric_limits<double>::infinity());
}

TEST(PoissonFit, MatchesBisectionOracle) {
  // n=1, p=0, z=[1], one latent sample: beta solves sum_t (y_t - e^{beta + x_t}) = 0
  CountMatrix y(1, 6);
  y << 3, 0, 5, 2, 7, 1;
  Matrix x(1, 6);
  x << 0.1, -0.4, 0.3, 0.0, 0.5, -0.2;
  const CountPanel panel = make_panel(y, Matrix::Ones(6, 1));
  const std::vector<LatentSample> samples{{x}};
  auto score = [&](double b) {
    double s = 0;
    for (int t = 0; t < 6; ++t) s += y(0, t) - std::exp(b + x(0, t));
    return s;
  };
  double lo = -10, hi = 10;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (score(mid) > 0 ? lo : hi) = mid;
  }
  const ModelParams init(Matrix::Zero(1, 1), {}, Vector::Ones(1));
  const MStepResult r = m_step(panel, samples, init, 0.0);
  EXPECT_NEAR(r.params.beta()(0, 0), 0.5 * (lo + hi), 1e-8);
  EXPECT_GE(r.q_after, r.q_before);
}

TEST(MStep, NeverDecreasesQ) {
  for (int p : {0, 1, 2}) {
    const Fixture f = make_fixture(30 + p, 3, p, 25, 6);
    for (double gamma : {0.0, 0.1, 2.0}) {
      const MStepResult r = m_step(f.panel, f.samples, f.params, gamma);
      EXPECT_GE(r.q_after, r.q_before - 1e-9 * std::abs(r.q_before));
      EXPECT_NEAR(r.q_after, estimate_Q(f.panel, f.samples, r.params, gamma), 1e-7 * std::abs(r.q_after));
      EXPECT_TRUE(validate_params(r.params).ok());
    }
  }
}

TEST(MStep, HugePenaltyZeroesOffDiagonals) {
  const Fixture f = make_fixture(40, 3, 2, 25, 6);
  const MStepResult r = m_step(f.panel, f.samples, f.params, 1e6);
  for (const auto& w : compute_W(r.params).mats)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        if (i != j) {
          EXPECT_LT(std::abs(w(i, j)), 1e-6);
        }
}

TEST(MStep, RespectsSigmaFloorAndStationarity) {
  const Fixture f = make_fixture(41, 2, 1, 20, 4);
  MStepSettings s;
  s.sigma_min = 0.3;
  const MStepResult r = m_step(f.panel, f.samples, f.params, 0.0, s);
  EXPECT_GE(r.params.sigma().minCoeff(), 0.3 - 1e-12);
  EXPECT_LE(r.params.spectral_radius(), 1.0 - s.stationarity_margin + 1e-12);
}

TEST(Projection, ScalesIntoFeasibleRegion) {
  Matrix a1(2, 2), a2(2, 2);
  a1 << 0.9, 0.4, 0.3, 0.8;
  a2 << 0.2, 0.0, 0.1, 0.3;
  ModelParams m(Matrix::Zero(0, 2), {a1, a2}, Vector(Eigen::Vector2d(1e-6, 1.0)));
  ASSERT_GT(m.spectral_radius(), 1.0);
  const ModelParams pr = project_feasible(m, 1e-3, 1e-4);
  EXPECT_NEAR(pr.spectral_radius(), 1.0 - 1e-3, 1e-9);
  EXPECT_NEAR(pr.sigma()[0], 1e-4, 1e-18);
  // A_k scaled by c^k keeps the companion eigenvectors
  const double c = pr.ar(1)(0, 0) / a1(0, 0);
  EXPECT_LE((pr.ar(2) - c * c * a2).cwiseAbs().maxCoeff(), 1e-12);
  const ModelParams same = project_feasible(pr, 1e-3, 1e-4);
  EXPECT_LE((same.to_vector() - pr.to_vector()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Increment, ReverseImportanceEstimate) {
  const std::vector<double> flat(100, 0.25);
  const IncrementEstimate e = reverse_importance_increment(flat);
  EXPECT_NEAR(e.value, -0.25, 1e-14);
  EXPECT_NEAR(e.se, 0.0, 1e-14);
  std::vector<double> w;
  Rng rng(2);
  for (int i = 0; i < 400; ++i) w.push_back(0.1 * rng.normal());
  double s = 0;
  for (double v : w) s += std::exp(v);
  const IncrementEstimate e2 = reverse_importance_increment(w);
  EXPECT_NEAR(e2.value, -std::log(s / w.size()), 1e-12);
  EXPECT_GT(e2.se, 0.0);
}

TEST(InitialParams, PoissonRegressionAndDefaults) {
  const Fixture f = make_fixture(50, 2, 1, 30, 1);
  const ModelParams init = initial_params(f.panel, 2, 0.5);
  EXPECT_EQ(init.p(), 2);
  for (const auto& a : init.ar()) EXPECT_EQ(a.norm(), 0.0);
  EXPECT_EQ(init.sigma(), Vector::Constant(2, 0.5));
  // score equations of the X-free Poisson regression vanish
  const Matrix eta = f.panel.linear_predictor(init.beta());
  for (int i = 0; i < 2; ++i) {
    Vector score = Vector::Zero(2);
    for (int t = 0; t < 30; ++t)
      score += (static_cast<double>(f.panel.counts(i, t)) - std::exp(eta(i, t))) *
               f.panel.covariates[i].row(t).transpose();
    EXPECT_LT(score.cwiseAbs().maxCoeff(), 1e-6);
  }
}

TEST(RunMcem, LargeDeltaStopsAfterOneIteration) {
  const Fixture f = make_fixture(60, 2, 1, 30, 1);
  FitConfig cfg;
  cfg.tol = 10.0;
  cfg.chain.m = 20;
  cfg.chain.burn_in = 10;
  const FitResult r = run_mcem(f.panel, initial_params(f.panel, 1), cfg);
  EXPECT_EQ(r.trace.records.size(), 1u);
  EXPECT_TRUE(r.converged);
}

TEST(RunMcem, DeterministicTraceAndStoppingRule) {
  const Fixture f = make_fixture(61, 2, 1, 40, 1);
  FitConfig cfg;
  cfg.gamma = 0.05;
  cfg.max_iter = 6;
  cfg.tol = 0.02;
  cfg.chain.m = 40;
  cfg.chain.burn_in = 20;
  cfg.chain.seed = 77;
  const FitResult a = run_mcem(f.panel, initial_params(f.panel, 1), cfg);
  const FitResult b = run_mcem(f.panel, initial_params(f.panel, 1), cfg);
  ASSERT_EQ(a.trace.records.size(), b.trace.records.size());
  for (std::size_t k = 0; k < a.trace.records.size(); ++k) {
    EXPECT_EQ(a.trace.records[k].theta, b.trace.records[k].theta);
    EXPECT_EQ(a.trace.records[k].q_after, b.trace.records[k].q_after);
  }
  EXPECT_LE(a.trace.records.size(), 6u);
  const auto& last = a.trace.records.back();
  EXPECT_TRUE(last.rel_change <= cfg.tol || a.trace.records.size() == 6u);
  EXPECT_EQ(a.converged, last.rel_change <= cfg.tol);
  EXPECT_TRUE(validate_params(a.params).ok());
  EXPECT_EQ(a.samples.size(), 40u);
  for (const auto& r : a.trace.records) {
    EXPECT_GE(r.q_after, r.q_before - 1e-9 * std::abs(r.q_before));
    EXPECT_EQ(r.increment.has_value(), r.iteration > 1);
  }
}

TEST(RunMcem, RejectsBadInput) {
  const Fixture f = make_fixture(62, 2, 1, 4, 1);
  FitConfig cfg;
  EXPECT_THROW(run_mcem(f.panel, initial_params(f.panel, 2), cfg), InputError);
  cfg.gamma = -1;
  EXPECT_THROW(run_mcem(f.panel, initial_params(f.panel, 1), cfg), InputError);
  cfg = FitConfig{};
  cfg.tol = 0;
  EXPECT_THROW(run_mcem(f.panel, initial_params(f.panel, 1), cfg), InputError);
}
