#include "countgraph/select.hpp"

#include "countgraph/marginal.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <sstream>

namespace countgraph {

int effective_parameter_count(const ModelParams& params, double tol) {
  int k = params.n() * params.q() + params.n();
  for (const auto& a : params.ar()) k += static_cast<int>((a.array().abs() > tol).count());
  return k;
}

InformationScores information_scores(const CountPanel& panel, const ModelParams& params,
                                     const std::vector<LatentSample>& samples, double tol,
                                     const DensityOptions& opts) {
  if (samples.empty()) throw InputError("information scores need at least one sample");
  const StationaryCov stat = stationary_covariance(params);
  double total = 0.0;
  for (const auto& s : samples) total += joint_log_density_parts(panel, s, params, stat, opts).total();

  InformationScores sc;
  sc.loglik = total / static_cast<double>(samples.size());
  sc.loglik_marginal = laplace_log_marginal(panel, params, opts.log_mean_cap).log_marginal;
  sc.k = effective_parameter_count(params, tol);
  const double obs = static_cast<double>(panel.n()) * panel.length();
  sc.bic = -2.0 * sc.loglik_marginal + sc.k * std::log(obs);
  if (obs <= sc.k + 1.0) {
    sc.aicc_defined = false;
    sc.aicc = std::numeric_limits<double>::quiet_NaN();
  } else {
    sc.aicc = -2.0 * sc.loglik_marginal + 2.0 * sc.k + 2.0 * sc.k * (sc.k + 1.0) / (obs - sc.k - 1.0);
  }
  return sc;
}

namespace {

SweepPoint fit_point(const CountPanel& panel, const ModelParams& init, const FitConfig& config,
                     const GraphOptions& graph, const std::optional<Matrix>& chain_init,
                     Matrix* chain_out) {
  SweepPoint pt;
  pt.gamma = config.gamma;
  FitResult fit = run_mcem(panel, init, config, chain_init);
  DensityOptions dens;
  dens.include_initial_block = config.include_initial_block;
  const InformationScores sc = information_scores(panel, fit.params, fit.samples, graph.tol, dens);
  pt.loglik_mc = sc.loglik;
  pt.loglik_marginal = sc.loglik_marginal;
  pt.bic = sc.bic;
  pt.aicc = sc.aicc;
  pt.aicc_defined = sc.aicc_defined;
  pt.penalty = penalty_h1(compute_W(fit.params));
  pt.graph = extract_graph(fit.params, graph);
  pt.iterations = static_cast<int>(fit.trace.records.size());
  pt.converged = fit.converged;
  pt.trace = std::move(fit.trace);
  if (chain_out) *chain_out = fit.chain_state;
  pt.params = std::move(fit.params);
  return pt;
}

}  // namespace

std::vector<SweepPoint> tradeoff_sweep(const CountPanel& panel, int order, const FitConfig& base_config,
                                       const std::vector<double>& gammas, const SweepOptions& opts) {
  if (gammas.empty()) throw InputError("gamma grid is empty");
  for (std::size_t i = 0; i < gammas.size(); ++i) {
    if (!(gammas[i] >= 0.0)) throw InputError("gamma values must be >= 0");
    if (i > 0 && gammas[i] < gammas[i - 1]) throw InputError("gamma grid must be sorted ascending");
  }
  ModelParams warm = opts.init ? *opts.init : initial_params(panel, order, base_config.sigma_init);
  std::optional<Matrix> chain;
  std::vector<SweepPoint> points;
  for (std::size_t i = 0; i < gammas.size(); ++i) {
    FitConfig cfg = base_config;
    cfg.gamma = gammas[i];
    cfg.chain.seed = derive_seed(base_config.chain.seed, 1000 + i);
    try {
      Matrix state;
      SweepPoint pt = fit_point(panel, warm, cfg, opts.graph, chain, &state);
      warm = pt.params;
      chain = std::move(state);
      points.push_back(std::move(pt));
    } catch (const std::exception& e) {
      SweepPoint failed;
      failed.gamma = gammas[i];
      failed.ok = false;
      failed.error = e.what();
      points.push_back(std::move(failed));
    }
  }
  return points;
}

SelectionReport select_gamma(std::vector<SweepPoint> points) {
  SelectionReport report;
  bool found = false;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!points[i].ok || !std::isfinite(points[i].bic)) continue;
    if (!found) {
      report.chosen_index = i;
      found = true;
      continue;
    }
    const auto& best = points[report.chosen_index];
    if (points[i].bic < best.bic || (points[i].bic == best.bic && points[i].gamma > best.gamma)) {
      report.chosen_index = i;
    }
  }
  if (!found) throw InputError("no valid sweep point to select from");
  const auto& chosen = points[report.chosen_index];
  report.chosen_gamma = chosen.gamma;
  std::ostringstream os;
  os << "minimum BIC " << chosen.bic << " at gamma " << chosen.gamma << " among " << points.size()
     << " points";
  report.rationale = os.str();
  report.points = std::move(points);
  return report;
}

SelectionReport select_order(const CountPanel& panel, const std::vector<int>& orders,
                             const FitConfig& config, const GraphOptions& graph, int workers) {
  if (orders.empty()) throw InputError("order list is empty");
  for (const int p : orders) {
    if (p < 0) throw InputError("AR orders must be >= 0");
  }
  FitConfig cfg = config;
  cfg.gamma = 0.0;

  auto job = [&](std::size_t idx) {
    const int p = orders[idx];
    FitConfig local = cfg;
    local.chain.seed = derive_seed(config.chain.seed, 2000 + static_cast<std::uint64_t>(p));
    try {
      return fit_point(panel, initial_params(panel, p, cfg.sigma_init), local, graph, {}, nullptr);
    } catch (const std::exception& e) {
      SweepPoint failed;
      failed.ok = false;
      failed.error = e.what();
      return failed;
    }
  };

  std::vector<SweepPoint> points(orders.size());
  const std::size_t batch = static_cast<std::size_t>(std::max(1, workers));
  for (std::size_t start = 0; start < orders.size(); start += batch) {
    const std::size_t end = std::min(orders.size(), start + batch);
    if (end - start == 1) {
      points[start] = job(start);
      continue;
    }
    std::vector<std::future<SweepPoint>> futures;
    for (std::size_t i = start; i < end; ++i) futures.push_back(std::async(std::launch::async, job, i));
    for (std::size_t i = start; i < end; ++i) points[i] = futures[i - start].get();
  }

  SelectionReport report;
  std::optional<std::size_t> by_bic, by_aicc;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!points[i].ok) continue;
    if (!by_bic || points[i].bic < points[*by_bic].bic) by_bic = i;
    if (points[i].aicc_defined && (!by_aicc || points[i].aicc < points[*by_aicc].aicc)) by_aicc = i;
  }
  if (!by_bic) throw NumericalError("every order failed to fit");
  report.chosen_index = *by_bic;
  report.chosen_order = orders[*by_bic];
  std::ostringstream os;
  os << "BIC selects p=" << orders[*by_bic];
  if (by_aicc) {
    os << "; AICc selects p=" << orders[*by_aicc];
    os << (*by_aicc == *by_bic ? " (criteria agree)" : " (criteria disagree, BIC decides)");
  }
  report.rationale = os.str();
  report.orders = orders;
  report.points = std::move(points);
  return report;
}

std::vector<double> auto_gamma_grid(const CountPanel& panel, int order, const FitConfig& base_config,
                                    const GraphOptions& graph) {
  static const double probes[] = {0.01, 0.03, 0.1, 0.3, 1.0, 3.0, 10.0, 30.0, 100.0};
  FitConfig cfg = base_config;
  cfg.max_iter = std::min(base_config.max_iter, 5);
  ModelParams warm = initial_params(panel, order, cfg.sigma_init);
  double gamma_max = probes[std::size(probes) - 1];
  for (std::size_t i = 0; i < std::size(probes); ++i) {
    cfg.gamma = probes[i];
    cfg.chain.seed = derive_seed(base_config.chain.seed, 3000 + i);
    try {
      FitResult fit = run_mcem(panel, warm, cfg);
      warm = fit.params;
      if (extract_graph(fit.params, graph).undirected.empty()) {
        gamma_max = probes[i];
        break;
      }
    } catch (const NumericalError&) {
      continue;
    }
  }
  std::vector<double> grid{0.0};
  const double lo = std::log(0.01 * gamma_max), hi = std::log(gamma_max);
  for (int i = 0; i < 8; ++i) grid.push_back(std::exp(lo + (hi - lo) * i / 7.0));
  return grid;
}

}  // namespace countgraph
