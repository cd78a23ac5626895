#pragma once

// Regularization path, information criteria, and selection of gamma and the
// AR order.

#include "countgraph/mcem.hpp"
#include "countgraph/spectral.hpp"

#include <optional>
#include <string>
#include <vector>

namespace countgraph {

struct InformationScores {
  double loglik = 0.0;           // MC average of l(Y, X, theta_hat), log(Y!) excluded
  double loglik_marginal = 0.0;  // Laplace log p(Y; theta_hat); drives BIC and AICc
  int k = 0;            // effective parameter count
  double bic = 0.0;
  double aicc = 0.0;
  bool aicc_defined = true;  // false when nN <= k + 1
};

/// n q + n + #{|A_k(i,j)| > tol}.
int effective_parameter_count(const ModelParams& params, double tol = kDefaultCausalityTol);

InformationScores information_scores(const CountPanel& panel, const ModelParams& params,
                                     const std::vector<LatentSample>& samples,
                                     double tol = kDefaultCausalityTol, const DensityOptions& opts = {});

struct SweepPoint {
  double gamma = 0.0;
  ModelParams params;
  double loglik_mc = 0.0;
  double loglik_marginal = 0.0;
  double penalty = 0.0;
  double bic = 0.0;
  double aicc = 0.0;
  bool aicc_defined = true;
  GraphResult graph;
  int iterations = 0;
  bool converged = false;
  FitTrace trace;
  bool ok = true;
  std::string error;
};

struct SelectionReport {
  std::size_t chosen_index = 0;
  std::optional<double> chosen_gamma;
  std::optional<int> chosen_order;
  std::vector<SweepPoint> points;
  std::vector<int> orders;  // parallel to points for order selection
  std::string rationale;
};

struct SweepOptions {
  GraphOptions graph;
  /// Start of the path; defaults to initial_params(panel, order).
  std::optional<ModelParams> init;
};

/// One fit per gamma (ascending), each warm-started from the previous fit.
/// Chain seeds are derived from base_config.chain.seed and the point index.
std::vector<SweepPoint> tradeoff_sweep(const CountPanel& panel, int order, const FitConfig& base_config,
                                       const std::vector<double>& gammas, const SweepOptions& opts = {});

/// Minimum BIC; ties go to the larger gamma.
SelectionReport select_gamma(std::vector<SweepPoint> points);

/// Fits every order at gamma = 0 and picks the minimum BIC; AICc is reported.
SelectionReport select_order(const CountPanel& panel, const std::vector<int>& orders,
                             const FitConfig& config, const GraphOptions& graph = {}, int workers = 1);

/// {0} plus 8 log-spaced points on [0.01 gamma_max, gamma_max], where
/// gamma_max is the smallest probe value whose short fit has an empty
/// undirected graph.
std::vector<double> auto_gamma_grid(const CountPanel& panel, int order, const FitConfig& base_config,
                                    const GraphOptions& graph = {});

}  // namespace countgraph
