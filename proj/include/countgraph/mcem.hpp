#pragma once

// Monte Carlo EM with the l1-type penalty on the off-diagonal entries of the
// inverse-spectral coefficient matrices W_0..W_p.

#include "countgraph/model.hpp"
#include "countgraph/sampler.hpp"
#include "countgraph/spectral.hpp"

#include <optional>
#include <string>
#include <vector>

namespace countgraph {

/// h1 = sum_{j>i} sum_k |W_k(i,j)| + |W_k(j,i)|.
double penalty_h1(const WStack& w);

/// Q_m(theta) = mean_s l(Y, X_s, theta) - gamma h1(W(theta)).
double estimate_Q(const CountPanel& panel, const std::vector<LatentSample>& samples,
                  const ModelParams& params, double gamma, const DensityOptions& opts = {});

struct MStepSettings {
  int max_inner = 300;
  double grad_tol = 1e-7;
  /// |x| is replaced by sqrt(x^2 + smoothing^2).
  double smoothing = 1e-8;
  /// Solve a short sequence of larger smoothing levels first.
  bool continuation = true;
  int passes = 2;
  double sigma_min = 1e-4;
  double stationarity_margin = 1e-3;
  int newton_max_iter = 100;
};

/// Everything Q_m needs from the E-step samples.
struct SufficientStats {
  int n = 0, p = 0, length = 0, m = 0;
  Matrix lag_moments;    // (p+1)n square: mean_s sum_{t>p} z_t z_t', z_t = [X(t); ..; X(t-p)]
  Matrix initial_moment; // np square: mean_s x0 x0', x0 = [X(p); ..; X(1)]
  Matrix exp_mean;       // n x N: mean_s exp(X)
  double xy_mean = 0.0;  // mean_s sum X .* Y

  static SufficientStats from_samples(const CountPanel& panel, const std::vector<LatentSample>& samples,
                                      int p);
};

/// Smooth part of Q_m over (A_1..A_p, log sigma), plus the smoothed penalty.
/// Packing: [vec(A_1); ..; vec(A_p); log sigma] (column-major vec).
class GaussianBlockObjective {
 public:
  GaussianBlockObjective(const SufficientStats& stats, double gamma, double smoothing,
                         bool include_initial_block, double stationarity_margin);

  int dimension() const { return p_ * n_ * n_ + n_; }
  /// Value to maximize; -inf when the packed point is non-stationary.
  double value(const Vector& packed, Vector* grad = nullptr) const;

  void set_smoothing(double eps) { smoothing_ = eps; }

  static Vector pack(const ModelParams& params);
  /// Writes A and sigma from `packed` into params (beta untouched).
  static void unpack(const Vector& packed, ModelParams& params);

 private:
  const SufficientStats& stats_;
  double gamma_;
  double smoothing_;
  bool include_initial_;
  double margin_;
  int n_, p_;
};

/// Poisson part for beta: sum_t [eta_t y_t - exp(eta_t) E_t] per series.
double poisson_block_value(const CountPanel& panel, const Matrix& beta, const Matrix& exp_mean);

/// Newton solve for beta_i with per-time multipliers E_t (exp-mean offsets).
Vector fit_poisson_series(const Matrix& z, const Eigen::Ref<const Eigen::Matrix<long long, 1, Eigen::Dynamic>>& y,
                          const Vector& multipliers, Vector beta0, int max_iter = 100);

struct MStepResult {
  ModelParams params;
  double q_before = 0.0;  // Q_m on the sufficient statistics, exact penalty
  double q_after = 0.0;
  bool flagged = false;
  std::string message;
};

/// Q_m evaluated through the sufficient statistics (exact penalty).
double q_from_stats(const CountPanel& panel, const SufficientStats& stats, const ModelParams& params,
                    double gamma, bool include_initial_block = true);

MStepResult m_step(const CountPanel& panel, const SufficientStats& stats, const ModelParams& init,
                   double gamma, const MStepSettings& settings = {}, bool include_initial_block = true);

MStepResult m_step(const CountPanel& panel, const std::vector<LatentSample>& samples,
                   const ModelParams& init, double gamma, const MStepSettings& settings = {},
                   bool include_initial_block = true);

/// Scales A_k by c^k so the companion spectral radius is at most 1 - margin;
/// raises sigma to sigma_min.
ModelParams project_feasible(ModelParams params, double margin, double sigma_min);

struct FitConfig {
  double gamma = 0.0;
  double tol = 1e-3;  // delta, relative change of theta
  int max_iter = 100;
  ChainConfig chain;
  MStepSettings mstep;
  bool include_initial_block = true;
  double sigma_init = 0.5;
  /// Consecutive significantly negative objective increments before aborting.
  int divergence_patience = 5;

  void validate() const;
};

struct IterationRecord {
  int iteration = 0;
  Vector theta;             // theta^(k+1) after the M-step
  double q_before = 0.0;    // Q_m(theta^(k); theta^(k))
  double q_after = 0.0;     // Q_m(theta^(k+1); theta^(k))
  double penalty = 0.0;     // h1 at theta^(k+1)
  double loglik_mc = 0.0;   // mean_s l(Y, X_s, theta^(k)) on this iteration's samples
  double rel_change = 0.0;
  Vector acceptance;
  /// Estimated change of the penalized marginal objective from theta^(k-1)
  /// to theta^(k), from this iteration's (fresh) samples. Not set at k = 1.
  std::optional<double> increment;
  double increment_se = 0.0;
  bool mstep_flagged = false;
};

struct FitTrace {
  std::vector<IterationRecord> records;
};

struct FitResult {
  ModelParams params;
  FitTrace trace;
  bool converged = false;
  /// Samples drawn at the returned params (for scoring).
  std::vector<LatentSample> samples;
  Matrix chain_state;
};

class DivergenceError : public NumericalError {
 public:
  DivergenceError(const std::string& what, FitTrace trace)
      : NumericalError(what), trace_(std::move(trace)) {}
  const FitTrace& trace() const { return trace_; }

 private:
  FitTrace trace_;
};

/// theta^(1): beta from independent Poisson regressions ignoring X, A = 0,
/// sigma = sigma_init.
ModelParams initial_params(const CountPanel& panel, int p, double sigma_init = 0.5);

FitResult run_mcem(const CountPanel& panel, const ModelParams& init, const FitConfig& config,
                   const std::optional<Matrix>& chain_init = {});

/// -log mean exp(w) increment estimate (draws from the new posterior) with batch-means standard error.
struct IncrementEstimate {
  double value = 0.0;
  double se = 0.0;
};
IncrementEstimate reverse_importance_increment(const std::vector<double>& log_ratio_old_minus_new,
                                               int batches = 20);

}  // namespace countgraph
