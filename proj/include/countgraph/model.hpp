#pragma once

// Core types for the parameter-driven Poisson model with an AR(p) Gaussian
// latent process:
//
//   Y_i(t) | X_i(t) ~ Poisson(exp(z_{t,i}' beta_i + X_i(t)))
//   X(t) = sum_k A_k X(t-k) + eps(t),  eps(t) ~ N(0, diag(sigma^2))
//
// Time indices in the public API are 0-based column indices (column c holds
// time t = c + 1).

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace countgraph {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using CountMatrix = Eigen::Matrix<long long, Eigen::Dynamic, Eigen::Dynamic>;

/// Bad user input (shapes, ranges, parse failures).
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Numerical failure: overflow of log-means, non-stationary or non-PD
/// quantities, divergence.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kDefaultLogMeanCap = 700.0;

class ModelParams {
 public:
  ModelParams() = default;

  /// beta is q x n, every ar matrix n x n, sigma length n. Throws InputError
  /// on inconsistent shapes. Positivity and stationarity are checked by
  /// validate_params.
  ModelParams(Matrix beta, std::vector<Matrix> ar, Vector sigma);

  /// All-zero AR, sigma = sigma0, beta = 0.
  static ModelParams zeros(int n, int p, int q, double sigma0 = 1.0);

  int n() const { return static_cast<int>(sigma_.size()); }
  int p() const { return static_cast<int>(ar_.size()); }
  int q() const { return static_cast<int>(beta_.rows()); }

  const Matrix& beta() const { return beta_; }
  const std::vector<Matrix>& ar() const { return ar_; }
  const Matrix& ar(int lag) const { return ar_.at(lag - 1); }  // lag in 1..p
  const Vector& sigma() const { return sigma_; }

  Matrix& beta() { return beta_; }
  std::vector<Matrix>& ar() { return ar_; }
  Vector& sigma() { return sigma_; }

  Vector noise_variance() const { return sigma_.array().square(); }
  /// Sigma^{-1} diagonal.
  Vector noise_precision() const { return sigma_.array().square().inverse(); }

  /// np x np companion matrix [A_1 ... A_p; I 0 ...]. Empty when p = 0.
  Matrix companion() const;
  double spectral_radius() const;

  /// theta = vec([beta' A_1 ... A_p sigma]) (column-major), length n(q+pn+1).
  Vector to_vector() const;
  static ModelParams from_vector(const Vector& theta, int n, int p, int q);
  static std::size_t parameter_count(int n, int p, int q) {
    return static_cast<std::size_t>(n) * static_cast<std::size_t>(q + p * n + 1);
  }

 private:
  Matrix beta_;
  std::vector<Matrix> ar_;
  Vector sigma_;
};

struct ValidationReport {
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
  std::string summary() const;
};

ValidationReport validate_params(const ModelParams& params);
/// Throws NumericalError with the report summary if params are invalid.
void require_valid(const ModelParams& params);

struct CountPanel {
  CountMatrix counts;               // n x N
  std::vector<Matrix> covariates;   // one N x q matrix per series
  std::vector<std::string> labels;  // size n

  int n() const { return static_cast<int>(counts.rows()); }
  int length() const { return static_cast<int>(counts.cols()); }
  int q() const { return covariates.empty() ? 0 : static_cast<int>(covariates.front().cols()); }

  /// z_{t,i}' beta_i for every (i, t), n x N.
  Matrix linear_predictor(const Matrix& beta) const;

  /// Throws InputError on negative counts, non-finite covariates or shape
  /// mismatches.
  void validate() const;
};

/// Builds a panel where every series shares the same covariate design.
CountPanel make_panel(CountMatrix counts, const Matrix& shared_covariates,
                      std::vector<std::string> labels = {});

struct LatentSample {
  Matrix values;  // n x N
};

/// Stationary covariance of the stacked state [X(t); X(t-1); ...; X(t-p+1)].
class StationaryCov {
 public:
  StationaryCov() = default;
  StationaryCov(Matrix block, int n);

  /// R_XX-stack(0), np x np, block (a, b) = R_XX(b - a) (0-based blocks).
  const Matrix& block() const { return block_; }
  /// Inverse of block().
  const Matrix& precision() const { return precision_; }
  double log_det() const { return log_det_; }
  int n() const { return n_; }
  int p() const { return n_ == 0 ? 0 : static_cast<int>(block_.rows()) / n_; }

  /// Lag-h autocovariance E[X(t) X(t-h)'] for 0 <= h < p.
  Matrix autocov(int h) const;

  /// Precision block between X(a) and X(b) of the initial block written in
  /// time order [X(1); ...; X(p)], with 1 <= a, b <= p.
  Matrix lambda(int a, int b) const;

  /// Covariance of [X(1); ...; X(p)] in time order.
  Matrix time_ordered_cov() const;

 private:
  Matrix block_;
  Matrix precision_;
  double log_det_ = 0.0;
  int n_ = 0;
};

struct StationarySolveOptions {
  /// Largest (np)^2 for which the Kronecker system is solved densely.
  int dense_limit = 4096;
};

StationaryCov stationary_covariance(const ModelParams& params,
                                    const StationarySolveOptions& opts = {});

/// Dense Kronecker route: vec(R) = (I - A kron A)^{-1} vec(Q).
Matrix lyapunov_kronecker(const Matrix& a, const Matrix& q);
/// Smith doubling route for R = A R A' + Q.
Matrix lyapunov_doubling(const Matrix& a, const Matrix& q);

struct DensityOptions {
  double log_mean_cap = kDefaultLogMeanCap;
  bool include_initial_block = true;
};

/// Parts of the joint log-density l(Y, X, theta); log(Y!) is excluded.
struct DensityParts {
  double poisson = 0.0;
  double transitions = 0.0;
  double initial = 0.0;
  double total() const { return poisson + transitions + initial; }
};

DensityParts joint_log_density_parts(const CountPanel& panel, const LatentSample& latent,
                                     const ModelParams& params, const StationaryCov& stat,
                                     const DensityOptions& opts = {});

double joint_log_density(const CountPanel& panel, const LatentSample& latent,
                         const ModelParams& params, const DensityOptions& opts = {});

double conditional_mean(const Vector& z, const Vector& beta_i, double x,
                        double cap = kDefaultLogMeanCap);

/// Rows t = 1..N: [1, t, cos(2 pi t / period), sin(2 pi t / period)].
Matrix build_covariates(int length, double period);

}  // namespace countgraph
