#pragma once

// Single-site Metropolis-Hastings sampler for P(X | Y, theta).
//
// Each site X_i(t) is proposed from its Gaussian full conditional under the
// AR(p) prior (three regimes: initial block t <= p, interior, tail block
// t > N - p). Because that proposal does not depend on the current value,
// the Hastings ratio reduces to the Poisson likelihood ratio.

#include "countgraph/model.hpp"
#include "countgraph/rng.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace countgraph {

enum class ProposalRegime { kInitialBlock, kInterior, kTailBlock };

/// Regime of 1-based time t for a series of length `length` and AR order p.
ProposalRegime proposal_regime(int t, int length, int p);

struct ProposalParams {
  Vector mean;       // mu_t
  Matrix cov;        // Sigma_t
  Matrix precision;  // Sigma_t^{-1}
  ProposalRegime regime = ProposalRegime::kInterior;
};

/// Precomputed products of (A, Sigma^{-1}, Lambda) used by every proposal.
class ConditionalPrior {
 public:
  ConditionalPrior(const ModelParams& params, const StationaryCov& stat, int length);

  int length() const { return length_; }
  /// Precision of X(t) given all other X, 1-based t.
  const Matrix& precision(int t) const;
  /// 1 / diag(precision(t)).
  const Vector& site_variance(int t) const;
  /// Linear term b_t with mu_t = precision(t)^{-1} b_t; does not depend on X(t).
  Vector linear_term(int t, const Matrix& x) const;

 private:
  const Matrix& precision_ref(int t) const;

  int n_ = 0, p_ = 0, length_ = 0;
  Vector s_;                                 // Sigma^{-1} diagonal
  std::vector<Matrix> sa_;                   // Sigma^{-1} A_i, index i-1
  std::vector<Matrix> ats_;                  // A_i' Sigma^{-1}
  std::vector<std::vector<Matrix>> atsa_;    // [j-1][i-1] = A_j' Sigma^{-1} A_i
  std::vector<std::vector<Matrix>> lambda_;  // [a-1][b-1], time-ordered
  Matrix interior_;
  std::vector<Matrix> initial_;  // t = 1..p
  std::vector<Matrix> tail_;     // t = N-p+1..N, index t-(N-p+1)
  Vector interior_var_;
  std::vector<Vector> initial_var_, tail_var_;
};

/// Time index `col` is 0-based (time t = col + 1).
ProposalParams proposal_params(int col, const Matrix& x, const ModelParams& params,
                               const StationaryCov& stat);

/// log of the Poisson kernel ratio exp(x y - e^{offset+x}) for x_new vs x_cur.
double acceptance_log_ratio(double x_new, double x_cur, long long y, double offset,
                            double cap = kDefaultLogMeanCap);

enum class ScanOrder { kSequential, kRandomTime };

struct ChainConfig {
  int m = 200;
  int burn_in = 200;
  int thin = 1;
  std::uint64_t seed = 1;
  ScanOrder scan = ScanOrder::kSequential;
  /// Diagnostic: accept every proposal, turning the chain into a Gibbs
  /// sampler for the prior.
  bool ignore_likelihood = false;
  double log_mean_cap = kDefaultLogMeanCap;

  void validate() const;
};

struct SamplerResult {
  std::vector<LatentSample> samples;
  Vector acceptance_rate;  // per series, over all sweeps
  Matrix final_state;
};

/// Runs burn_in + m * thin sweeps from `init` (zeros when absent).
SamplerResult sample_latent(const CountPanel& panel, const ModelParams& params,
                            const ChainConfig& config, const std::optional<Matrix>& init = {});

}  // namespace countgraph
