#pragma once

// Laplace approximation of the marginal log-likelihood log p(Y; theta),
// used by the information criteria.

#include "countgraph/model.hpp"

#include <Eigen/SparseCore>

namespace countgraph {

using SparseMatrix = Eigen::SparseMatrix<double>;

/// Precision of the whole latent path vec(X) (index t*n + i) under the
/// stationary AR(p) prior: initial block plus the transition terms.
SparseMatrix path_precision(const ModelParams& params, int length);

struct MarginalEstimate {
  double log_marginal = 0.0;  // log(Y!) excluded
  Matrix mode;                // posterior mode of X, n x N
  int newton_iterations = 0;
  bool converged = false;
};

/// Newton search for the posterior mode of X, then a Gaussian expansion of
/// l(Y, X, theta) around it:
///   log p(Y) ~ l(Y, X*, theta) + nN/2 log(2 pi) - 1/2 log det H(X*).
MarginalEstimate laplace_log_marginal(const CountPanel& panel, const ModelParams& params,
                                      double log_mean_cap = kDefaultLogMeanCap, int max_iter = 100);

}  // namespace countgraph
