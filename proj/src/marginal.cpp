#include "countgraph/marginal.hpp"

#include <Eigen/SparseCholesky>

#include <cmath>
#include <limits>

namespace countgraph {

SparseMatrix path_precision(const ModelParams& params, int length) {
  const int n = params.n(), p = params.p();
  if (length < p) throw InputError("path length shorter than AR order");
  const Vector s = params.sigma().array().square().inverse();
  std::vector<Eigen::Triplet<double>> trip;

  if (p > 0) {
    const StationaryCov stat = stationary_covariance(params);
    for (int a = 1; a <= p; ++a) {
      for (int b = 1; b <= p; ++b) {
        const Matrix l = stat.lambda(a, b);
        for (int j = 0; j < n; ++j)
          for (int i = 0; i < n; ++i) trip.emplace_back((a - 1) * n + i, (b - 1) * n + j, l(i, j));
      }
    }
  }

  // residual e_t = sum_k C_k x_{t-k}, C_0 = I, C_k = -A_k; adds C_k' S C_l
  std::vector<Matrix> c(p + 1);
  c[0] = Matrix::Identity(n, n);
  for (int k = 1; k <= p; ++k) c[k] = -params.ar(k);
  std::vector<std::vector<Matrix>> prod(p + 1, std::vector<Matrix>(p + 1));
  for (int k = 0; k <= p; ++k)
    for (int l = 0; l <= p; ++l) prod[k][l] = c[k].transpose() * s.asDiagonal() * c[l];
  for (int t = p; t < length; ++t) {
    for (int k = 0; k <= p; ++k) {
      for (int l = 0; l <= p; ++l) {
        const Matrix& m = prod[k][l];
        for (int j = 0; j < n; ++j)
          for (int i = 0; i < n; ++i)
            if (m(i, j) != 0.0) trip.emplace_back((t - k) * n + i, (t - l) * n + j, m(i, j));
      }
    }
  }
  SparseMatrix out(n * length, n * length);
  out.setFromTriplets(trip.begin(), trip.end());
  return out;
}

MarginalEstimate laplace_log_marginal(const CountPanel& panel, const ModelParams& params, double log_mean_cap,
                                      int max_iter) {
  require_valid(params);
  const int n = params.n(), len = panel.length(), p = params.p(), dim = n * len;
  if (panel.n() != n) throw InputError("panel and params disagree on the number of series");

  const SparseMatrix prec = path_precision(params, len);
  const Matrix eta_m = panel.linear_predictor(params.beta());
  Vector y(dim), eta(dim);
  for (int t = 0; t < len; ++t) {
    for (int i = 0; i < n; ++i) {
      y[t * n + i] = static_cast<double>(panel.counts(i, t));
      eta[t * n + i] = eta_m(i, t);
    }
  }
  if ((eta.array() > log_mean_cap).any()) throw NumericalError("log-mean exceeds cap at X = 0");

  // log det of the prior precision: the path density factorises into the
  // initial block and unit-Jacobian transitions
  double logdet_prec = 0.0;
  if (p > 0) logdet_prec -= stationary_covariance(params).log_det();
  logdet_prec += (len - p) * params.sigma().array().square().log().sum() * -1.0;

  auto objective = [&](const Vector& x) {
    const Eigen::ArrayXd lm = x.array() + eta.array();
    if ((lm > log_mean_cap).any()) return -std::numeric_limits<double>::infinity();
    return (y.array() * lm - lm.exp()).sum() - 0.5 * x.dot(prec * x);
  };

  MarginalEstimate est;
  Vector x = Vector::Zero(dim);
  double fx = objective(x);
  Eigen::SimplicialLDLT<SparseMatrix> solver;
  solver.analyzePattern(prec);
  for (int it = 0; it < max_iter; ++it) {
    const Vector mu = (x.array() + eta.array()).exp().matrix();
    const Vector grad = y - mu - prec * x;
    SparseMatrix h = prec;
    h.diagonal() += mu;
    solver.factorize(h);
    if (solver.info() != Eigen::Success) throw NumericalError("Laplace Hessian is not positive definite");
    const Vector step = solver.solve(grad);
    double scale = 1.0, fn = fx;
    Vector xn = x;
    for (int b = 0; b < 60; ++b) {
      xn = x + scale * step;
      fn = objective(xn);
      if (fn >= fx) break;
      scale *= 0.5;
    }
    est.newton_iterations = it + 1;
    const double gain = fn - fx;
    if (fn >= fx) {
      x = xn;
      fx = fn;
    }
    if (!(gain > 1e-10 * (1.0 + std::abs(fx)))) {
      est.converged = grad.cwiseAbs().maxCoeff() < 1e-6 * (1.0 + y.cwiseAbs().maxCoeff()) || gain >= 0.0;
      break;
    }
  }

  SparseMatrix h = prec;
  h.diagonal() += (x.array() + eta.array()).exp().matrix();
  solver.factorize(h);
  if (solver.info() != Eigen::Success) throw NumericalError("Laplace Hessian is not positive definite");
  const double logdet_h = solver.vectorD().array().log().sum();
  if (!std::isfinite(logdet_h)) throw NumericalError("Laplace Hessian determinant is not finite");

  est.log_marginal = fx + 0.5 * logdet_prec - 0.5 * logdet_h;
  est.mode = Eigen::Map<const Matrix>(x.data(), n, len);
  return est;
}

}  // namespace countgraph
