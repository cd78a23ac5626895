#include "countgraph/optimizer.hpp"

#include <cmath>
#include <deque>
#include <limits>

namespace countgraph {

LbfgsResult lbfgs_minimize(const SmoothObjective& f, Vector x0, const LbfgsSettings& settings) {
  LbfgsResult res;
  res.x = std::move(x0);
  Vector g(res.x.size());
  res.value = f(res.x, &g);
  res.evaluations = 1;
  if (!std::isfinite(res.value)) {
    res.message = "objective not finite at starting point";
    return res;
  }

  std::deque<Vector> s_hist, y_hist;
  std::deque<double> rho_hist;
  Vector x_new(res.x.size()), g_new(res.x.size());

  for (int iter = 0; iter < settings.max_iter; ++iter) {
    res.iterations = iter;
    if (g.cwiseAbs().maxCoeff() <= settings.grad_tol * std::max(1.0, std::abs(res.value))) {
      res.converged = true;
      res.message = "gradient tolerance reached";
      return res;
    }

    // Two-loop recursion.
    Vector d = -g;
    std::vector<double> alpha(s_hist.size());
    for (int k = static_cast<int>(s_hist.size()) - 1; k >= 0; --k) {
      alpha[k] = rho_hist[k] * s_hist[k].dot(d);
      d -= alpha[k] * y_hist[k];
    }
    if (!s_hist.empty()) {
      d *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
    } else {
      d /= std::max(1.0, g.norm());
    }
    for (std::size_t k = 0; k < s_hist.size(); ++k) {
      const double beta = rho_hist[k] * y_hist[k].dot(d);
      d += (alpha[k] - beta) * s_hist[k];
    }
    double slope = g.dot(d);
    if (!(slope < 0.0)) {
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      d = -g / std::max(1.0, g.norm());
      slope = g.dot(d);
    }

    double step = 1.0;
    double f_new = std::numeric_limits<double>::infinity();
    bool found = false;
    for (int bt = 0; bt < settings.max_backtracks; ++bt) {
      x_new = res.x + step * d;
      f_new = f(x_new, &g_new);
      ++res.evaluations;
      if (std::isfinite(f_new) && f_new <= res.value + 1e-4 * step * slope) {
        found = true;
        break;
      }
      step *= 0.5;
    }
    if (!found) {
      res.converged = true;
      res.message = "line search could not decrease the objective";
      return res;
    }

    const Vector s = x_new - res.x;
    const Vector y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (static_cast<int>(s_hist.size()) == settings.memory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
      s_hist.push_back(s);
      y_hist.push_back(y);
      rho_hist.push_back(1.0 / sy);
    }

    const double decrease = res.value - f_new;
    res.x = x_new;
    g = g_new;
    res.value = f_new;
    if (decrease <= settings.value_tol * std::max(1.0, std::abs(f_new))) {
      res.iterations = iter + 1;
      res.converged = true;
      res.message = "relative decrease below tolerance";
      return res;
    }
  }
  res.iterations = settings.max_iter;
  res.message = "iteration limit reached";
  return res;
}

}  // namespace countgraph
