#pragma once

#include "countgraph/model.hpp"

#include <functional>
#include <string>

namespace countgraph {

/// f(x, grad) -> value; grad may be null. Returning +inf marks x infeasible,
/// which makes the line search backtrack.
using SmoothObjective = std::function<double(const Vector&, Vector*)>;

struct LbfgsSettings {
  int max_iter = 200;
  int memory = 8;
  double grad_tol = 1e-6;   // on ||g||_inf / max(1, |f|)
  double value_tol = 1e-13; // relative decrease over one iteration
  int max_backtracks = 60;
};

struct LbfgsResult {
  Vector x;
  double value = 0.0;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  std::string message;
};

/// Limited-memory BFGS minimization with Armijo backtracking.
LbfgsResult lbfgs_minimize(const SmoothObjective& f, Vector x0, const LbfgsSettings& settings = {});

}  // namespace countgraph
