#include "countgraph/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <tuple>

namespace countgraph {

WStack compute_W(const ModelParams& params) {
  const int n = params.n(), p = params.p();
  const Vector s = params.noise_precision();
  WStack w;
  w.mats.assign(p + 1, Matrix::Zero(n, n));

  Matrix w0 = -Matrix(s.asDiagonal());
  for (int l = 1; l <= p; ++l) w0 -= params.ar(l).transpose() * s.asDiagonal() * params.ar(l);
  w.mats[0] = 0.5 * (w0 + w0.transpose());

  for (int k = 1; k <= p; ++k) {
    Matrix wk = -2.0 * (s.asDiagonal() * params.ar(k));
    for (int l = 1; l <= p - k; ++l) {
      wk += 2.0 * params.ar(l).transpose() * s.asDiagonal() * params.ar(l + k);
    }
    w.mats[k] = std::move(wk);
  }
  return w;
}

ComplexMatrix inverse_spectral_density(const ModelParams& params, double omega) {
  const int n = params.n();
  ComplexMatrix b = ComplexMatrix::Identity(n, n);
  for (int k = 1; k <= params.p(); ++k) {
    b -= std::polar(1.0, -k * omega) * params.ar(k).cast<std::complex<double>>();
  }
  const Eigen::VectorXcd s = params.noise_precision().cast<std::complex<double>>();
  return b.adjoint() * s.asDiagonal() * b;
}

ComplexMatrix inverse_spectral_from_W(const WStack& w, double omega) {
  ComplexMatrix out = -w.mats[0].cast<std::complex<double>>();
  for (int k = 1; k <= w.p(); ++k) {
    const std::complex<double> e = std::polar(1.0, -k * omega);
    out += 0.5 * (e * w.mats[k].cast<std::complex<double>>() +
                  std::conj(e) * w.mats[k].transpose().cast<std::complex<double>>());
  }
  return out;
}

CoherenceField partial_coherence(const ModelParams& params, int grid_size, bool keep_values) {
  if (grid_size < 2) throw InputError("omega grid needs at least 2 points");
  const int n = params.n();
  CoherenceField field;
  field.rho = Matrix::Zero(n, n);
  field.grid.resize(grid_size);
  if (keep_values) field.values.reserve(grid_size);

  for (int g = 0; g < grid_size; ++g) {
    const double omega = std::numbers::pi * g / (grid_size - 1);
    field.grid[g] = omega;
    const ComplexMatrix sinv = inverse_spectral_density(params, omega);
    const Vector d = sinv.diagonal().real().cwiseSqrt().cwiseInverse();
    ComplexMatrix r = d.asDiagonal() * sinv * d.asDiagonal();
    r.diagonal().setOnes();
    field.rho = field.rho.cwiseMax(r.cwiseAbs());
    if (keep_values) field.values.push_back(std::move(r));
  }
  field.rho = 0.5 * (field.rho + field.rho.transpose()).eval();
  return field;
}

std::vector<UndirectedEdge> partial_graph(const CoherenceField& field, double rho_star) {
  std::vector<UndirectedEdge> edges;
  const auto n = static_cast<int>(field.rho.rows());
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (field.rho(i, j) > rho_star) edges.push_back({i, j, field.rho(i, j)});
    }
  }
  return edges;
}

std::vector<DirectedEdge> causality_graph(const ModelParams& params, double tol) {
  if (tol < 0.0) throw InputError("causality tolerance must be >= 0");
  std::vector<DirectedEdge> edges;
  const int n = params.n(), p = params.p();
  for (int from = 0; from < n; ++from) {
    for (int to = 0; to < n; ++to) {
      if (from == to) continue;
      std::vector<double> weights(p);
      double peak = 0.0;
      for (int k = 1; k <= p; ++k) {
        weights[k - 1] = params.ar(k)(to, from);
        peak = std::max(peak, std::abs(weights[k - 1]));
      }
      if (peak > tol) edges.push_back({from, to, std::move(weights)});
    }
  }
  return edges;
}

std::pair<Vector, Vector> edge_weights(const ModelParams& params) {
  const int n = params.n();
  Vector in = Vector::Zero(n), out = Vector::Zero(n);
  for (int k = 1; k <= params.p(); ++k) {
    Matrix off = params.ar(k);
    off.diagonal().setZero();
    in += off.rowwise().sum();
    out += off.colwise().sum().transpose();
  }
  return {in, out};
}

std::vector<std::pair<int, int>> w_support(const WStack& w, double tol) {
  std::vector<std::pair<int, int>> pairs;
  const int n = w.n();
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const bool linked = std::any_of(w.mats.begin(), w.mats.end(), [&](const Matrix& m) {
        return std::abs(m(i, j)) > tol || std::abs(m(j, i)) > tol;
      });
      if (linked) pairs.emplace_back(i, j);
    }
  }
  return pairs;
}

GraphResult extract_graph(const ModelParams& params, const GraphOptions& opts) {
  GraphResult g;
  g.undirected = partial_graph(partial_coherence(params, opts.grid_size), opts.rho_star);
  g.directed = causality_graph(params, opts.tol);
  std::tie(g.in_weight, g.out_weight) = edge_weights(params);
  return g;
}

}  // namespace countgraph
