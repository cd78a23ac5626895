#pragma once

// Frequency-domain view of the latent AR(p) process: the W_k coefficient
// matrices of the inverse spectral density, the partial coherence spectrum,
// and the undirected (partial correlation) and directed (Granger) graphs.

#include "countgraph/model.hpp"

#include <complex>
#include <utility>
#include <vector>

namespace countgraph {

using ComplexMatrix = Eigen::MatrixXcd;

/// W_0..W_p such that
///   S^{-1}(w) = -W_0 + sum_k 1/2 (W_k e^{-ikw} + W_k' e^{ikw}).
struct WStack {
  std::vector<Matrix> mats;

  int p() const { return static_cast<int>(mats.size()) - 1; }
  int n() const { return mats.empty() ? 0 : static_cast<int>(mats.front().rows()); }
};

WStack compute_W(const ModelParams& params);

/// B(w)^* Sigma^{-1} B(w) with B(w) = I - sum_k A_k e^{-ikw} (2 pi dropped).
ComplexMatrix inverse_spectral_density(const ModelParams& params, double omega);

/// The same matrix evaluated through the W_k expansion.
ComplexMatrix inverse_spectral_from_W(const WStack& w, double omega);

struct CoherenceField {
  std::vector<double> grid;           // uniform on [0, pi], endpoints included
  std::vector<ComplexMatrix> values;  // R(w) per grid point; empty if not kept
  Matrix rho;                         // sup_w |R(w)_ij|
};

inline constexpr int kDefaultOmegaGrid = 512;
inline constexpr double kDefaultRhoStar = 0.1;
inline constexpr double kDefaultCausalityTol = 1e-6;

CoherenceField partial_coherence(const ModelParams& params, int grid_size = kDefaultOmegaGrid,
                                 bool keep_values = false);

struct UndirectedEdge {
  int i = 0;
  int j = 0;  // i < j
  double rho = 0.0;
  bool operator==(const UndirectedEdge&) const = default;
};

struct DirectedEdge {
  int from = 0;
  int to = 0;
  std::vector<double> weights;  // A_1(to, from) .. A_p(to, from)
  bool operator==(const DirectedEdge&) const = default;
};

struct GraphResult {
  std::vector<UndirectedEdge> undirected;  // sorted by (i, j)
  std::vector<DirectedEdge> directed;      // sorted by (from, to)
  Vector in_weight;
  Vector out_weight;
};

/// Keeps (i, j) iff rho_ij > rho_star.
std::vector<UndirectedEdge> partial_graph(const CoherenceField& field, double rho_star);

/// Edge i -> j iff max_k |A_k(j, i)| > tol.
std::vector<DirectedEdge> causality_graph(const ModelParams& params, double tol = kDefaultCausalityTol);

/// (IW, OW): IW_i = sum_k sum_{j != i} A_k(i, j), OW_i = sum_k sum_{j != i} A_k(j, i).
std::pair<Vector, Vector> edge_weights(const ModelParams& params);

/// Pairs (i, j), i < j, where some W_k has a non-zero (i, j) or (j, i) entry.
std::vector<std::pair<int, int>> w_support(const WStack& w, double tol = 0.0);

struct GraphOptions {
  double rho_star = kDefaultRhoStar;
  double tol = kDefaultCausalityTol;
  int grid_size = kDefaultOmegaGrid;
};

/// Full mixed graph of a fitted or true model.
GraphResult extract_graph(const ModelParams& params, const GraphOptions& opts = {});

}  // namespace countgraph
