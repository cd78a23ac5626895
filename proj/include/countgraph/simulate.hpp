#pragma once

// Synthetic count panels from a known model, used for structure-recovery
// studies and acceptance tests.

#include "countgraph/model.hpp"
#include "countgraph/spectral.hpp"

#include <cstdint>
#include <vector>

namespace countgraph {

struct TruthSpec {
  ModelParams params;
  int length = 200;
  std::uint64_t seed = 1;
  double sparsity = 0.15;
  double magnitude = 0.3;
  Matrix covariates;  // shared N x q design
  GraphOptions graph;
  double log_mean_cap = kDefaultLogMeanCap;

  void validate() const;
};

struct SimulationResult {
  CountPanel panel;
  LatentSample latent;
  GraphResult truth_graph;
};

/// Stationary start for X(1..p), forward AR recursion, then Poisson counts.
SimulationResult generate(const TruthSpec& spec);

struct SparseArDraw {
  std::vector<Matrix> ar;
  double spectral_radius = 0.0;
  int attempts = 0;
};

/// Each entry is independently +-magnitude with probability `sparsity`,
/// redrawn until the companion spectral radius is below `radius_bound`.
SparseArDraw random_sparse_ar(int n, int p, double sparsity, double magnitude, std::uint64_t seed,
                              double radius_bound = 0.95, int max_tries = 100);

struct StudyDesign {
  int n = 10;
  int p = 2;
  int length = 200;
  double sparsity = 0.15;
  double magnitude = 0.3;
  double noise_variance = 0.01;
  double period = 12.0;
  std::vector<double> beta{0.5, 0.005, 0.5, 0.5};
};

/// Truth in the style of the simulation study: trend + seasonal design,
/// common beta, Sigma = noise_variance * I, sparse +-magnitude AR matrices.
TruthSpec make_study_truth(const StudyDesign& design, std::uint64_t seed);

}  // namespace countgraph
