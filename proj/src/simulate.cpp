#include "countgraph/simulate.hpp"

#include "countgraph/rng.hpp"

#include <cmath>
#include <sstream>

namespace countgraph {

void TruthSpec::validate() const {
  require_valid(params);
  if (length < 1) throw InputError("simulation length must be >= 1");
  if (length < params.p()) throw InputError("simulation length shorter than AR order");
  if (covariates.rows() != length || covariates.cols() != params.q()) {
    throw InputError("covariates must be length x q");
  }
  if (!(sparsity >= 0.0 && sparsity <= 1.0)) throw InputError("sparsity must lie in [0, 1]");
}

SimulationResult generate(const TruthSpec& spec) {
  spec.validate();
  const ModelParams& th = spec.params;
  const int n = th.n(), p = th.p(), len = spec.length;
  Rng rng(spec.seed);

  Matrix x(n, len);
  if (p > 0) {
    const StationaryCov stat = stationary_covariance(th);
    const Matrix k = stat.time_ordered_cov();
    Eigen::LLT<Matrix> llt(k);
    if (llt.info() != Eigen::Success) throw NumericalError("initial-block covariance is not PD");
    Vector z(n * p);
    for (int i = 0; i < n * p; ++i) z[i] = rng.normal();
    const Vector v = llt.matrixL() * z;
    for (int t = 0; t < p; ++t) x.col(t) = v.segment(t * n, n);
  }
  for (int t = p; t < len; ++t) {
    Vector next(n);
    for (int i = 0; i < n; ++i) next[i] = th.sigma()[i] * rng.normal();
    for (int k = 1; k <= p; ++k) next.noalias() += th.ar(k) * x.col(t - k);
    x.col(t) = next;
  }

  SimulationResult out;
  out.panel.counts.resize(n, len);
  out.panel.covariates.assign(n, spec.covariates);
  for (int i = 0; i < n; ++i) out.panel.labels.push_back("Y" + std::to_string(i + 1));
  const Matrix eta = out.panel.linear_predictor(th.beta());
  for (int t = 0; t < len; ++t) {
    for (int i = 0; i < n; ++i) {
      const double lm = eta(i, t) + x(i, t);
      if (!(lm <= spec.log_mean_cap)) {
        throw NumericalError("simulated log-mean exceeds cap at series " + std::to_string(i) +
                             ", time " + std::to_string(t + 1));
      }
      out.panel.counts(i, t) = rng.poisson(std::exp(lm));
    }
  }
  out.latent.values = std::move(x);
  out.truth_graph = extract_graph(th, spec.graph);
  return out;
}

SparseArDraw random_sparse_ar(int n, int p, double sparsity, double magnitude, std::uint64_t seed,
                              double radius_bound, int max_tries) {
  if (n < 1 || p < 0) throw InputError("random_sparse_ar: need n >= 1 and p >= 0");
  if (!(sparsity >= 0.0 && sparsity <= 1.0)) throw InputError("sparsity must lie in [0, 1]");
  if (!(magnitude >= 0.0)) throw InputError("magnitude must be >= 0");
  Rng rng(seed);
  SparseArDraw draw;
  double last_radius = 0.0;
  for (int attempt = 1; attempt <= max_tries; ++attempt) {
    std::vector<Matrix> ar(p, Matrix::Zero(n, n));
    for (auto& a : ar) {
      for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
          if (rng.uniform() < sparsity) a(i, j) = rng.uniform() < 0.5 ? magnitude : -magnitude;
        }
      }
    }
    const ModelParams probe(Matrix::Zero(0, n), ar, Vector::Ones(n));
    last_radius = probe.spectral_radius();
    if (last_radius < radius_bound) {
      draw.ar = std::move(ar);
      draw.spectral_radius = last_radius;
      draw.attempts = attempt;
      return draw;
    }
  }
  std::ostringstream os;
  os << "no stationary AR draw with radius < " << radius_bound << " after " << max_tries
     << " attempts (last radius " << last_radius << "); sparsity/magnitude too large";
  throw InputError(os.str());
}

TruthSpec make_study_truth(const StudyDesign& design, std::uint64_t seed) {
  const int q = static_cast<int>(design.beta.size());
  Matrix beta(q, design.n);
  for (int i = 0; i < design.n; ++i) {
    for (int r = 0; r < q; ++r) beta(r, i) = design.beta[r];
  }
  SparseArDraw draw = random_sparse_ar(design.n, design.p, design.sparsity, design.magnitude,
                                       derive_seed(seed, 1));
  TruthSpec spec;
  spec.params = ModelParams(std::move(beta), std::move(draw.ar),
                            Vector::Constant(design.n, std::sqrt(design.noise_variance)));
  spec.length = design.length;
  spec.seed = derive_seed(seed, 2);
  spec.sparsity = design.sparsity;
  spec.magnitude = design.magnitude;
  spec.covariates = build_covariates(design.length, design.period);
  if (spec.covariates.cols() != q) {
    throw InputError("beta length must match the 4-column trend + seasonal design");
  }
  return spec;
}

}  // namespace countgraph
