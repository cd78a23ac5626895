#include "countgraph/model.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <numbers>
#include <sstream>

namespace countgraph {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;  // log(2 pi)

std::string shape(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

}  // namespace

ModelParams::ModelParams(Matrix beta, std::vector<Matrix> ar, Vector sigma)
    : beta_(std::move(beta)), ar_(std::move(ar)), sigma_(std::move(sigma)) {
  const auto n = sigma_.size();
  if (beta_.cols() != n) {
    throw InputError("beta must be q x n with n = " + std::to_string(n) + ", got " + shape(beta_));
  }
  for (std::size_t k = 0; k < ar_.size(); ++k) {
    if (ar_[k].rows() != n || ar_[k].cols() != n) {
      throw InputError("A_" + std::to_string(k + 1) + " must be " + std::to_string(n) + "x" +
                       std::to_string(n) + ", got " + shape(ar_[k]));
    }
  }
}

ModelParams ModelParams::zeros(int n, int p, int q, double sigma0) {
  return ModelParams(Matrix::Zero(q, n), std::vector<Matrix>(p, Matrix::Zero(n, n)),
                     Vector::Constant(n, sigma0));
}

Matrix ModelParams::companion() const {
  const int nn = n();
  const int pp = p();
  if (pp == 0) return Matrix(0, 0);
  Matrix c = Matrix::Zero(nn * pp, nn * pp);
  for (int k = 0; k < pp; ++k) c.block(0, k * nn, nn, nn) = ar_[k];
  if (pp > 1) c.block(nn, 0, nn * (pp - 1), nn * (pp - 1)).setIdentity();
  return c;
}

double ModelParams::spectral_radius() const {
  if (p() == 0 || n() == 0) return 0.0;
  Eigen::EigenSolver<Matrix> es(companion(), /*computeEigenvectors=*/false);
  if (es.info() != Eigen::Success) {
    throw NumericalError("eigenvalue computation for companion matrix failed");
  }
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

Vector ModelParams::to_vector() const {
  const int nn = n(), pp = p(), qq = q();
  Matrix stacked(nn, qq + pp * nn + 1);
  stacked.leftCols(qq) = beta_.transpose();
  for (int k = 0; k < pp; ++k) stacked.block(0, qq + k * nn, nn, nn) = ar_[k];
  stacked.col(qq + pp * nn) = sigma_;
  return Eigen::Map<const Vector>(stacked.data(), stacked.size());
}

ModelParams ModelParams::from_vector(const Vector& theta, int n, int p, int q) {
  if (static_cast<std::size_t>(theta.size()) != parameter_count(n, p, q)) {
    throw InputError("theta length " + std::to_string(theta.size()) + " does not match n(q+pn+1) = " +
                     std::to_string(parameter_count(n, p, q)));
  }
  Eigen::Map<const Matrix> stacked(theta.data(), n, q + p * n + 1);
  std::vector<Matrix> ar;
  for (int k = 0; k < p; ++k) ar.emplace_back(stacked.block(0, q + k * n, n, n));
  return ModelParams(stacked.leftCols(q).transpose(), std::move(ar), stacked.col(q + p * n));
}

std::string ValidationReport::summary() const {
  std::string out;
  for (const auto& v : violations) {
    if (!out.empty()) out += "; ";
    out += v;
  }
  return out;
}

ValidationReport validate_params(const ModelParams& params) {
  ValidationReport report;
  const auto& s = params.sigma();
  for (int i = 0; i < s.size(); ++i) {
    if (!std::isfinite(s[i])) {
      report.violations.push_back("sigma[" + std::to_string(i) + "] is not finite");
    } else if (s[i] <= 0.0) {
      report.violations.push_back("sigma[" + std::to_string(i) + "] must be positive");
    }
  }
  if (!params.beta().allFinite()) report.violations.emplace_back("beta contains non-finite entries");
  bool ar_finite = true;
  for (int k = 1; k <= params.p(); ++k) {
    if (!params.ar(k).allFinite()) {
      report.violations.push_back("A_" + std::to_string(k) + " contains non-finite entries");
      ar_finite = false;
    }
  }
  if (ar_finite && params.p() > 0) {
    const double rho = params.spectral_radius();
    if (!(rho < 1.0)) {
      std::ostringstream os;
      os << "companion spectral radius " << rho << " >= 1 (non-stationary)";
      report.violations.push_back(os.str());
    }
  }
  return report;
}

void require_valid(const ModelParams& params) {
  auto report = validate_params(params);
  if (!report.ok()) throw NumericalError("invalid model parameters: " + report.summary());
}

Matrix CountPanel::linear_predictor(const Matrix& beta) const {
  Matrix eta(n(), length());
  for (int i = 0; i < n(); ++i) eta.row(i) = (covariates[i] * beta.col(i)).transpose();
  return eta;
}

void CountPanel::validate() const {
  if (static_cast<int>(covariates.size()) != n()) {
    throw InputError("expected one covariate matrix per series (" + std::to_string(n()) + "), got " +
                     std::to_string(covariates.size()));
  }
  if (!labels.empty() && static_cast<int>(labels.size()) != n()) {
    throw InputError("label count does not match series count");
  }
  for (int i = 0; i < n(); ++i) {
    if (covariates[i].rows() != length() || covariates[i].cols() != q()) {
      throw InputError("covariates for series " + std::to_string(i) + " must be " +
                       std::to_string(length()) + "x" + std::to_string(q()));
    }
    if (!covariates[i].allFinite()) {
      throw InputError("covariates for series " + std::to_string(i) + " contain non-finite values");
    }
  }
  for (int i = 0; i < n(); ++i) {
    for (int t = 0; t < length(); ++t) {
      if (counts(i, t) < 0) {
        throw InputError("negative count at series " + std::to_string(i) + ", time " +
                         std::to_string(t + 1));
      }
    }
  }
}

CountPanel make_panel(CountMatrix counts, const Matrix& shared_covariates,
                      std::vector<std::string> labels) {
  CountPanel panel;
  const auto n = counts.rows();
  panel.counts = std::move(counts);
  panel.covariates.assign(n, shared_covariates);
  if (labels.empty()) {
    for (int i = 0; i < n; ++i) labels.push_back("Y" + std::to_string(i + 1));
  }
  panel.labels = std::move(labels);
  panel.validate();
  return panel;
}

StationaryCov::StationaryCov(Matrix block, int n) : block_(std::move(block)), n_(n) {
  if (block_.size() == 0) return;
  block_ = 0.5 * (block_ + block_.transpose()).eval();
  Eigen::LLT<Matrix> llt(block_);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("stationary covariance is not positive definite");
  }
  precision_ = llt.solve(Matrix::Identity(block_.rows(), block_.cols()));
  precision_ = 0.5 * (precision_ + precision_.transpose()).eval();
  log_det_ = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

Matrix StationaryCov::autocov(int h) const {
  if (h < 0 || h >= p()) throw InputError("autocov lag out of range");
  return block_.block(0, h * n_, n_, n_);
}

Matrix StationaryCov::lambda(int a, int b) const {
  const int pp = p();
  if (a < 1 || a > pp || b < 1 || b > pp) throw InputError("lambda block index out of range");
  return precision_.block((pp - a) * n_, (pp - b) * n_, n_, n_);
}

Matrix StationaryCov::time_ordered_cov() const {
  const int pp = p();
  Matrix out(block_.rows(), block_.cols());
  for (int a = 0; a < pp; ++a) {
    for (int b = 0; b < pp; ++b) {
      out.block(a * n_, b * n_, n_, n_) = block_.block((pp - 1 - a) * n_, (pp - 1 - b) * n_, n_, n_);
    }
  }
  return out;
}

Matrix lyapunov_kronecker(const Matrix& a, const Matrix& q) {
  const auto m = a.rows();
  Matrix kron(m * m, m * m);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) kron.block(i * m, j * m, m, m) = a(i, j) * a;
  }
  Matrix system = Matrix::Identity(m * m, m * m) - kron;
  Eigen::PartialPivLU<Matrix> lu(system);
  Vector rhs = Eigen::Map<const Vector>(q.data(), q.size());
  Vector sol = lu.solve(rhs);
  if (!sol.allFinite()) throw NumericalError("(I - A kron A) is singular: process is not stationary");
  Matrix r = Eigen::Map<const Matrix>(sol.data(), m, m);
  return 0.5 * (r + r.transpose());
}

Matrix lyapunov_doubling(const Matrix& a, const Matrix& q) {
  Matrix r = q;
  Matrix ak = a;
  for (int iter = 0; iter < 80; ++iter) {
    const Matrix inc = ak * r * ak.transpose();
    r += inc;
    const double scale = r.cwiseAbs().maxCoeff();
    if (!std::isfinite(scale)) break;
    if (inc.cwiseAbs().maxCoeff() <= 1e-18 * scale) return 0.5 * (r + r.transpose());
    ak = (ak * ak).eval();
  }
  throw NumericalError("Lyapunov doubling did not converge: process is not stationary");
}

StationaryCov stationary_covariance(const ModelParams& params, const StationarySolveOptions& opts) {
  const int n = params.n(), p = params.p();
  if (p == 0) return StationaryCov(Matrix(0, 0), n);
  if (!(params.sigma().array() > 0.0).all()) throw NumericalError("sigma must be positive");
  if (params.spectral_radius() >= 1.0) {
    throw NumericalError("companion spectral radius >= 1: no stationary covariance");
  }
  const Matrix a = params.companion();
  Matrix q = Matrix::Zero(n * p, n * p);
  q.topLeftCorner(n, n) = params.noise_variance().asDiagonal();
  const long long unknowns = static_cast<long long>(n * p) * (n * p);
  Matrix r = unknowns <= opts.dense_limit ? lyapunov_kronecker(a, q) : lyapunov_doubling(a, q);
  return StationaryCov(std::move(r), n);
}

DensityParts joint_log_density_parts(const CountPanel& panel, const LatentSample& latent,
                                     const ModelParams& params, const StationaryCov& stat,
                                     const DensityOptions& opts) {
  const int n = panel.n(), len = panel.length(), p = params.p();
  const Matrix& x = latent.values;
  if (x.rows() != n || x.cols() != len || params.n() != n) {
    throw InputError("latent sample / panel / params dimensions do not match");
  }
  if (len < p) throw InputError("series length shorter than AR order");

  DensityParts parts;
  const Matrix eta = panel.linear_predictor(params.beta());
  for (int t = 0; t < len; ++t) {
    for (int i = 0; i < n; ++i) {
      const double lm = x(i, t) + eta(i, t);
      if (!(lm <= opts.log_mean_cap)) {
        throw NumericalError("log-mean " + std::to_string(lm) + " exceeds cap at series " +
                             std::to_string(i) + ", time " + std::to_string(t + 1));
      }
      const double y = static_cast<double>(panel.counts(i, t));
      parts.poisson += lm * y - std::exp(lm);
    }
  }

  const Vector var = params.noise_variance();
  const double log_norm = -0.5 * (n * kLog2Pi + var.array().log().sum());
  Vector eps(n);
  for (int t = p; t < len; ++t) {
    eps = x.col(t);
    for (int k = 1; k <= p; ++k) eps.noalias() -= params.ar(k) * x.col(t - k);
    parts.transitions += log_norm - 0.5 * (eps.array().square() / var.array()).sum();
  }

  if (p > 0 && opts.include_initial_block) {
    Vector stacked(n * p);
    for (int b = 0; b < p; ++b) stacked.segment(b * n, n) = x.col(p - 1 - b);
    parts.initial = -0.5 * (n * p * kLog2Pi + stat.log_det() +
                            stacked.dot(stat.precision() * stacked));
  }
  return parts;
}

double joint_log_density(const CountPanel& panel, const LatentSample& latent,
                         const ModelParams& params, const DensityOptions& opts) {
  const StationaryCov stat = stationary_covariance(params);
  return joint_log_density_parts(panel, latent, params, stat, opts).total();
}

double conditional_mean(const Vector& z, const Vector& beta_i, double x, double cap) {
  const double lm = z.dot(beta_i) + x;
  if (!(lm <= cap)) throw NumericalError("log-mean " + std::to_string(lm) + " exceeds cap");
  return std::exp(lm);
}

Matrix build_covariates(int length, double period) {
  if (length < 1) throw InputError("covariate length must be >= 1");
  if (!(period > 0.0)) throw InputError("seasonal period must be positive");
  Matrix z(length, 4);
  for (int r = 0; r < length; ++r) {
    const double t = r + 1.0;
    const double angle = 2.0 * std::numbers::pi * t / period;
    z(r, 0) = 1.0;
    z(r, 1) = t;
    z(r, 2) = std::cos(angle);
    z(r, 3) = std::sin(angle);
  }
  return z;
}

}  // namespace countgraph
