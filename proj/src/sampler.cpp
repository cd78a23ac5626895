#include "countgraph/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace countgraph {

namespace {

void check_pd(const Matrix& m, int t) {
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success || !m.allFinite()) {
    throw NumericalError("proposal covariance at t=" + std::to_string(t) +
                         " is not positive definite");
  }
}

}  // namespace

ProposalRegime proposal_regime(int t, int length, int p) {
  if (t < 1 || t > length) throw InputError("time index out of range");
  if (t <= p) return ProposalRegime::kInitialBlock;
  if (t <= length - p) return ProposalRegime::kInterior;
  return ProposalRegime::kTailBlock;
}

ConditionalPrior::ConditionalPrior(const ModelParams& params, const StationaryCov& stat, int length)
    : n_(params.n()), p_(params.p()), length_(length) {
  if (length < 2 * p_ + 1) {
    throw InputError("series length " + std::to_string(length) + " must be at least 2p+1 = " +
                     std::to_string(2 * p_ + 1));
  }
  s_ = params.noise_precision();
  const auto s = s_.asDiagonal();
  for (int i = 1; i <= p_; ++i) {
    sa_.push_back(s * params.ar(i));
    ats_.push_back(params.ar(i).transpose() * s);
  }
  atsa_.assign(p_, std::vector<Matrix>(p_));
  for (int j = 0; j < p_; ++j) {
    for (int i = 0; i < p_; ++i) atsa_[j][i] = ats_[j] * params.ar(i + 1);
  }
  lambda_.assign(p_, std::vector<Matrix>(p_));
  for (int a = 1; a <= p_; ++a) {
    for (int b = 1; b <= p_; ++b) lambda_[a - 1][b - 1] = stat.lambda(a, b);
  }

  interior_ = Matrix(s);
  for (int i = 0; i < p_; ++i) interior_ += atsa_[i][i];

  for (int t = 1; t <= p_; ++t) {
    Matrix prec = lambda_[t - 1][t - 1];
    for (int i = 0; i <= t - 1; ++i) prec += atsa_[p_ - i - 1][p_ - i - 1];
    initial_.push_back(0.5 * (prec + prec.transpose()));
  }
  for (int t = length - p_ + 1; t <= length; ++t) {
    Matrix prec = Matrix(s);
    for (int i = 1; i <= length - t; ++i) prec += atsa_[i - 1][i - 1];
    tail_.push_back(std::move(prec));
  }

  check_pd(interior_, p_ + 1);
  interior_var_ = interior_.diagonal().cwiseInverse();
  for (int t = 1; t <= p_; ++t) {
    check_pd(initial_[t - 1], t);
    initial_var_.push_back(initial_[t - 1].diagonal().cwiseInverse());
  }
  for (std::size_t k = 0; k < tail_.size(); ++k) {
    check_pd(tail_[k], length - p_ + 1 + static_cast<int>(k));
    tail_var_.push_back(tail_[k].diagonal().cwiseInverse());
  }
}

const Matrix& ConditionalPrior::precision_ref(int t) const {
  switch (proposal_regime(t, length_, p_)) {
    case ProposalRegime::kInitialBlock:
      return initial_[t - 1];
    case ProposalRegime::kInterior:
      return interior_;
    case ProposalRegime::kTailBlock:
      break;
  }
  return tail_[t - (length_ - p_ + 1)];
}

const Matrix& ConditionalPrior::precision(int t) const { return precision_ref(t); }

const Vector& ConditionalPrior::site_variance(int t) const {
  switch (proposal_regime(t, length_, p_)) {
    case ProposalRegime::kInitialBlock:
      return initial_var_[t - 1];
    case ProposalRegime::kInterior:
      return interior_var_;
    case ProposalRegime::kTailBlock:
      break;
  }
  return tail_var_[t - (length_ - p_ + 1)];
}

Vector ConditionalPrior::linear_term(int t, const Matrix& x) const {
  // X(tau) is column tau - 1.
  auto col = [&x](int tau) { return x.col(tau - 1); };
  Vector b = Vector::Zero(n_);
  const int p = p_;

  if (proposal_regime(t, length_, p) == ProposalRegime::kInitialBlock) {
    for (int j = 1; j <= t; ++j) b.noalias() += ats_[p - j] * col(p + t + 1 - j);
    for (int i = 1; i <= p; ++i) {
      if (i != t) b.noalias() -= lambda_[t - 1][i - 1] * col(i);
    }
    for (int j = 1; j <= t; ++j) {
      for (int i = 1; i <= p; ++i) {
        if (i == p + 1 - j) continue;
        b.noalias() -= atsa_[p - j][i - 1] * col(p + t + 1 - j - i);
      }
    }
    return b;
  }

  const int future = std::min(p, length_ - t);  // p in the interior, N - t in the tail
  for (int i = 1; i <= p; ++i) b.noalias() += sa_[i - 1] * col(t - i);
  for (int i = 1; i <= future; ++i) b.noalias() += ats_[i - 1] * col(t + i);
  for (int j = 1; j <= future; ++j) {
    for (int i = 1; i <= p; ++i) {
      if (i != j) b.noalias() -= atsa_[j - 1][i - 1] * col(t + j - i);
    }
  }
  return b;
}

ProposalParams proposal_params(int col, const Matrix& x, const ModelParams& params,
                               const StationaryCov& stat) {
  const int length = static_cast<int>(x.cols());
  const ConditionalPrior prior(params, stat, length);
  const int t = col + 1;
  ProposalParams out;
  out.regime = proposal_regime(t, length, params.p());
  out.precision = prior.precision(t);
  Eigen::LLT<Matrix> llt(out.precision);
  out.cov = llt.solve(Matrix::Identity(params.n(), params.n()));
  out.cov = 0.5 * (out.cov + out.cov.transpose()).eval();
  out.mean = llt.solve(prior.linear_term(t, x));
  return out;
}

double acceptance_log_ratio(double x_new, double x_cur, long long y, double offset, double cap) {
  if (!(offset + x_new <= cap) || !(offset + x_cur <= cap)) {
    throw NumericalError("log-mean exceeds cap in acceptance ratio");
  }
  const double yy = static_cast<double>(y);
  return (x_new - x_cur) * yy - std::exp(offset) * (std::exp(x_new) - std::exp(x_cur));
}

void ChainConfig::validate() const {
  if (m < 1) throw InputError("chain: m must be >= 1");
  if (burn_in < 0) throw InputError("chain: burn_in must be >= 0");
  if (thin < 1) throw InputError("chain: thin must be >= 1");
}

SamplerResult sample_latent(const CountPanel& panel, const ModelParams& params,
                            const ChainConfig& config, const std::optional<Matrix>& init) {
  config.validate();
  const int n = panel.n(), len = panel.length();
  if (params.n() != n || params.q() != panel.q()) {
    throw InputError("panel and params dimensions do not match");
  }
  require_valid(params);
  const StationaryCov stat = stationary_covariance(params);
  const ConditionalPrior prior(params, stat, len);
  const Matrix eta = panel.linear_predictor(params.beta());

  Matrix x = init ? *init : Matrix::Zero(n, len);
  if (x.rows() != n || x.cols() != len) throw InputError("initial latent state has wrong shape");

  Rng rng(config.seed);
  std::vector<int> order(len);
  std::iota(order.begin(), order.end(), 1);
  Eigen::VectorXi accepted = Eigen::VectorXi::Zero(n);
  long long proposals = 0;

  SamplerResult result;
  result.samples.reserve(config.m);
  const long long total = config.burn_in + static_cast<long long>(config.m) * config.thin;

  for (long long sweep = 1; sweep <= total; ++sweep) {
    if (config.scan == ScanOrder::kRandomTime) {
      for (int k = len - 1; k > 0; --k) std::swap(order[k], order[rng.uniform_int(0, k)]);
    }
    for (const int t : order) {
      const Matrix& prec = prior.precision(t);
      const Vector& var = prior.site_variance(t);
      const Vector b = prior.linear_term(t, x);
      for (int i = 0; i < n; ++i) {
        const double cond_mean =
            var[i] * (b[i] - prec.row(i).dot(x.col(t - 1)) + prec(i, i) * x(i, t - 1));
        const double proposal = cond_mean + std::sqrt(var[i]) * rng.normal();
        const double u = rng.uniform();
        bool accept = config.ignore_likelihood;
        if (!accept) {
          const double log_ratio = acceptance_log_ratio(proposal, x(i, t - 1), panel.counts(i, t - 1),
                                                        eta(i, t - 1), config.log_mean_cap);
          accept = std::log(u) <= std::min(0.0, log_ratio);
        }
        if (accept) {
          x(i, t - 1) = proposal;
          ++accepted[i];
        }
      }
      ++proposals;
    }
    if (sweep > config.burn_in && (sweep - config.burn_in) % config.thin == 0) {
      result.samples.push_back({x});
    }
  }
  result.acceptance_rate = accepted.cast<double>() / static_cast<double>(proposals);
  result.final_state = std::move(x);
  return result;
}

}  // namespace countgraph
