#include "countgraph/mcem.hpp"

#include "countgraph/optimizer.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace countgraph {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double companion_radius(const std::vector<Eigen::Map<const Matrix>>& a, int n) {
  const int p = static_cast<int>(a.size());
  Matrix c = Matrix::Zero(n * p, n * p);
  for (int k = 0; k < p; ++k) c.block(0, k * n, n, n) = a[k];
  if (p > 1) c.block(n, 0, n * (p - 1), n * (p - 1)).setIdentity();
  Eigen::EigenSolver<Matrix> es(c, false);
  if (es.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

double offdiag_abs_sum(const Matrix& m) {
  // summed directly; total minus diagonal leaves rounding residue when W is diagonal
  double h = 0.0;
  for (int j = 0; j < m.cols(); ++j)
    for (int i = 0; i < m.rows(); ++i)
      if (i != j) h += std::abs(m(i, j));
  return h;
}

}  // namespace

double penalty_h1(const WStack& w) {
  double h = 0.0;
  for (const auto& m : w.mats) h += offdiag_abs_sum(m);
  return h;
}

double estimate_Q(const CountPanel& panel, const std::vector<LatentSample>& samples,
                  const ModelParams& params, double gamma, const DensityOptions& opts) {
  if (samples.empty()) throw InputError("estimate_Q needs at least one sample");
  const StationaryCov stat = stationary_covariance(params);
  double total = 0.0;
  for (const auto& s : samples) total += joint_log_density_parts(panel, s, params, stat, opts).total();
  return total / static_cast<double>(samples.size()) - gamma * penalty_h1(compute_W(params));
}

SufficientStats SufficientStats::from_samples(const CountPanel& panel,
                                              const std::vector<LatentSample>& samples, int p) {
  if (samples.empty()) throw InputError("sufficient statistics need at least one sample");
  SufficientStats st;
  st.n = panel.n();
  st.p = p;
  st.length = panel.length();
  st.m = static_cast<int>(samples.size());
  const int n = st.n, len = st.length, d = (p + 1) * n;
  st.lag_moments = Matrix::Zero(d, d);
  st.initial_moment = Matrix::Zero(n * p, n * p);
  st.exp_mean = Matrix::Zero(n, len);
  const Matrix y = panel.counts.cast<double>();

  Matrix stacked(d, len - p);
  Vector x0(n * p);
  for (const auto& s : samples) {
    const Matrix& x = s.values;
    for (int lag = 0; lag <= p; ++lag) stacked.middleRows(lag * n, n) = x.middleCols(p - lag, len - p);
    st.lag_moments.selfadjointView<Eigen::Lower>().rankUpdate(stacked);
    for (int b = 0; b < p; ++b) x0.segment(b * n, n) = x.col(p - 1 - b);
    st.initial_moment.noalias() += x0 * x0.transpose();
    st.exp_mean += x.array().exp().matrix();
    st.xy_mean += (x.array() * y.array()).sum();
  }
  st.lag_moments = st.lag_moments.selfadjointView<Eigen::Lower>();
  const double inv_m = 1.0 / st.m;
  st.lag_moments *= inv_m;
  st.initial_moment *= inv_m;
  st.exp_mean *= inv_m;
  st.xy_mean *= inv_m;
  return st;
}

GaussianBlockObjective::GaussianBlockObjective(const SufficientStats& stats, double gamma, double smoothing,
                                               bool include_initial_block, double stationarity_margin)
    : stats_(stats),
      gamma_(gamma),
      smoothing_(smoothing),
      include_initial_(include_initial_block),
      margin_(stationarity_margin),
      n_(stats.n),
      p_(stats.p) {}

Vector GaussianBlockObjective::pack(const ModelParams& params) {
  const int n = params.n(), p = params.p();
  Vector v(p * n * n + n);
  for (int k = 0; k < p; ++k) v.segment(k * n * n, n * n) = Eigen::Map<const Vector>(params.ar()[k].data(), n * n);
  v.tail(n) = params.sigma().array().log();
  return v;
}

void GaussianBlockObjective::unpack(const Vector& packed, ModelParams& params) {
  const int n = params.n(), p = params.p();
  for (int k = 0; k < p; ++k) params.ar()[k] = Eigen::Map<const Matrix>(packed.data() + k * n * n, n, n);
  params.sigma() = packed.tail(n).array().exp();
}

double GaussianBlockObjective::value(const Vector& packed, Vector* grad) const {
  const int n = n_, p = p_;
  std::vector<Eigen::Map<const Matrix>> a;
  a.reserve(p);
  for (int k = 0; k < p; ++k) a.emplace_back(packed.data() + k * n * n, n, n);
  const Vector u = packed.tail(n);
  if (!packed.allFinite()) return kNegInf;
  const Vector s = (-2.0 * u).array().exp();
  const Vector var = (2.0 * u).array().exp();

  if (p > 0 && companion_radius(a, n) >= 1.0 - 0.5 * margin_) return kNegInf;

  // Transition part.
  const int d = (p + 1) * n;
  Matrix b(n, d);
  b.leftCols(n).setIdentity();
  for (int k = 0; k < p; ++k) b.middleCols((k + 1) * n, n) = -a[k];
  const Matrix bc = b * stats_.lag_moments;
  const Vector e_diag = (bc.array() * b.array()).rowwise().sum();
  const double transitions = stats_.length - p;
  double val = -0.5 * transitions * (n * kLog2Pi + 2.0 * u.sum()) - 0.5 * s.dot(e_diag);

  Vector grad_s;  // d/d Sigma^{-1} diagonal (penalty only)
  Matrix grad_a;  // n x pn, blocks per lag
  if (grad) {
    grad->resize(packed.size());
    grad_a = (s.asDiagonal() * bc).rightCols(p * n);
    grad->tail(n) = -transitions * Vector::Ones(n) + s.cwiseProduct(e_diag);
    grad_s = Vector::Zero(n);
  }

  // Stationary density of the initial block.
  if (p > 0 && include_initial_) {
    Matrix comp = Matrix::Zero(n * p, n * p);
    for (int k = 0; k < p; ++k) comp.block(0, k * n, n, n) = a[k];
    if (p > 1) comp.block(n, 0, n * (p - 1), n * (p - 1)).setIdentity();
    Matrix q = Matrix::Zero(n * p, n * p);
    q.topLeftCorner(n, n) = var.asDiagonal();
    Matrix r;
    try {
      r = lyapunov_doubling(comp, q);
    } catch (const NumericalError&) {
      return kNegInf;
    }
    Eigen::LLT<Matrix> llt(r);
    if (llt.info() != Eigen::Success) return kNegInf;
    const Matrix lambda = llt.solve(Matrix::Identity(n * p, n * p));
    const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    val += -0.5 * (n * p * kLog2Pi + log_det + (lambda.array() * stats_.initial_moment.array()).sum());
    if (grad) {
      Matrix g = -0.5 * lambda + 0.5 * lambda * stats_.initial_moment * lambda;
      g = 0.5 * (g + g.transpose()).eval();
      const Matrix gbar = lyapunov_doubling(comp.transpose(), g);
      const Matrix big = 2.0 * gbar * comp * r;
      grad_a += big.topRows(n);
      grad->tail(n) += 2.0 * gbar.topLeftCorner(n, n).diagonal().cwiseProduct(var);
    }
  }

  // Smoothed penalty on the off-diagonals of W_0..W_p.
  if (gamma_ > 0.0) {
    const double eps = smoothing_;
    auto smooth = [eps](const Matrix& w, Matrix* dphi) {
      double h = 0.0;
      if (dphi) dphi->resize(w.rows(), w.cols());
      for (Eigen::Index j = 0; j < w.cols(); ++j) {
        for (Eigen::Index i = 0; i < w.rows(); ++i) {
          if (i == j) {
            if (dphi) (*dphi)(i, j) = 0.0;
            continue;
          }
          const double root = std::sqrt(w(i, j) * w(i, j) + eps * eps);
          h += root;
          if (dphi) (*dphi)(i, j) = w(i, j) / root;
        }
      }
      return h;
    };
    const auto sd = s.asDiagonal();
    std::vector<Matrix> sa(p);
    for (int k = 0; k < p; ++k) sa[k] = sd * a[k];

    Matrix w0 = -Matrix(sd);
    for (int l = 0; l < p; ++l) w0 -= a[l].transpose() * sa[l];
    Matrix g0;
    double h = smooth(w0, grad ? &g0 : nullptr);
    Matrix gpen_a = Matrix::Zero(n, p * n);
    Vector gpen_s = Vector::Zero(n);
    if (grad) {
      const Matrix g0s = g0 + g0.transpose();
      for (int l = 0; l < p; ++l) {
        gpen_a.middleCols(l * n, n) -= sa[l] * g0s;
        gpen_s -= (a[l] * g0.transpose() * a[l].transpose()).diagonal();
      }
    }
    for (int k = 1; k <= p; ++k) {
      Matrix wk = -2.0 * sa[k - 1];
      for (int l = 1; l <= p - k; ++l) wk += 2.0 * a[l - 1].transpose() * sa[l + k - 1];
      Matrix gk;
      h += smooth(wk, grad ? &gk : nullptr);
      if (grad) {
        gpen_a.middleCols((k - 1) * n, n) -= 2.0 * sd * gk;
        gpen_s -= 2.0 * (a[k - 1] * gk.transpose()).diagonal();
        for (int l = 1; l <= p - k; ++l) {
          gpen_a.middleCols((l - 1) * n, n) += 2.0 * sa[l + k - 1] * gk.transpose();
          gpen_a.middleCols((l + k - 1) * n, n) += 2.0 * sa[l - 1] * gk;
          gpen_s += 2.0 * (a[l + k - 1] * gk.transpose() * a[l - 1].transpose()).diagonal();
        }
      }
    }
    val -= gamma_ * h;
    if (grad) {
      grad_a -= gamma_ * gpen_a;
      grad_s -= gamma_ * gpen_s;
    }
  }

  if (grad) {
    for (int k = 0; k < p; ++k) {
      grad->segment(k * n * n, n * n) = Eigen::Map<const Vector>(Matrix(grad_a.middleCols(k * n, n)).data(), n * n);
    }
    grad->tail(n) += grad_s.cwiseProduct(-2.0 * s);
  }
  return val;
}

double poisson_block_value(const CountPanel& panel, const Matrix& beta, const Matrix& exp_mean) {
  const Matrix eta = panel.linear_predictor(beta);
  const Matrix y = panel.counts.cast<double>();
  return (eta.array() * y.array() - eta.array().exp() * exp_mean.array()).sum();
}

Vector fit_poisson_series(const Matrix& z, const Eigen::Ref<const Eigen::Matrix<long long, 1, Eigen::Dynamic>>& y,
                          const Vector& multipliers, Vector beta, int max_iter) {
  const Vector yd = y.transpose().cast<double>();
  auto objective = [&](const Vector& b) {
    const Vector eta = z * b;
    if (eta.maxCoeff() > kDefaultLogMeanCap) return kNegInf;
    return eta.dot(yd) - eta.array().exp().matrix().dot(multipliers);
  };
  double f = objective(beta);
  if (!std::isfinite(f)) {
    beta.setZero();
    f = objective(beta);
  }
  for (int it = 0; it < max_iter; ++it) {
    const Vector mu = (z * beta).array().exp().matrix().cwiseProduct(multipliers);
    const Vector g = z.transpose() * (yd - mu);
    Matrix h = z.transpose() * mu.asDiagonal() * z;
    h.diagonal().array() += 1e-10 * (1.0 + h.diagonal().array().abs());
    const Vector step = h.ldlt().solve(g);
    if (!step.allFinite()) break;
    double alpha = 1.0;
    double f_new = kNegInf;
    Vector trial;
    for (int bt = 0; bt < 60; ++bt) {
      trial = beta + alpha * step;
      f_new = objective(trial);
      if (std::isfinite(f_new) && f_new >= f) break;
      alpha *= 0.5;
    }
    if (!(std::isfinite(f_new) && f_new >= f)) break;
    const double gain = f_new - f;
    beta = trial;
    f = f_new;
    if ((alpha * step).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + beta.cwiseAbs().maxCoeff()) ||
        gain <= 1e-15 * (1.0 + std::abs(f))) {
      break;
    }
  }
  return beta;
}

double q_from_stats(const CountPanel& panel, const SufficientStats& stats, const ModelParams& params,
                    double gamma, bool include_initial_block) {
  const GaussianBlockObjective gaussian(stats, 0.0, 0.0, include_initial_block, 0.0);
  const double g = gaussian.value(GaussianBlockObjective::pack(params));
  return poisson_block_value(panel, params.beta(), stats.exp_mean) + stats.xy_mean + g -
         gamma * penalty_h1(compute_W(params));
}

ModelParams project_feasible(ModelParams params, double margin, double sigma_min) {
  params.sigma() = params.sigma().cwiseMax(sigma_min);
  if (params.p() > 0) {
    const double rho = params.spectral_radius();
    if (rho > 1.0 - margin) {
      const double c = (1.0 - margin) / rho;
      double scale = 1.0;
      for (int k = 1; k <= params.p(); ++k) {
        scale *= c;
        params.ar()[k - 1] *= scale;
      }
    }
  }
  return params;
}

namespace {

// The smoothed penalty leaves entries that should be zero stranded at small
// values, because L-BFGS stalls in the narrow kink. Try zeroing every
// off-diagonal A entry below a threshold and keep whichever threshold gives
// the best objective (no snapping is a candidate).
Vector snap_small_entries(const GaussianBlockObjective& objective, const Vector& x, int n, int p) {
  Vector best = x;
  double best_value = objective.value(x);
  for (const double threshold : {1e-2, 1e-3, 1e-4, 1e-5}) {
    Vector trial = x;
    bool changed = false;
    for (int k = 0; k < p; ++k) {
      for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
          double& v = trial[k * n * n + j * n + i];
          if (i != j && v != 0.0 && std::abs(v) < threshold) {
            v = 0.0;
            changed = true;
          }
        }
      }
    }
    if (!changed) continue;
    const double value = objective.value(trial);
    if (value > best_value) {
      best_value = value;
      best = std::move(trial);
    }
  }
  return best;
}

}  // namespace

MStepResult m_step(const CountPanel& panel, const SufficientStats& stats, const ModelParams& init,
                   double gamma, const MStepSettings& settings, bool include_initial_block) {
  MStepResult out;
  out.q_before = q_from_stats(panel, stats, init, gamma, include_initial_block);
  ModelParams params = project_feasible(init, settings.stationarity_margin, settings.sigma_min);

  GaussianBlockObjective objective(stats, gamma, settings.smoothing, include_initial_block,
                                   settings.stationarity_margin);
  const double log_sigma_min = std::log(settings.sigma_min);
  SmoothObjective neg = [&](const Vector& v, Vector* g) {
    if ((v.tail(stats.n).array() < log_sigma_min).any()) return std::numeric_limits<double>::infinity();
    const double f = objective.value(v, g);
    if (!std::isfinite(f)) return std::numeric_limits<double>::infinity();
    if (g) *g = -*g;
    return -f;
  };

  std::vector<double> schedule;
  if (settings.continuation && gamma > 0.0) {
    for (double e = 1e-4; e > settings.smoothing * 10.0; e *= 1e-2) schedule.push_back(e);
  }
  schedule.push_back(settings.smoothing);

  LbfgsSettings lb;
  lb.max_iter = settings.max_inner;
  lb.grad_tol = settings.grad_tol;

  for (int pass = 0; pass < std::max(1, settings.passes); ++pass) {
    for (int i = 0; i < params.n(); ++i) {
      params.beta().col(i) = fit_poisson_series(panel.covariates[i], panel.counts.row(i),
                                                stats.exp_mean.row(i).transpose(), params.beta().col(i),
                                                settings.newton_max_iter);
    }
    Vector x = GaussianBlockObjective::pack(params);
    for (const double eps : schedule) {
      objective.set_smoothing(eps);
      const LbfgsResult res = lbfgs_minimize(neg, x, lb);
      x = res.x;
      out.message = res.message;
    }
    if (gamma > 0.0) x = snap_small_entries(objective, x, stats.n, stats.p);
    GaussianBlockObjective::unpack(x, params);
  }

  out.q_after = q_from_stats(panel, stats, params, gamma, include_initial_block);
  const double slack = 1e-9 * std::max(1.0, std::abs(out.q_before));
  if (!(out.q_after >= out.q_before - slack)) {
    out.flagged = true;
    out.message = "M-step did not improve Q_m; keeping the input parameters";
    out.params = init;
    out.q_after = out.q_before;
    return out;
  }
  out.params = std::move(params);
  return out;
}

MStepResult m_step(const CountPanel& panel, const std::vector<LatentSample>& samples,
                   const ModelParams& init, double gamma, const MStepSettings& settings,
                   bool include_initial_block) {
  const SufficientStats stats = SufficientStats::from_samples(panel, samples, init.p());
  return m_step(panel, stats, init, gamma, settings, include_initial_block);
}

void FitConfig::validate() const {
  if (!(gamma >= 0.0)) throw InputError("gamma must be >= 0");
  if (!(tol > 0.0)) throw InputError("tolerance delta must be > 0");
  if (max_iter < 1) throw InputError("max_iter must be >= 1");
  chain.validate();
}

ModelParams initial_params(const CountPanel& panel, int p, double sigma_init) {
  panel.validate();
  ModelParams params = ModelParams::zeros(panel.n(), p, panel.q(), sigma_init);
  const Vector ones = Vector::Ones(panel.length());
  for (int i = 0; i < panel.n(); ++i) {
    params.beta().col(i) =
        fit_poisson_series(panel.covariates[i], panel.counts.row(i), ones, Vector::Zero(panel.q()));
  }
  return params;
}

IncrementEstimate reverse_importance_increment(const std::vector<double>& w, int batches) {
  IncrementEstimate est;
  const int m = static_cast<int>(w.size());
  if (m == 0) return est;
  const double c = *std::max_element(w.begin(), w.end());
  std::vector<double> e(m);
  for (int s = 0; s < m; ++s) e[s] = std::exp(w[s] - c);
  const double mean = std::accumulate(e.begin(), e.end(), 0.0) / m;
  est.value = -(std::log(mean) + c);

  const int nb = std::min(batches, m);
  if (nb < 2) return est;
  const int size = m / nb;
  std::vector<double> bm(nb, 0.0);
  for (int b = 0; b < nb; ++b) {
    const int begin = b * size;
    const int end = b == nb - 1 ? m : begin + size;
    for (int s = begin; s < end; ++s) bm[b] += e[s];
    bm[b] /= (end - begin);
  }
  const double bmean = std::accumulate(bm.begin(), bm.end(), 0.0) / nb;
  double var = 0.0;
  for (const double v : bm) var += (v - bmean) * (v - bmean);
  var /= (nb - 1);
  est.se = std::sqrt(var / nb) / mean;
  return est;
}

FitResult run_mcem(const CountPanel& panel, const ModelParams& init, const FitConfig& config,
                   const std::optional<Matrix>& chain_init) {
  config.validate();
  panel.validate();
  const int p = init.p();
  if (panel.length() < 2 * p + 1) {
    throw InputError("series length " + std::to_string(panel.length()) + " must be at least 2p+1 = " +
                     std::to_string(2 * p + 1));
  }
  require_valid(init);

  DensityOptions dens;
  dens.include_initial_block = config.include_initial_block;
  dens.log_mean_cap = config.chain.log_mean_cap;

  FitResult result;
  ModelParams params = init;
  std::optional<ModelParams> previous;
  Matrix state = chain_init ? *chain_init : Matrix::Zero(panel.n(), panel.length());
  int negative_streak = 0;

  auto per_sample_loglik = [&](const std::vector<LatentSample>& samples, const ModelParams& th) {
    const StationaryCov stat = stationary_covariance(th);
    std::vector<double> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(joint_log_density_parts(panel, s, th, stat, dens).total());
    return out;
  };

  for (int k = 1; k <= config.max_iter; ++k) {
    ChainConfig chain = config.chain;
    chain.seed = derive_seed(config.chain.seed, static_cast<std::uint64_t>(k));
    SamplerResult draws = sample_latent(panel, params, chain, state);
    state = draws.final_state;

    IterationRecord rec;
    rec.iteration = k;
    rec.acceptance = draws.acceptance_rate;

    const std::vector<double> l_cur = per_sample_loglik(draws.samples, params);
    rec.loglik_mc = std::accumulate(l_cur.begin(), l_cur.end(), 0.0) / static_cast<double>(l_cur.size());
    if (previous) {
      const std::vector<double> l_prev = per_sample_loglik(draws.samples, *previous);
      std::vector<double> w(l_cur.size());
      for (std::size_t s = 0; s < w.size(); ++s) w[s] = l_prev[s] - l_cur[s];
      IncrementEstimate inc = reverse_importance_increment(w);
      inc.value -= config.gamma * (penalty_h1(compute_W(params)) - penalty_h1(compute_W(*previous)));
      rec.increment = inc.value;
      rec.increment_se = inc.se;
    }

    const SufficientStats stats = SufficientStats::from_samples(panel, draws.samples, p);
    MStepResult ms = m_step(panel, stats, params, config.gamma, config.mstep, config.include_initial_block);
    rec.q_before = ms.q_before;
    rec.q_after = ms.q_after;
    rec.mstep_flagged = ms.flagged;

    const Vector theta_old = params.to_vector();
    const Vector theta_new = ms.params.to_vector();
    rec.rel_change = (theta_new - theta_old).norm() / std::max(theta_old.norm(), 1e-300);
    rec.theta = theta_new;
    rec.penalty = penalty_h1(compute_W(ms.params));
    result.trace.records.push_back(rec);

    if (rec.increment && rec.increment_se > 0.0 && *rec.increment < -3.0 * rec.increment_se) {
      if (++negative_streak >= config.divergence_patience) {
        throw DivergenceError("MCEM objective decreased beyond Monte Carlo noise for " +
                                  std::to_string(negative_streak) + " consecutive iterations",
                              result.trace);
      }
    } else {
      negative_streak = 0;
    }

    previous = params;
    params = std::move(ms.params);
    if (rec.rel_change <= config.tol) {
      result.converged = true;
      break;
    }
  }

  ChainConfig final_chain = config.chain;
  final_chain.seed = derive_seed(config.chain.seed, 0);
  SamplerResult final_draws = sample_latent(panel, params, final_chain, state);
  result.samples = std::move(final_draws.samples);
  result.chain_state = std::move(final_draws.final_state);
  result.params = std::move(params);
  return result;
}

}  // namespace countgraph
