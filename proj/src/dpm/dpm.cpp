#include "dpmqte/dpm/dpm.hpp"

#include <algorithm>
#include <cmath>

#include "dpmqte/diagnostics/diagnostics.hpp"
#include "dpmqte/error.hpp"
#include "dpmqte/stat/random.hpp"
#include "dpmqte/stat/special.hpp"

namespace dpmqte::dpm {

using stat::Gaussian;
using stat::RngStream;

std::string to_string(Sampler s) { return s == Sampler::polya ? "polya" : "blocked"; }

Sampler parse_sampler(const std::string& name) {
  if (name == "polya" || name == "neal") return Sampler::polya;
  if (name == "blocked" || name == "truncated") return Sampler::blocked;
  throw InvalidArgument("unknown sampler '" + name + "' (expected polya or blocked)");
}

DpmHyper default_hypers(const Matrix& data, bool update_alpha, bool hyperpriors, int nclusters) {
  if (data.rows() < 2) throw InvalidArgument("default_hypers: need at least 2 observations");
  if (!data.allFinite()) throw InvalidArgument("default_hypers: data must be finite");
  const auto d = data.cols();
  const Vector c = data.colwise().mean().transpose();
  Matrix r = Matrix::Zero(d, d);
  for (Eigen::Index j = 0; j < d; ++j) {
    const double range = data.col(j).maxCoeff() - data.col(j).minCoeff();
    if (!(range > 0.0))
      throw InvalidArgument("default_hypers: column " + std::to_string(j) + " is constant");
    r(j, j) = (range / 4.0) * (range / 4.0);
  }
  DpmHyper h;
  h.update_alpha = update_alpha;
  h.hyperpriors = hyperpriors;
  h.alpha = 10.0;
  h.a0 = 10.0;
  h.b0 = 1.0;
  h.nu = static_cast<double>(d) + 2.0;
  h.m = c;
  h.lambda = 0.5;
  h.psi = r;
  h.m0 = c;
  h.S0 = r;
  h.gamma1 = 3.0;
  h.gamma2 = 2.0;
  h.nu0 = static_cast<double>(d) + 2.0;
  h.psi0 = r / h.nu0;
  h.nclusters = nclusters;
  return h;
}

namespace {

void require_spd(const Matrix& m, const char* name) {
  try {
    (void)stat::cholesky(m);
  } catch (const NotPositiveDefinite&) {
    throw InvalidArgument(std::string("dpm hyper: ") + name + " must be positive-definite");
  }
}

}  // namespace

void validate(const DpmHyper& h, Sampler sampler) {
  const auto d = static_cast<double>(h.dim());
  if (h.dim() == 0) throw InvalidArgument("dpm hyper: dimension must be >= 1");
  if (!(h.nu >= d + 2.0)) throw InvalidArgument("dpm hyper: nu must be >= d + 2");
  if (h.update_alpha) {
    if (!(h.a0 > 0.0 && h.b0 > 0.0)) throw InvalidArgument("dpm hyper: a0, b0 must be positive");
  } else if (!(h.alpha > 0.0)) {
    throw InvalidArgument("dpm hyper: alpha must be positive");
  }
  if (h.hyperpriors) {
    if (static_cast<double>(h.m0.size()) != d || h.S0.rows() != h.m0.size() ||
        h.psi0.rows() != h.m0.size())
      throw InvalidArgument("dpm hyper: hyperprior dimensions disagree");
    require_spd(h.S0, "S0");
    require_spd(h.psi0, "Psi0");
    if (!(h.gamma1 > 0.0 && h.gamma2 > 0.0))
      throw InvalidArgument("dpm hyper: gamma1, gamma2 must be positive");
    if (!(h.nu0 >= d)) throw InvalidArgument("dpm hyper: nu0 must be >= d");
  } else {
    if (h.psi.rows() != h.m.size() || h.psi.cols() != h.m.size())
      throw InvalidArgument("dpm hyper: Psi dimension disagrees with m");
    require_spd(h.psi, "Psi");
    if (!(h.lambda > 0.0)) throw InvalidArgument("dpm hyper: lambda must be positive");
  }
  if (sampler == Sampler::blocked && h.nclusters < 2)
    throw InvalidArgument("dpm hyper: blocked sampler needs nclusters >= 2");
}

Niw niw_posterior(const Niw& prior, double n, const Vector& sum, const Matrix& outer) {
  if (n == 0.0) return prior;
  if (sum.size() != prior.m.size()) throw DimensionMismatch("niw_posterior: dimension mismatch");
  const Vector zbar = sum / n;
  // Scatter about the cluster mean: Σ zzᵀ - n z̄z̄ᵀ.
  const Matrix scatter = outer - n * zbar * zbar.transpose();
  const Vector diff = zbar - prior.m;
  Niw post;
  post.lambda = prior.lambda + n;
  post.nu = prior.nu + n;
  post.m = (prior.lambda * prior.m + sum) / post.lambda;
  post.psi = prior.psi + scatter + (prior.lambda * n / post.lambda) * diff * diff.transpose();
  stat::symmetrize(post.psi);
  return post;
}

Niw niw_posterior(const Niw& prior, const Matrix& cluster) {
  if (cluster.rows() == 0) return prior;
  if (cluster.cols() != prior.m.size()) throw DimensionMismatch("niw_posterior: dimension mismatch");
  const double n = static_cast<double>(cluster.rows());
  const Vector zbar = cluster.colwise().mean().transpose();
  const Matrix centered = cluster.rowwise() - zbar.transpose();
  const Matrix scatter = centered.transpose() * centered;
  const Vector diff = zbar - prior.m;
  Niw post;
  post.lambda = prior.lambda + n;
  post.nu = prior.nu + n;
  post.m = (prior.lambda * prior.m + n * zbar) / post.lambda;
  post.psi = prior.psi + scatter + (prior.lambda * n / post.lambda) * diff * diff.transpose();
  stat::symmetrize(post.psi);
  return post;
}

Gaussian sample_niw(const Niw& p, RngStream& rng) {
  for (int attempt = 0; attempt < 2; ++attempt) {
    const Matrix omega = stat::sample_inverse_wishart(p.nu, p.psi, rng);
    try {
      const Matrix chol = stat::cholesky(omega / p.lambda);
      Vector zeta = stat::sample_mvnormal(p.m, chol, rng);
      return Gaussian(std::move(zeta), omega);
    } catch (const NotPositiveDefinite&) {
    }
  }
  throw NumericalError("dpm: cluster covariance draw is not positive-definite after one redraw");
}

double niw_predictive_logpdf(const Niw& p, const double* z) {
  const auto d = p.m.size();
  const double dd = static_cast<double>(d);
  const double dof = p.nu - dd + 1.0;
  const Matrix scale = p.psi * ((p.lambda + 1.0) / (p.lambda * dof));
  const Matrix chol = stat::cholesky(scale);
  const Vector diff = Eigen::Map<const Vector>(z, d) - p.m;
  const double q = chol.triangularView<Eigen::Lower>().solve(diff).squaredNorm();
  return std::lgamma(0.5 * (dof + dd)) - std::lgamma(0.5 * dof) - 0.5 * dd * std::log(dof) -
         0.5 * dd * stat::kLogPi - 0.5 * stat::log_det_from_cholesky(chol) -
         0.5 * (dof + dd) * std::log1p(q / dof);
}

namespace {

Niw base_measure(const DpmState& s, const DpmHyper& h) { return {s.m, s.lambda, h.nu, s.psi}; }

struct SuffStats {
  std::vector<double> n;
  std::vector<Vector> sum;
  std::vector<Matrix> outer;
};

SuffStats sufficient_stats(const std::vector<int>& kappa, const RowMatrix& data, std::size_t k) {
  const auto d = data.cols();
  SuffStats s{std::vector<double>(k, 0.0), std::vector<Vector>(k, Vector::Zero(d)),
              std::vector<Matrix>(k, Matrix::Zero(d, d))};
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    const auto c = static_cast<std::size_t>(kappa[static_cast<std::size_t>(i)]);
    const auto z = data.row(i).transpose();
    s.n[c] += 1.0;
    s.sum[c] += z;
    s.outer[c].noalias() += z * z.transpose();
  }
  return s;
}

void update_alpha_and_hypers(DpmState& state, const DpmHyper& hyper, std::size_t n,
                             RngStream& rng) {
  if (hyper.update_alpha && state.sampler == Sampler::polya)
    state.alpha = update_alpha_escobar_west(state.alpha, state.clusters.size(), n, hyper.a0,
                                            hyper.b0, rng);
  if (hyper.hyperpriors) update_base_hypers(state, hyper, rng);
}

}  // namespace

std::vector<int> DpmState::counts() const {
  std::vector<int> c(clusters.size(), 0);
  for (int k : kappa) ++c[static_cast<std::size_t>(k)];
  return c;
}

std::size_t DpmState::occupied() const {
  std::size_t k = 0;
  for (int c : counts()) k += c > 0;
  return k;
}

std::vector<int> DpmDraw::counts() const {
  std::vector<int> c(zeta.size(), 0);
  for (int k : kappa) ++c[static_cast<std::size_t>(k)];
  return c;
}

DpmState initial_state(std::size_t n, const DpmHyper& hyper, Sampler sampler, RngStream& rng) {
  validate(hyper, sampler);
  DpmState s;
  s.sampler = sampler;
  s.kappa.assign(n, 0);
  s.alpha = hyper.update_alpha ? hyper.a0 / hyper.b0 : hyper.alpha;
  if (hyper.hyperpriors) {
    s.m = hyper.m0;
    s.lambda = hyper.gamma1 / hyper.gamma2;
    s.psi = hyper.nu0 * hyper.psi0;
  } else {
    s.m = hyper.m;
    s.lambda = hyper.lambda;
    s.psi = hyper.psi;
  }
  const Niw g0 = base_measure(s, hyper);
  const std::size_t k = sampler == Sampler::blocked ? static_cast<std::size_t>(hyper.nclusters) : 1;
  for (std::size_t c = 0; c < k; ++c) s.clusters.push_back(sample_niw(g0, rng));
  if (sampler == Sampler::blocked) {
    s.weights = Vector::Constant(hyper.nclusters, 1.0 / hyper.nclusters);
    s.log_weights = s.weights.array().log();
    s.sticks = Vector::Zero(hyper.nclusters - 1);
    s.log1m_sticks = Vector::Zero(hyper.nclusters - 1);
  }
  return s;
}

void polya_step(DpmState& state, const RowMatrix& data, const DpmHyper& hyper, RngStream& rng) {
  const auto n = static_cast<std::size_t>(data.rows());
  if (state.kappa.size() != n) throw DimensionMismatch("polya_step: allocation length mismatch");
  auto& clusters = state.clusters;
  std::vector<int> count = state.counts();
  const Niw g0 = base_measure(state, hyper);
  const double log_alpha = std::log(state.alpha);
  std::vector<double> logw;
  for (std::size_t i = 0; i < n; ++i) {
    const double* z = data.row(static_cast<Eigen::Index>(i)).data();
    const auto c = static_cast<std::size_t>(state.kappa[i]);
    --count[c];
    Gaussian aux;
    if (count[c] == 0) {
      // Departing singleton: its parameters become the auxiliary component,
      // and the last cluster takes its index.
      aux = std::move(clusters[c]);
      const std::size_t last = clusters.size() - 1;
      if (c != last) {
        clusters[c] = std::move(clusters[last]);
        count[c] = count[last];
        for (int& k : state.kappa)
          if (static_cast<std::size_t>(k) == last) k = static_cast<int>(c);
      }
      clusters.pop_back();
      count.pop_back();
    } else {
      aux = sample_niw(g0, rng);
    }
    const std::size_t kk = clusters.size();
    logw.resize(kk + 1);
    for (std::size_t k = 0; k < kk; ++k)
      logw[k] = std::log(static_cast<double>(count[k])) + clusters[k].logpdf(z);
    logw[kk] = log_alpha + aux.logpdf(z);
    const std::size_t pick = stat::gumbel_max_categorical(logw, rng);
    if (pick == kk) {
      clusters.push_back(std::move(aux));
      count.push_back(0);
    }
    ++count[pick];
    state.kappa[i] = static_cast<int>(pick);
  }
  const SuffStats ss = sufficient_stats(state.kappa, data, clusters.size());
  for (std::size_t k = 0; k < clusters.size(); ++k)
    clusters[k] = sample_niw(niw_posterior(g0, ss.n[k], ss.sum[k], ss.outer[k]), rng);
  update_alpha_and_hypers(state, hyper, n, rng);
}

void stick_parameters(const std::vector<int>& counts, double alpha, std::vector<double>& a,
                      std::vector<double>& b) {
  const std::size_t big_n = counts.size();
  a.resize(big_n - 1);
  b.resize(big_n - 1);
  double tail = 0.0;
  for (std::size_t k = big_n - 1; k-- > 0;) {
    tail += counts[k + 1];
    a[k] = counts[k] + 1.0;
    b[k] = tail + alpha;
  }
}

double blocked_alpha_rate(double b0, const Vector& log1m_sticks) { return b0 - log1m_sticks.sum(); }

void blocked_step(DpmState& state, const RowMatrix& data, const DpmHyper& hyper, RngStream& rng) {
  const auto n = static_cast<std::size_t>(data.rows());
  const auto big_n = static_cast<std::size_t>(hyper.nclusters);
  if (state.kappa.size() != n) throw DimensionMismatch("blocked_step: allocation length mismatch");
  if (state.clusters.size() != big_n) throw InvalidArgument("blocked_step: state has wrong N");
  const Niw g0 = base_measure(state, hyper);

  // (1) cluster parameters.
  const SuffStats ss = sufficient_stats(state.kappa, data, big_n);
  for (std::size_t k = 0; k < big_n; ++k)
    state.clusters[k] = ss.n[k] > 0.0 ? sample_niw(niw_posterior(g0, ss.n[k], ss.sum[k], ss.outer[k]), rng)
                                      : sample_niw(g0, rng);

  // (2) weights.
  std::vector<double> a, b;
  stick_parameters(state.counts(), state.alpha, a, b);
  auto sb = stat::sample_generalized_dirichlet(a, b, rng);
  state.weights = std::move(sb.weights);
  state.log_weights = std::move(sb.log_weights);
  state.sticks = std::move(sb.sticks);
  state.log1m_sticks = std::move(sb.log1m_sticks);

  // (3) allocations.
  std::vector<double> logw(big_n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* z = data.row(static_cast<Eigen::Index>(i)).data();
    for (std::size_t k = 0; k < big_n; ++k) logw[k] = state.log_weights[static_cast<Eigen::Index>(k)] + state.clusters[k].logpdf(z);
    state.kappa[i] = static_cast<int>(stat::gumbel_max_categorical(logw, rng));
  }

  // (4) concentration.
  if (hyper.update_alpha)
    state.alpha = stat::sample_gamma_rate(hyper.a0 + static_cast<double>(big_n) - 1.0,
                                          blocked_alpha_rate(hyper.b0, state.log1m_sticks), rng);
  // (5-7) base hyperparameters over all N clusters.
  if (hyper.hyperpriors) update_base_hypers(state, hyper, rng);
}

std::pair<double, double> lambda_conditional(const std::vector<Gaussian>& clusters, const Vector& m,
                                             const DpmHyper& hyper) {
  const double d = static_cast<double>(m.size());
  double quad = 0.0;
  for (const auto& g : clusters) {
    const Vector diff = g.mean() - m;
    const Vector w = g.chol().triangularView<Eigen::Lower>().solve(diff);
    quad += w.squaredNorm();
  }
  return {hyper.gamma1 + 0.5 * d * static_cast<double>(clusters.size()), hyper.gamma2 + 0.5 * quad};
}

void update_base_hypers(DpmState& state, const DpmHyper& hyper, RngStream& rng) {
  const auto d = static_cast<Eigen::Index>(hyper.dim());
  const double kp = static_cast<double>(state.clusters.size());
  Matrix sum_prec = Matrix::Zero(d, d);
  Vector sum_prec_zeta = Vector::Zero(d);
  for (const auto& g : state.clusters) {
    const Matrix prec = stat::spd_inverse_from_cholesky(g.chol());
    sum_prec += prec;
    sum_prec_zeta.noalias() += prec * g.mean();
  }
  // m | ... ~ N(m0*, S0*), S0*⁻¹ = λ ΣΩ⁻¹ + S0⁻¹.
  const Matrix s0_inv = stat::spd_inverse(hyper.S0);
  Matrix post_prec = state.lambda * sum_prec + s0_inv;
  stat::symmetrize(post_prec);
  const Matrix post_cov = stat::spd_inverse(post_prec);
  const Vector post_mean = post_cov * (state.lambda * sum_prec_zeta + s0_inv * hyper.m0);
  state.m = stat::sample_mvnormal(post_mean, stat::cholesky(post_cov), rng);
  // λ | ... ~ Gamma(γ1 + dK'/2, γ2 + ½ Σ (ζ-m)ᵀΩ⁻¹(ζ-m)).
  const auto [shape, rate] = lambda_conditional(state.clusters, state.m, hyper);
  state.lambda = stat::sample_gamma_rate(shape, rate, rng);
  // Ψ | ... ~ Wishart(νK' + ν0, (Ψ0⁻¹ + ΣΩ⁻¹)⁻¹).
  Matrix scale_inv = stat::spd_inverse(hyper.psi0) + sum_prec;
  stat::symmetrize(scale_inv);
  state.psi = stat::sample_wishart(hyper.nu * kp + hyper.nu0, stat::spd_inverse(scale_inv), rng);
}

double escobar_west_weight(double a0, double b0, std::size_t k, std::size_t n, double eta) {
  const double odds = (a0 + static_cast<double>(k) - 1.0) /
                      (static_cast<double>(n) * (b0 - std::log(eta)));
  return odds / (1.0 + odds);
}

double update_alpha_escobar_west(double alpha, std::size_t k, std::size_t n, double a0, double b0,
                                 RngStream& rng) {
  const double eta = stat::sample_beta(alpha + 1.0, static_cast<double>(n), rng);
  const double pi = escobar_west_weight(a0, b0, k, n, eta);
  const double rate = b0 - std::log(eta);
  const double shape = rng.uniform() < pi ? a0 + static_cast<double>(k)
                                          : a0 + static_cast<double>(k) - 1.0;
  return stat::sample_gamma_rate(shape, rate, rng);
}

DpmDraw snapshot(const DpmState& s) {
  DpmDraw d;
  d.zeta.reserve(s.clusters.size());
  d.omega.reserve(s.clusters.size());
  for (const auto& g : s.clusters) {
    d.zeta.push_back(g.mean());
    d.omega.push_back(g.cov());
  }
  if (s.sampler == Sampler::blocked) d.log_weights = s.log_weights;
  d.kappa = s.kappa;
  d.alpha = s.alpha;
  d.m = s.m;
  d.lambda = s.lambda;
  d.psi = s.psi;
  return d;
}

DpmPosterior run_mcmc_from(DpmState state, const Matrix& data, const DpmHyper& hyper,
                           const McmcSettings& mcmc, RngStream& rng, bool diag) {
  validate(mcmc);
  validate(hyper, state.sampler);
  if (data.cols() != static_cast<Eigen::Index>(hyper.dim()))
    throw DimensionMismatch("run_mcmc: data has " + std::to_string(data.cols()) +
                            " columns, hyperparameters have dimension " + std::to_string(hyper.dim()));
  if (!data.allFinite()) throw InvalidArgument("run_mcmc: data must be finite");
  const RowMatrix z = data;
  DpmPosterior post;
  post.sampler = state.sampler;
  post.hyper = hyper;
  post.n = static_cast<std::size_t>(data.rows());
  post.draws.reserve(static_cast<std::size_t>(mcmc.ndpost));
  if (diag) post.diagnostics.emplace();
  double alpha_sum = 0.0;
  const long total = total_steps(mcmc);
  for (long it = 0; it < total; ++it) {
    if (state.sampler == Sampler::polya)
      polya_step(state, z, hyper, rng);
    else
      blocked_step(state, z, hyper, rng);
    if (!is_kept_step(mcmc, it)) continue;
    post.draws.push_back(snapshot(state));
    if (diag) {
      auto& ds = *post.diagnostics;
      ds.loglik.push_back(diagnostics::log_likelihood(state, z));
      alpha_sum += state.alpha;
      if (state.sampler == Sampler::blocked) {
        const double alpha_star = alpha_sum / static_cast<double>(post.draws.size());
        ds.log_partition.push_back(diagnostics::log_marginal_partition_posterior(
            state.kappa, z, base_measure(state, hyper), hyper.nclusters, alpha_star));
      }
      ds.alpha.push_back(state.alpha);
      ds.lambda.push_back(state.lambda);
      ds.m.push_back(state.m);
      ds.psi.push_back(state.psi);
      ds.occupied.push_back(static_cast<int>(state.occupied()));
    }
  }
  post.final_state = std::move(state);
  return post;
}

DpmPosterior run_mcmc(const Matrix& data, const DpmHyper& hyper, const McmcSettings& mcmc,
                      Sampler sampler, RngStream& rng, bool diag) {
  validate(mcmc);
  DpmState state = initial_state(static_cast<std::size_t>(data.rows()), hyper, sampler, rng);
  return run_mcmc_from(std::move(state), data, hyper, mcmc, rng, diag);
}

}  // namespace dpmqte::dpm
