#include "dpmqte/stat/random.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dpmqte/error.hpp"
#include "dpmqte/stat/special.hpp"

namespace dpmqte::stat {

namespace {

// Marsaglia–Tsang for shape >= 1, unit rate.
double standard_gamma(double a, RngStream& rng) {
  if (a < 1.0) {
    const double g = standard_gamma(a + 1.0, rng);
    return g * std::exp(std::log(rng.uniform()) / a);
  }
  const double d = a - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = rng.normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform();
    const double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
    if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v;
  }
}

// log of a unit-rate gamma variate; stays finite for tiny shapes.
double log_standard_gamma(double a, RngStream& rng) {
  if (a < 1.0) return log_standard_gamma(a + 1.0, rng) + std::log(rng.uniform()) / a;
  return std::log(standard_gamma(a, rng));
}

double log_sum_exp(double x, double y) {
  const double m = std::max(x, y);
  return m + std::log(std::exp(x - m) + std::exp(y - m));
}

// Bartlett factor A (lower triangular) with A·Aᵀ ~ Wishart(nu, I).
Matrix bartlett_factor(double nu, Eigen::Index d, RngStream& rng) {
  Matrix a = Matrix::Zero(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    a(i, i) = std::sqrt(2.0 * standard_gamma(0.5 * (nu - static_cast<double>(i)), rng));
    for (Eigen::Index j = 0; j < i; ++j) a(i, j) = rng.normal();
  }
  return a;
}

}  // namespace

double sample_gamma_rate(double a, double b, RngStream& rng) {
  if (!(a > 0.0) || !(b > 0.0) || !std::isfinite(a) || !std::isfinite(b))
    throw InvalidArgument("sample_gamma_rate: shape and rate must be positive and finite");
  return standard_gamma(a, rng) / b;
}

double sample_beta(double a, double b, RngStream& rng) {
  if (!(a > 0.0) || !(b > 0.0)) throw InvalidArgument("sample_beta: parameters must be positive");
  if (a == 1.0) return -std::expm1(std::log(rng.uniform()) / b);
  const double x = standard_gamma(a, rng);
  const double y = standard_gamma(b, rng);
  return x / (x + y);
}

std::pair<double, double> sample_log_beta(double a, double b, RngStream& rng) {
  if (!(a > 0.0) || !(b > 0.0)) throw InvalidArgument("sample_log_beta: parameters must be positive");
  if (a == 1.0) {
    const double log_1mv = std::log(rng.uniform()) / b;
    return {std::log(-std::expm1(log_1mv)), log_1mv};
  }
  const double lx = log_standard_gamma(a, rng);
  const double ly = log_standard_gamma(b, rng);
  const double lz = log_sum_exp(lx, ly);
  return {lx - lz, ly - lz};
}

Matrix sample_wishart(double nu, const Matrix& psi, RngStream& rng) {
  const Eigen::Index d = psi.rows();
  if (!(nu >= static_cast<double>(d)))
    throw InvalidArgument("sample_wishart: degrees of freedom " + std::to_string(nu) +
                          " below dimension " + std::to_string(d));
  const Matrix l = cholesky(psi);
  const Matrix la = l * bartlett_factor(nu, d, rng);
  Matrix w = la * la.transpose();
  symmetrize(w);
  return w;
}

Matrix sample_inverse_wishart(double nu, const Matrix& psi, RngStream& rng) {
  const Eigen::Index d = psi.rows();
  if (!(nu > static_cast<double>(d) + 1.0))
    throw InvalidArgument("sample_inverse_wishart: nu must exceed dim + 1 for the mean to exist");
  const Matrix l = cholesky(psi);
  const Matrix a = bartlett_factor(nu, d, rng);
  // Σ = W⁻¹ with W = L⁻ᵀ A Aᵀ L⁻¹ ~ Wishart(nu, Ψ⁻¹), so Σ = (L A⁻ᵀ)(L A⁻ᵀ)ᵀ.
  const Matrix a_inv_t =
      a.transpose().triangularView<Eigen::Upper>().solve(Matrix::Identity(d, d));
  const Matrix b = l * a_inv_t;
  Matrix sigma = b * b.transpose();
  symmetrize(sigma);
  return sigma;
}

Vector sample_mvnormal(const Vector& mean, const Matrix& cov_chol, RngStream& rng) {
  Vector e(mean.size());
  for (Eigen::Index i = 0; i < e.size(); ++i) e[i] = rng.normal();
  return mean + cov_chol.triangularView<Eigen::Lower>() * e;
}

Vector stick_breaking_weights(std::span<const double> sticks) {
  const std::size_t n = sticks.size() + 1;
  Vector w(static_cast<Eigen::Index>(n));
  double remaining = 1.0;
  for (std::size_t k = 0; k + 1 < n; ++k) {
    w[static_cast<Eigen::Index>(k)] = sticks[k] * remaining;
    remaining *= 1.0 - sticks[k];
  }
  w[static_cast<Eigen::Index>(n - 1)] = remaining;
  return w;
}

StickBreaking sample_generalized_dirichlet(std::span<const double> a, std::span<const double> b,
                                           RngStream& rng) {
  if (a.size() != b.size()) throw DimensionMismatch("generalized Dirichlet: length(a) != length(b)");
  const auto n = static_cast<Eigen::Index>(a.size());
  StickBreaking out;
  out.sticks.resize(n);
  out.log1m_sticks.resize(n);
  out.log_weights.resize(n + 1);
  double log_remaining = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto [log_v, log_1mv] = sample_log_beta(a[static_cast<std::size_t>(k)],
                                                  b[static_cast<std::size_t>(k)], rng);
    out.sticks[k] = std::exp(log_v);
    out.log1m_sticks[k] = log_1mv;
    out.log_weights[k] = log_v + log_remaining;
    log_remaining += log_1mv;
  }
  out.log_weights[n] = log_remaining;
  out.weights = out.log_weights.array().exp();
  return out;
}

Vector sample_uniform_dirichlet(std::size_t n, RngStream& rng) {
  if (n == 0) throw InvalidArgument("sample_uniform_dirichlet: n must be >= 1");
  Vector u(static_cast<Eigen::Index>(n));
  for (auto& x : u) x = rng.exponential();
  return u / u.sum();
}

namespace {

// Robert (1995) exponential proposal for the standard normal on [a, b), a > 0.
double tail_normal(double a, double b, RngStream& rng) {
  if (b - a < 0.1) {
    for (;;) {
      const double z = a + (b - a) * rng.uniform();
      if (std::log(rng.uniform()) < 0.5 * (a * a - z * z)) return z;
    }
  }
  const double rate = 0.5 * (a + std::sqrt(a * a + 4.0));
  for (;;) {
    const double z = a + rng.exponential() / rate;
    if (z >= b) continue;
    const double diff = z - rate;
    if (std::log(rng.uniform()) < -0.5 * diff * diff) return z;
  }
}

double standard_truncated(double a, double b, RngStream& rng) {
  constexpr double kTail = 4.0;
  if (a >= kTail) return tail_normal(a, b, rng);
  if (b <= -kTail) return -tail_normal(-b, -a, rng);
  if (a > 0.0) {
    // Work on the mirrored lower tail to keep CDF values away from 1.
    const double lo = normal_cdf(-b), hi = normal_cdf(-a);
    return -normal_quantile(lo + (hi - lo) * rng.uniform());
  }
  const double lo = normal_cdf(a), hi = normal_cdf(b);
  return normal_quantile(lo + (hi - lo) * rng.uniform());
}

}  // namespace

double sample_truncated_normal(double mean, double sd, double lower, double upper,
                               RngStream& rng) {
  if (!(sd > 0.0)) throw InvalidArgument("sample_truncated_normal: sd must be positive");
  if (!(lower < upper)) throw InvalidArgument("sample_truncated_normal: empty interval");
  const double a = (lower - mean) / sd;
  const double b = (upper - mean) / sd;
  double x = mean + sd * standard_truncated(a, b, rng);
  if (x <= lower) x = std::nextafter(lower, upper);
  if (x >= upper) x = std::nextafter(upper, lower);
  return x;
}

std::size_t gumbel_max_categorical(std::span<const double> log_weights, RngStream& rng) {
  if (log_weights.empty()) throw InvalidArgument("gumbel_max_categorical: no weights");
  std::size_t best = log_weights.size();
  double best_score = -kInf;
  for (std::size_t k = 0; k < log_weights.size(); ++k) {
    const double lw = log_weights[k];
    if (std::isnan(lw) || lw == kInf)
      throw InvalidArgument("gumbel_max_categorical: log-weight is NaN or +inf");
    if (lw == -kInf) continue;
    const double score = lw - std::log(-std::log(rng.uniform()));
    if (score > best_score) {
      best_score = score;
      best = k;
    }
  }
  if (best == log_weights.size())
    throw InvalidArgument("gumbel_max_categorical: all weights are zero");
  return best;
}

}  // namespace dpmqte::stat
