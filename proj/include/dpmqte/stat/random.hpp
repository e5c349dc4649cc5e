#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <utility>

#include "dpmqte/stat/linalg.hpp"
#include "dpmqte/stat/rng.hpp"

namespace dpmqte::stat {

/// Gamma with shape `a` and rate `b`, so E = a/b.
double sample_gamma_rate(double a, double b, RngStream& rng);
double sample_beta(double a, double b, RngStream& rng);

/// Wishart with E(W) = nu·psi. Requires nu >= dim.
Matrix sample_wishart(double nu, const Matrix& psi, RngStream& rng);

/// Inverse-Wishart with E(Σ) = psi/(nu - d - 1). Requires nu > d + 1.
Matrix sample_inverse_wishart(double nu, const Matrix& psi, RngStream& rng);

Vector sample_mvnormal(const Vector& mean, const Matrix& cov_chol, RngStream& rng);

/// (log V, log(1 - V)) for V ~ Beta(a, b), accurate for very small shapes.
std::pair<double, double> sample_log_beta(double a, double b, RngStream& rng);

/// Truncated stick-breaking weights and the Beta variates that built them.
struct StickBreaking {
  Vector weights;        // N entries on the simplex
  Vector log_weights;    // computed in log space, finite even when a weight underflows
  Vector sticks;         // V_1..V_{N-1}; V_N = 1 is implicit
  Vector log1m_sticks;   // log(1 - V_k), accurate when V_k rounds to 1
};

/// Generalized Dirichlet GD(a_1, b_1, ..., a_{N-1}, b_{N-1}) by stick breaking.
StickBreaking sample_generalized_dirichlet(std::span<const double> a,
                                           std::span<const double> b,
                                           RngStream& rng);

/// Deterministic half of the construction above: ω_k = V_k·∏_{j<k}(1 - V_j), V_N = 1.
Vector stick_breaking_weights(std::span<const double> sticks);

/// Symmetric Dirichlet(1, ..., 1) weights of length n.
Vector sample_uniform_dirichlet(std::size_t n, RngStream& rng);

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Normal(mean, sd²) restricted to (lower, upper); bounds may be infinite.
double sample_truncated_normal(double mean, double sd, double lower, double upper,
                               RngStream& rng);

/// Index k with probability ∝ exp(log_weights[k]), via the Gumbel-max trick.
std::size_t gumbel_max_categorical(std::span<const double> log_weights, RngStream& rng);

}  // namespace dpmqte::stat
