#pragma once

#include <Eigen/Dense>
#include <cstddef>

namespace dpmqte {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

}  // namespace dpmqte

namespace dpmqte::stat {

/// Lower-triangular L with L·Lᵀ = m. Throws NotPositiveDefinite carrying the
/// failing pivot.
Matrix cholesky(const Matrix& m);

/// Replace m by (m + mᵀ)/2.
void symmetrize(Matrix& m);

bool is_symmetric(const Matrix& m, double rel_tol = 1e-12);

/// Inverse of a symmetric positive-definite matrix through its Cholesky factor.
Matrix spd_inverse(const Matrix& m);
Matrix spd_inverse_from_cholesky(const Matrix& chol);

/// log|m| from the Cholesky factor of m.
double log_det_from_cholesky(const Matrix& chol);

double mvnormal_logpdf(const Vector& z, const Vector& mean, const Matrix& cov);

/// Multivariate normal with the factorization cached, for repeated log-density
/// evaluation in the samplers' inner loops.
class Gaussian {
 public:
  Gaussian() = default;
  Gaussian(Vector mean, const Matrix& cov);

  std::size_t dim() const noexcept { return static_cast<std::size_t>(mean_.size()); }
  const Vector& mean() const noexcept { return mean_; }
  const Matrix& cov() const noexcept { return cov_; }
  const Matrix& chol() const noexcept { return chol_; }
  double log_norm() const noexcept { return log_norm_; }

  /// `z` points to dim() contiguous values.
  double logpdf(const double* z) const;
  double logpdf(const Vector& z) const { return logpdf(z.data()); }

 private:
  Vector mean_;
  Matrix cov_;
  Matrix chol_;
  double log_norm_ = 0.0;
};

}  // namespace dpmqte::stat
