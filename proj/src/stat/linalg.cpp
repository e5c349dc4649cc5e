#include "dpmqte/stat/linalg.hpp"

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "dpmqte/error.hpp"
#include "dpmqte/stat/special.hpp"

namespace dpmqte::stat {

Matrix cholesky(const Matrix& m) {
  if (m.rows() != m.cols()) throw DimensionMismatch("cholesky: matrix is not square");
  const Eigen::Index d = m.rows();
  Matrix l = Matrix::Zero(d, d);
  for (Eigen::Index j = 0; j < d; ++j) {
    double diag = m(j, j);
    for (Eigen::Index k = 0; k < j; ++k) diag -= l(j, k) * l(j, k);
    if (!(diag > 0.0) || !std::isfinite(diag))
      throw NotPositiveDefinite(static_cast<std::size_t>(j),
                                "cholesky: matrix not positive-definite at pivot " +
                                    std::to_string(j));
    const double ljj = std::sqrt(diag);
    l(j, j) = ljj;
    for (Eigen::Index i = j + 1; i < d; ++i) {
      double s = m(i, j);
      for (Eigen::Index k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / ljj;
    }
  }
  return l;
}

void symmetrize(Matrix& m) {
  const Matrix t = m.transpose();
  m = 0.5 * (m + t);
}

bool is_symmetric(const Matrix& m, double rel_tol) {
  if (m.rows() != m.cols()) return false;
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= rel_tol * scale;
}

Matrix spd_inverse_from_cholesky(const Matrix& chol) {
  const Eigen::Index d = chol.rows();
  const Matrix linv =
      chol.triangularView<Eigen::Lower>().solve(Matrix::Identity(d, d));
  Matrix inv = linv.transpose() * linv;
  symmetrize(inv);
  return inv;
}

Matrix spd_inverse(const Matrix& m) { return spd_inverse_from_cholesky(cholesky(m)); }

double log_det_from_cholesky(const Matrix& chol) {
  return 2.0 * chol.diagonal().array().log().sum();
}

double mvnormal_logpdf(const Vector& z, const Vector& mean, const Matrix& cov) {
  if (z.size() != mean.size() || cov.rows() != z.size() || cov.cols() != z.size())
    throw DimensionMismatch("mvnormal_logpdf: dimensions disagree");
  const Matrix l = cholesky(cov);
  const Vector y = l.triangularView<Eigen::Lower>().solve(z - mean);
  const double d = static_cast<double>(z.size());
  return -0.5 * (d * kLogTwoPi + log_det_from_cholesky(l) + y.squaredNorm());
}

Gaussian::Gaussian(Vector mean, const Matrix& cov)
    : mean_(std::move(mean)), cov_(cov), chol_(cholesky(cov)) {
  if (cov.rows() != mean_.size()) throw DimensionMismatch("Gaussian: dimensions disagree");
  const double d = static_cast<double>(mean_.size());
  log_norm_ = -0.5 * (d * kLogTwoPi + log_det_from_cholesky(chol_));
}

double Gaussian::logpdf(const double* z) const {
  const Eigen::Index d = mean_.size();
  constexpr Eigen::Index kStack = 16;
  std::array<double, kStack> stack{};
  std::vector<double> heap;
  double* y = stack.data();
  if (d > kStack) {
    heap.resize(static_cast<std::size_t>(d));
    y = heap.data();
  }
  const double* l = chol_.data();  // column-major
  double q = 0.0;
  for (Eigen::Index i = 0; i < d; ++i) {
    double s = z[i] - mean_[i];
    for (Eigen::Index j = 0; j < i; ++j) s -= l[i + j * d] * y[j];
    y[i] = s / l[i + i * d];
    q += y[i] * y[i];
  }
  return log_norm_ - 0.5 * q;
}

}  // namespace dpmqte::stat
