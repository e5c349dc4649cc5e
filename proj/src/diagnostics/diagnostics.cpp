#include "dpmqte/diagnostics/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dpmqte/error.hpp"
#include "dpmqte/stat/special.hpp"

namespace dpmqte::diagnostics {

double log_likelihood(const dpm::DpmState& state, const dpm::RowMatrix& data) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < data.rows(); ++i)
    s += state.clusters[static_cast<std::size_t>(state.kappa[static_cast<std::size_t>(i)])].logpdf(
        data.row(i).data());
  return s;
}

double log_likelihood(const dpm::DpmDraw& draw, const dpm::RowMatrix& data) {
  std::vector<stat::Gaussian> g;
  for (std::size_t k = 0; k < draw.zeta.size(); ++k) g.emplace_back(draw.zeta[k], draw.omega[k]);
  double s = 0.0;
  for (Eigen::Index i = 0; i < data.rows(); ++i)
    s += g[static_cast<std::size_t>(draw.kappa[static_cast<std::size_t>(i)])].logpdf(data.row(i).data());
  return s;
}

double log_partition_likelihood(const std::vector<int>& kappa, const dpm::RowMatrix& data,
                                const dpm::Niw& base) {
  const auto d = data.cols();
  const auto n = data.rows();
  if (static_cast<Eigen::Index>(kappa.size()) != n)
    throw DimensionMismatch("partition likelihood: allocation length mismatch");
  const int kmax = kappa.empty() ? 0 : *std::max_element(kappa.begin(), kappa.end()) + 1;
  std::vector<double> count(static_cast<std::size_t>(kmax), 0.0);
  std::vector<Vector> sum(static_cast<std::size_t>(kmax), Vector::Zero(d));
  std::vector<Matrix> outer(static_cast<std::size_t>(kmax), Matrix::Zero(d, d));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(kappa[static_cast<std::size_t>(i)]);
    const Vector z = data.row(i).transpose();
    count[k] += 1.0;
    sum[k] += z;
    outer[k].noalias() += z * z.transpose();
  }
  const double dd = static_cast<double>(d);
  const double log_det_psi = stat::log_det_from_cholesky(stat::cholesky(base.psi));
  double s = -0.5 * static_cast<double>(n) * dd * stat::kLogPi;
  for (std::size_t k = 0; k < count.size(); ++k) {
    if (count[k] == 0.0) continue;
    const dpm::Niw post = dpm::niw_posterior(base, count[k], sum[k], outer[k]);
    s += 0.5 * base.nu * log_det_psi - stat::log_multivariate_gamma(static_cast<int>(d), 0.5 * base.nu) +
         stat::log_multivariate_gamma(static_cast<int>(d), 0.5 * post.nu) +
         0.5 * dd * std::log(base.lambda / post.lambda) -
         0.5 * post.nu * stat::log_det_from_cholesky(stat::cholesky(post.psi));
  }
  return s;
}

double log_allocation_prior(const std::vector<int>& kappa, int nclusters, double alpha) {
  if (nclusters < 2) throw InvalidArgument("allocation prior: N must be >= 2");
  const auto big_n = static_cast<std::size_t>(nclusters);
  std::vector<double> nk(big_n, 0.0);
  for (int k : kappa) {
    if (k < 0 || static_cast<std::size_t>(k) >= big_n)
      throw InvalidArgument("allocation prior: cluster index out of range");
    nk[static_cast<std::size_t>(k)] += 1.0;
  }
  const double n = static_cast<double>(kappa.size());
  // a_k = n_k + 1, b_k = Σ_{j>k} n_j + α for k = 1..N-1.
  std::vector<double> b(big_n - 1);
  double tail = 0.0;
  for (std::size_t k = big_n - 1; k-- > 0;) {
    tail += nk[k + 1];
    b[k] = tail + alpha;
  }
  double s = static_cast<double>(nclusters - 1) * std::log(alpha) + std::lgamma(b[big_n - 2]) -
             std::lgamma(n + alpha + 1.0);
  for (std::size_t k = 0; k + 1 < big_n; ++k) s += std::lgamma(nk[k] + 1.0);
  for (std::size_t k = 0; k + 2 < big_n; ++k) s -= std::log(b[k]);
  return s;
}

double log_marginal_partition_posterior(const std::vector<int>& kappa, const dpm::RowMatrix& data,
                                        const dpm::Niw& base, int nclusters, double alpha_star) {
  return log_partition_likelihood(kappa, data, base) +
         log_allocation_prior(kappa, nclusters, alpha_star);
}

std::vector<double> autocorrelation(std::span<const double> x, std::size_t max_lag) {
  const std::size_t n = x.size();
  if (n < max_lag + 2) throw InvalidArgument("autocorrelation: series shorter than max_lag + 2");
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(n);
  double c0 = 0.0;
  for (double v : x) c0 += (v - mean) * (v - mean);
  if (c0 == 0.0) throw InvalidArgument("autocorrelation: constant series");
  std::vector<double> acf(max_lag + 1);
  acf[0] = 1.0;
  for (std::size_t lag = 1; lag <= max_lag; ++lag) {
    double c = 0.0;
    for (std::size_t t = 0; t + lag < n; ++t) c += (x[t] - mean) * (x[t + lag] - mean);
    acf[lag] = c / c0;
  }
  return acf;
}

}  // namespace dpmqte::diagnostics
