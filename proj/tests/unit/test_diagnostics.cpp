#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "../support/oracles.hpp"
#include "dpmqte/diagnostics/diagnostics.hpp"
#include "dpmqte/error.hpp"
#include "dpmqte/stat/ks.hpp"
#include "dpmqte/stat/linalg.hpp"
#include "dpmqte/stat/rng.hpp"
#include "dpmqte/stat/special.hpp"

using namespace dpmqte;

TEST_CASE("log likelihood of one point at the mean") {
  dpm::DpmState s;
  s.clusters.emplace_back(Vector::Zero(3), Matrix::Identity(3, 3));
  s.kappa = {0};
  dpm::RowMatrix z = dpm::RowMatrix::Zero(1, 3);
  CHECK(diagnostics::log_likelihood(s, z) == doctest::Approx(-1.5 * stat::kLogTwoPi));
}

TEST_CASE("log likelihood matches per-point logpdf sum and is relabel invariant") {
  stat::RngStream rng(3);
  dpm::RowMatrix z(12, 2);
  for (int i = 0; i < 12; ++i) z.row(i) << rng.normal(), rng.normal();
  dpm::DpmState s;
  Matrix c1(2, 2), c2(2, 2);
  c1 << 1.0, 0.3, 0.3, 2.0;
  c2 << 0.5, -0.1, -0.1, 0.7;
  s.clusters.emplace_back(Vector::Constant(2, 0.5), c1);
  s.clusters.emplace_back(Vector::Constant(2, -0.5), c2);
  for (int i = 0; i < 12; ++i) s.kappa.push_back(i % 3 == 0);
  double ref = 0.0;
  for (int i = 0; i < 12; ++i) {
    const Vector zi = z.row(i).transpose();
    const auto& g = s.clusters[static_cast<std::size_t>(s.kappa[static_cast<std::size_t>(i)])];
    ref += stat::mvnormal_logpdf(zi, g.mean(), g.cov());
  }
  const double ll = diagnostics::log_likelihood(s, z);
  CHECK(std::abs(ll - ref) < 1e-12 * std::max(1.0, std::abs(ref)));

  dpm::DpmState swapped = s;
  std::swap(swapped.clusters[0], swapped.clusters[1]);
  for (int& k : swapped.kappa) k = 1 - k;
  CHECK(diagnostics::log_likelihood(swapped, z) == doctest::Approx(ll).epsilon(1e-14));
  CHECK(diagnostics::log_likelihood(dpm::snapshot(s), z) == doctest::Approx(ll).epsilon(1e-14));
}

TEST_CASE("partition likelihood matches quadrature for two points in one cluster") {
  dpm::Niw base{Vector::Constant(1, 0.2), 0.8, 3.5, Matrix::Constant(1, 1, 1.3)};
  dpm::RowMatrix z(2, 1);
  z << 0.4, -0.9;
  const double closed = std::exp(diagnostics::log_partition_likelihood({0, 0}, z, base));
  const double quad = oracles::niw_marginal_quadrature(base, {0.4, -0.9});
  CHECK(std::abs(closed - quad) < 1e-5);
  CHECK(closed == doctest::Approx(quad).epsilon(1e-6));

  // Split partition factorizes.
  const double split = std::exp(diagnostics::log_partition_likelihood({0, 1}, z, base));
  CHECK(split == doctest::Approx(oracles::niw_marginal_quadrature(base, {0.4}) *
                                 oracles::niw_marginal_quadrature(base, {-0.9}))
                     .epsilon(1e-6));
}

TEST_CASE("allocation prior matches the product of beta functions") {
  const std::vector<int> kappa{0, 0, 2, 1, 2, 4, 0, 2};
  const int big_n = 5;
  for (double alpha : {0.3, 1.0, 7.5}) {
    std::vector<double> nk(big_n, 0.0);
    for (int k : kappa) nk[static_cast<std::size_t>(k)] += 1.0;
    double ref = 0.0;
    for (int k = 0; k + 1 < big_n; ++k) {
      double tail = alpha;
      for (int j = k + 1; j < big_n; ++j) tail += nk[static_cast<std::size_t>(j)];
      const double a = nk[static_cast<std::size_t>(k)] + 1.0;
      // E[V^(n_k) (1-V)^(tail-α)] under V ~ Beta(1, α).
      ref += std::log(alpha) + std::lgamma(a) + std::lgamma(tail) - std::lgamma(a + tail);
    }
    CHECK(diagnostics::log_allocation_prior(kappa, big_n, alpha) == doctest::Approx(ref).epsilon(1e-12));
  }
  CHECK_THROWS_AS(diagnostics::log_allocation_prior({0, 7}, 5, 1.0), InvalidArgument);
}

TEST_CASE("partition posterior is order invariant and favours the closer cluster") {
  dpm::Niw base{Vector::Zero(1), 0.5, 3.0, Matrix::Constant(1, 1, 1.0)};
  dpm::RowMatrix z(6, 1);
  z << -5.0, -5.1, -4.9, 5.0, 5.2, 4.8;
  const std::vector<int> good{0, 0, 0, 1, 1, 1}, bad{0, 0, 1, 1, 1, 1};
  const double g = diagnostics::log_marginal_partition_posterior(good, z, base, 4, 1.0);
  const double b = diagnostics::log_marginal_partition_posterior(bad, z, base, 4, 1.0);
  CHECK(g > b);

  dpm::RowMatrix zp(6, 1);
  zp << -4.9, -5.0, -5.1, 4.8, 5.0, 5.2;
  CHECK(diagnostics::log_marginal_partition_posterior(good, zp, base, 4, 1.0) ==
        doctest::Approx(g).epsilon(1e-12));
}

TEST_CASE("autocorrelation estimator") {
  stat::RngStream rng(1);
  const std::size_t n = 10000;
  std::vector<double> noise(n), ar(n);
  double x = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    noise[t] = rng.normal();
    x = 0.9 * x + rng.normal();
    ar[t] = x;
  }
  const auto a = diagnostics::autocorrelation(noise, 5);
  CHECK(a[0] == 1.0);
  CHECK(std::abs(a[1]) < 3.0 / std::sqrt(static_cast<double>(n)));
  const auto b = diagnostics::autocorrelation(ar, 2);
  CHECK(b[0] == 1.0);
  CHECK(b[1] == doctest::Approx(0.9).epsilon(0.05 / 0.9));

  const std::vector<double> flat(10, 2.0);
  CHECK_THROWS_AS(diagnostics::autocorrelation(flat, 2), InvalidArgument);
  CHECK_THROWS_AS(diagnostics::autocorrelation(std::span<const double>(noise.data(), 3), 2),
                  InvalidArgument);
}

TEST_CASE("diagnostics do not touch the chain") {
  stat::RngStream rng(2);
  dpm::RowMatrix z(30, 1);
  for (int i = 0; i < 30; ++i) z(i, 0) = rng.normal();
  const auto h = dpm::default_hypers(z, true, true, 10);
  stat::RngStream a(3), b(3);
  const auto with = dpm::run_mcmc(z, h, {5, 20, 1}, dpm::Sampler::blocked, a, true);
  const auto without = dpm::run_mcmc(z, h, {5, 20, 1}, dpm::Sampler::blocked, b, false);
  for (std::size_t i = 0; i < 20; ++i) CHECK(with.draws[i].kappa == without.draws[i].kappa);
  CHECK(a.uniform() == b.uniform());
}

TEST_CASE("kolmogorov-smirnov helper") {
  CHECK(stat::kolmogorov_survival(0.0) == 1.0);
  CHECK(stat::kolmogorov_survival(1.3580986) == doctest::Approx(0.05).epsilon(1e-4));
  CHECK(stat::kolmogorov_survival(0.8) == doctest::Approx(0.5441).epsilon(1e-3));
  stat::RngStream rng(4);
  std::vector<double> u(2000);
  for (double& v : u) v = rng.uniform();
  const auto r = stat::ks_test(u, [](double x) { return std::clamp(x, 0.0, 1.0); });
  CHECK(r.p_value > 0.01);
  for (double& v : u) v = v * v;
  CHECK(stat::ks_test(u, [](double x) { return std::clamp(x, 0.0, 1.0); }).p_value < 1e-6);
}
