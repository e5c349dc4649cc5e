#include "oracles.hpp"

#include <boost/math/distributions/gamma.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>

#include "dpmqte/stat/ks.hpp"
#include "dpmqte/stat/random.hpp"
#include "dpmqte/stat/rng.hpp"

namespace oracles {

using namespace dpmqte;
using boost::math::quadrature::gauss_kronrod;

double niw_marginal_quadrature(const dpm::Niw& prior, const std::vector<double>& z) {
  const double m = prior.m(0), lam = prior.lambda, nu = prior.nu, psi = prior.psi(0, 0);
  // σ² ~ InvGamma(ν/2, ψ/2); integrate over t = log σ² to tame the tails.
  const double a = 0.5 * nu, b = 0.5 * psi;
  const double log_ig_norm = a * std::log(b) - std::lgamma(a);
  auto outer = [&](double t) {
    const double s2 = std::exp(t);
    const double log_prior_s2 = log_ig_norm - (a + 1.0) * t - b / s2 + t;  // Jacobian e^t
    const double sd_mu = std::sqrt(s2 / lam);
    auto inner = [&](double mu) {
      double lp = -0.5 * std::log(2.0 * M_PI * s2 / lam) - 0.5 * (mu - m) * (mu - m) * lam / s2;
      for (double zi : z) lp += -0.5 * std::log(2.0 * M_PI * s2) - 0.5 * (zi - mu) * (zi - mu) / s2;
      return std::exp(lp + log_prior_s2);
    };
    // Centre the μ integral on the conditional posterior mean.
    double sz = 0.0;
    for (double zi : z) sz += zi;
    const double c = (lam * m + sz) / (lam + static_cast<double>(z.size()));
    const double w = sd_mu * 12.0;
    return gauss_kronrod<double, 61>::integrate(inner, c - w, c + w, 15, 1e-13);
  };
  return gauss_kronrod<double, 61>::integrate(outer, -30.0, 30.0, 15, 1e-13);
}

ConjugacyReport conjugacy_suite(int cases, std::uint64_t seed) {
  stat::RngStream rng(seed);
  ConjugacyReport rep;
  for (int c = 0; c < cases; ++c) {
    dpm::Niw prior;
    prior.m = Vector::Constant(1, rng.uniform() * 4.0 - 2.0);
    prior.lambda = 0.2 + 2.0 * rng.uniform();
    prior.nu = 3.0 + 4.0 * rng.uniform();
    prior.psi = Matrix::Constant(1, 1, 0.5 + 2.0 * rng.uniform());
    const int n = 1 + static_cast<int>(rng.uniform() * 4.0);
    std::vector<double> z;
    for (int i = 0; i < n; ++i) z.push_back(prior.m(0) + 2.0 * rng.normal());
    const double znew = prior.m(0) + 2.0 * rng.normal();

    Matrix cluster(n, 1);
    for (int i = 0; i < n; ++i) cluster(i, 0) = z[static_cast<std::size_t>(i)];
    const dpm::Niw post = dpm::niw_posterior(prior, cluster);
    const double closed = std::exp(dpm::niw_predictive_logpdf(post, &znew));

    std::vector<double> zplus = z;
    zplus.push_back(znew);
    const double quad = niw_marginal_quadrature(prior, zplus) / niw_marginal_quadrature(prior, z);
    rep.max_abs_error = std::max(rep.max_abs_error, std::abs(closed - quad));
    ++rep.cases;
  }
  return rep;
}

GirReport getting_it_right(dpm::Sampler sampler, int draws, int thin, std::uint64_t seed) {
  stat::RngStream rng(seed);
  const int n = 4;
  dpm::DpmHyper h;
  h.update_alpha = true;
  h.hyperpriors = true;
  h.a0 = 2.0;
  h.b0 = 1.0;
  h.m0 = Vector::Zero(1);
  h.S0 = Matrix::Identity(1, 1);
  h.gamma1 = 3.0;
  h.gamma2 = 2.0;
  h.nu = 3.0;
  h.nu0 = 3.0;
  h.psi0 = Matrix::Constant(1, 1, 1.0 / 3.0);
  h.nclusters = 8;
  h.m = h.m0;
  h.psi = h.nu0 * h.psi0;

  dpm::DpmState s = dpm::initial_state(n, h, sampler, rng);
  dpm::RowMatrix z(n, 1);
  auto regenerate = [&] {
    for (int i = 0; i < n; ++i) {
      const auto& g = s.clusters[static_cast<std::size_t>(s.kappa[static_cast<std::size_t>(i)])];
      z(i, 0) = g.mean()(0) + std::sqrt(g.cov()(0, 0)) * rng.normal();
    }
  };
  regenerate();
  std::vector<double> alpha, lambda;
  for (int t = 0; t < (draws + 100) * thin; ++t) {
    if (sampler == dpm::Sampler::polya)
      dpm::polya_step(s, z, h, rng);
    else
      dpm::blocked_step(s, z, h, rng);
    regenerate();
    if (t >= 100 * thin && (t + 1) % thin == 0) {
      alpha.push_back(s.alpha);
      lambda.push_back(s.lambda);
    }
  }
  const boost::math::gamma_distribution<> pa(h.a0, 1.0 / h.b0), pl(h.gamma1, 1.0 / h.gamma2);
  const auto ka = stat::ks_test(alpha, [&](double x) { return boost::math::cdf(pa, x); });
  const auto kl = stat::ks_test(lambda, [&](double x) { return boost::math::cdf(pl, x); });
  return {ka.p_value, kl.p_value};
}

}  // namespace oracles
