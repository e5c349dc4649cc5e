#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "../support/oracles.hpp"
#include "dpmqte/datagen/datagen.hpp"
#include "dpmqte/diagnostics/diagnostics.hpp"
#include "dpmqte/dpm/dpm.hpp"
#include "dpmqte/dpm/serialize.hpp"
#include "dpmqte/error.hpp"
#include "dpmqte/stat/random.hpp"
#include "dpmqte/stat/rng.hpp"

using namespace dpmqte;
using dpm::Sampler;

namespace {

dpm::RowMatrix two_clouds(int per_cloud, stat::RngStream& rng, std::vector<int>* truth = nullptr) {
  dpm::RowMatrix z(2 * per_cloud, 2);
  for (int i = 0; i < 2 * per_cloud; ++i) {
    const double c = i < per_cloud ? -5.0 : 5.0;
    z(i, 0) = c + 0.05 * rng.normal();
    z(i, 1) = c + 0.05 * rng.normal();
    if (truth) truth->push_back(i < per_cloud ? 0 : 1);
  }
  return z;
}

double rand_index(const std::vector<int>& a, const std::vector<int>& b) {
  double agree = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = i + 1; j < a.size(); ++j) {
      agree += ((a[i] == a[j]) == (b[i] == b[j]));
      pairs += 1.0;
    }
  return agree / pairs;
}

}  // namespace

TEST_CASE("default hyperparameters are scaled to the data") {
  Matrix x(3, 2);
  x << 0, 0, 4, 8, 2, 1;
  const auto h = dpm::default_hypers(x, true, true, 50);
  CHECK(h.S0(0, 0) == doctest::Approx(1.0));
  CHECK(h.S0(1, 1) == doctest::Approx(4.0));
  CHECK(h.S0(0, 1) == 0.0);
  CHECK(h.gamma2 / (h.gamma1 - 1.0) == doctest::Approx(1.0));
  CHECK(h.a0 / h.b0 == doctest::Approx(10.0));
  CHECK(h.nu == 4.0);
  CHECK(h.nu0 == 4.0);
  CHECK(h.psi0(1, 1) == doctest::Approx(1.0));
  CHECK(h.m0(1) == doctest::Approx(3.0));

  Matrix c(3, 2);
  c << 1, 0, 1, 2, 1, 3;
  CHECK_THROWS_AS(dpm::default_hypers(c), InvalidArgument);
  CHECK_THROWS_AS(dpm::default_hypers(Matrix::Zero(1, 2)), InvalidArgument);
}

TEST_CASE("hyperparameter validation") {
  Matrix x(4, 1);
  x << 0, 1, 2, 5;
  auto h = dpm::default_hypers(x, false, false, 50);
  CHECK_NOTHROW(dpm::validate(h, Sampler::blocked));
  h.nu = 2.5;
  CHECK_THROWS_AS(dpm::validate(h, Sampler::blocked), InvalidArgument);
  h.nu = 3.0;
  h.nclusters = 1;
  CHECK_THROWS_AS(dpm::validate(h, Sampler::blocked), InvalidArgument);
  CHECK_NOTHROW(dpm::validate(h, Sampler::polya));
  h.psi(0, 0) = -1.0;
  CHECK_THROWS_AS(dpm::validate(h, Sampler::polya), InvalidArgument);
  CHECK(dpm::parse_sampler("neal") == Sampler::polya);
  CHECK(dpm::parse_sampler("truncated") == Sampler::blocked);
  CHECK_THROWS_AS(dpm::parse_sampler("slice"), InvalidArgument);
}

TEST_CASE("niw posterior hand example and empty cluster") {
  dpm::Niw prior{Vector::Zero(1), 1.0, 4.0, Matrix::Constant(1, 1, 3.0)};
  Matrix one(1, 1);
  one << 2.0;
  const auto post = dpm::niw_posterior(prior, one);
  CHECK(post.m(0) == doctest::Approx(1.0));
  CHECK(post.lambda == 2.0);
  CHECK(post.nu == 5.0);
  CHECK(post.psi(0, 0) == doctest::Approx(5.0));

  const auto same = dpm::niw_posterior(prior, Matrix(0, 1));
  CHECK(same.m(0) == 0.0);
  CHECK(same.psi(0, 0) == 3.0);
  CHECK_THROWS_AS(dpm::niw_posterior(prior, Matrix::Zero(2, 2)), DimensionMismatch);
}

TEST_CASE("niw posterior from sufficient statistics matches the data form") {
  stat::RngStream rng(4);
  Matrix z(7, 3);
  for (int i = 0; i < 7; ++i)
    for (int j = 0; j < 3; ++j) z(i, j) = rng.normal() + j;
  dpm::Niw prior{Vector::Constant(3, 0.5), 0.7, 6.0, Matrix::Identity(3, 3) * 2.0};
  const Vector sum = z.colwise().sum().transpose();
  const Matrix outer = z.transpose() * z;
  const auto a = dpm::niw_posterior(prior, z);
  const auto b = dpm::niw_posterior(prior, 7.0, sum, outer);
  CHECK((a.m - b.m).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((a.psi - b.psi).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("d=1 predictive matches quadrature") {
  const auto rep = oracles::conjugacy_suite(20, 11);
  CHECK(rep.cases == 20);
  CHECK(rep.max_abs_error < 1e-6);
}

TEST_CASE("stick parameters and alpha rate identity") {
  std::vector<double> a, b;
  dpm::stick_parameters({6, 0, 0, 0}, 2.5, a, b);
  REQUIRE(a.size() == 3);
  CHECK(a[0] == 7.0);
  CHECK(a[1] == 1.0);
  CHECK(a[2] == 1.0);
  CHECK(b[0] == 2.5);
  CHECK(b[1] == 2.5);
  CHECK(b[2] == 2.5);
  dpm::stick_parameters({1, 2, 3}, 1.0, a, b);
  CHECK(b[0] == 6.0);
  CHECK(b[1] == 4.0);

  stat::RngStream rng(2);
  const std::vector<double> ga{2, 3, 1, 4}, gb{1, 2, 2, 1};
  const auto sb = stat::sample_generalized_dirichlet(ga, gb, rng);
  CHECK(dpm::blocked_alpha_rate(1.0, sb.log1m_sticks) ==
        doctest::Approx(1.0 - std::log(sb.weights(sb.weights.size() - 1))).epsilon(1e-12));
  for (Eigen::Index k = 0; k < sb.sticks.size(); ++k)
    CHECK(std::log1p(-sb.sticks(k)) == doctest::Approx(sb.log1m_sticks(k)).epsilon(1e-10));

  // Tiny b pushes V to 1 in double precision; the log form stays finite.
  const std::vector<double> ta{5, 5}, tb{1e-3, 1e-3};
  const auto tiny = stat::sample_generalized_dirichlet(ta, tb, rng);
  CHECK(std::isfinite(dpm::blocked_alpha_rate(1.0, tiny.log1m_sticks)));
  CHECK(tiny.log_weights.allFinite());
}

TEST_CASE("escobar-west odds and support") {
  const double eta = std::exp(-1.0);  // b0 - log η = 2
  const double pi = dpm::escobar_west_weight(10.0, 1.0, 5, 100, eta);
  CHECK(pi / (1.0 - pi) == doctest::Approx(0.07));
  CHECK(pi == doctest::Approx(0.0654).epsilon(1e-3));

  // With K* fixed the α chain settles between the two gamma component means.
  stat::RngStream rng(3);
  double alpha = 1.0, sum = 0.0;
  const int iters = 20000;
  for (int t = 0; t < iters; ++t) {
    alpha = dpm::update_alpha_escobar_west(alpha, 5, 100, 10.0, 1.0, rng);
    CHECK_MESSAGE(alpha > 0.0, "alpha must stay positive");
    sum += alpha;
  }
  const double mean = sum / iters;
  CHECK(mean > 1.0);
  CHECK(mean < 15.0);
}

TEST_CASE("lambda conditional vanishes quadratic form at zeta = m") {
  dpm::DpmHyper h;
  h.gamma1 = 3.0;
  h.gamma2 = 2.0;
  std::vector<stat::Gaussian> cl{stat::Gaussian(Vector::Constant(2, 1.0), Matrix::Identity(2, 2))};
  const auto [shape, rate] = dpm::lambda_conditional(cl, Vector::Constant(2, 1.0), h);
  CHECK(shape == 4.0);
  CHECK(rate == 2.0);
}

TEST_CASE("single observation always occupies one cluster") {
  stat::RngStream rng(1);
  Matrix x(1, 2);
  x << 0.3, -0.2;
  dpm::DpmHyper h;
  h.update_alpha = false;
  h.hyperpriors = false;
  h.alpha = 10.0;
  h.m = Vector::Zero(2);
  h.lambda = 0.5;
  h.nu = 4.0;
  h.psi = Matrix::Identity(2, 2);
  auto s = dpm::initial_state(1, h, Sampler::polya, rng);
  const dpm::RowMatrix z = x;
  for (int t = 0; t < 50; ++t) {
    dpm::polya_step(s, z, h, rng);
    CHECK(s.clusters.size() == 1);
    CHECK(s.kappa[0] == 0);
  }
}

TEST_CASE("polya sampler separates two clouds and keeps invariants") {
  stat::RngStream rng(9);
  const auto z = two_clouds(30, rng);
  auto h = dpm::default_hypers(z, true, true, 20);
  auto s = dpm::initial_state(60, h, Sampler::polya, rng);
  int two = 0, kept = 0;
  for (int t = 0; t < 300; ++t) {
    dpm::polya_step(s, z, h, rng);
    const auto c = s.counts();
    int total = 0;
    for (int v : c) {
      CHECK(v > 0);
      total += v;
    }
    CHECK(total == 60);
    if (t >= 100) {
      ++kept;
      two += s.occupied() == 2;
    }
  }
  CHECK(static_cast<double>(two) / kept >= 0.95);
}

TEST_CASE("tiny alpha collapses the polya chain to one cluster") {
  stat::RngStream rng(5);
  dpm::RowMatrix z(40, 1);
  for (int i = 0; i < 40; ++i) z(i, 0) = rng.normal();
  auto h = dpm::default_hypers(z, false, false, 20);
  h.alpha = 1e-8;
  auto s = dpm::initial_state(40, h, Sampler::polya, rng);
  for (int t = 0; t < 100; ++t) dpm::polya_step(s, z, h, rng);
  CHECK(s.occupied() == 1);
}

TEST_CASE("blocked sampler recovers a two-partition with N=2") {
  stat::RngStream rng(12);
  std::vector<int> truth;
  const auto z = two_clouds(30, rng, &truth);
  auto h = dpm::default_hypers(z, true, true, 2);
  auto s = dpm::initial_state(60, h, Sampler::blocked, rng);
  double ri = 0.0;
  int kept = 0;
  for (int t = 0; t < 300; ++t) {
    dpm::blocked_step(s, z, h, rng);
    CHECK(s.clusters.size() == 2);
    CHECK(s.weights.sum() == doctest::Approx(1.0));
    CHECK(s.weights.minCoeff() >= 0.0);
    if (t >= 100) {
      ri += rand_index(s.kappa, truth);
      ++kept;
    }
  }
  CHECK(ri / kept > 0.95);
}

TEST_CASE("run_mcmc bookkeeping") {
  stat::RngStream rng(8);
  const auto z = two_clouds(10, rng);
  const auto h = dpm::default_hypers(z, true, true, 10);
  for (Sampler smp : {Sampler::polya, Sampler::blocked}) {
    stat::RngStream r1(21), r2(21);
    const auto one = dpm::run_mcmc(z, h, {0, 1, 1}, smp, r1);
    REQUIRE(one.draws.size() == 1);
    auto st = dpm::initial_state(20, h, smp, r2);
    if (smp == Sampler::polya)
      dpm::polya_step(st, z, h, r2);
    else
      dpm::blocked_step(st, z, h, r2);
    CHECK(one.draws[0].kappa == st.kappa);
    CHECK(one.draws[0].alpha == st.alpha);

    stat::RngStream r3(22);
    const auto post = dpm::run_mcmc(z, h, {5, 7, 3}, smp, r3, true);
    CHECK(post.draws.size() == 7);
    CHECK(post.diagnostics->loglik.size() == 7);
    CHECK(post.diagnostics->log_partition.size() == (smp == Sampler::blocked ? 7u : 0u));
    CHECK((post.draws[0].log_weights.size() > 0) == (smp == Sampler::blocked));
  }
  stat::RngStream r(1);
  CHECK_THROWS_AS(dpm::run_mcmc(z, h, {0, 0, 1}, Sampler::polya, r), InvalidArgument);
  CHECK_THROWS_AS(dpm::run_mcmc(Matrix::Zero(5, 3), h, {0, 1, 1}, Sampler::polya, r),
                  DimensionMismatch);
}

TEST_CASE("run_mcmc is deterministic and resumable") {
  stat::RngStream rng(8);
  const auto z = two_clouds(10, rng);
  const auto h = dpm::default_hypers(z, true, true, 10);
  stat::RngStream a(5), b(5);
  const auto pa = dpm::run_mcmc(z, h, {10, 20, 1}, Sampler::blocked, a);
  const auto pb = dpm::run_mcmc(z, h, {10, 20, 1}, Sampler::blocked, b);
  for (std::size_t i = 0; i < 20; ++i) {
    CHECK(pa.draws[i].kappa == pb.draws[i].kappa);
    CHECK(pa.draws[i].alpha == pb.draws[i].alpha);
  }
  const auto more = dpm::run_mcmc_from(pa.final_state, z, h, {0, 5, 1}, a);
  CHECK(more.draws.size() == 5);
}

TEST_CASE("three-normals blocked posterior finds the three components") {
  stat::RngStream rng(31);
  const auto data = datagen::three_normals(500, rng);
  const Matrix z = data.x;
  const auto h = dpm::default_hypers(z, true, true, 50);
  const auto post = dpm::run_mcmc(z, h, {500, 500, 1}, Sampler::blocked, rng, true);
  // With α ~ Gamma(10, 1) the chain carries many tiny clusters, so the raw K*
  // mode sits in the teens. Count clusters holding at least 5% of the data.
  std::vector<int> all(51, 0), big(51, 0);
  for (int k : post.diagnostics->occupied) ++all[static_cast<std::size_t>(k)];
  for (const auto& d : post.draws) {
    int b = 0;
    for (int c : d.counts()) b += c >= 25;
    ++big[static_cast<std::size_t>(b)];
  }
  const auto mode_all = std::max_element(all.begin(), all.end()) - all.begin();
  const auto mode_big = std::max_element(big.begin(), big.end()) - big.begin();
  CHECK(mode_all >= 3);
  CHECK(mode_big >= 3);
  CHECK(mode_big <= 6);
}

TEST_CASE("getting it right: both samplers reproduce the alpha and lambda priors") {
  for (Sampler smp : {Sampler::polya, Sampler::blocked}) {
    const auto rep = oracles::getting_it_right(smp, 5000, 10, 77);
    INFO("sampler " << dpm::to_string(smp));
    CHECK(rep.alpha_p > 0.01);
    CHECK(rep.lambda_p > 0.01);
  }
}

TEST_CASE("state snapshot round trip resumes identically") {
  stat::RngStream rng(8);
  const auto z = two_clouds(10, rng);
  for (Sampler smp : {Sampler::polya, Sampler::blocked}) {
    const auto h = dpm::default_hypers(z, true, true, 6);
    stat::RngStream a(5);
    const auto post = dpm::run_mcmc(z, h, {10, 3, 1}, smp, a);
    const auto restored = dpm::state_from_json(nlohmann::json::parse(dpm::to_json(post.final_state).dump()));
    const auto h2 = dpm::hyper_from_json(nlohmann::json::parse(dpm::to_json(h).dump()));
    stat::RngStream r1(6), r2(6);
    const auto p1 = dpm::run_mcmc_from(post.final_state, z, h, {0, 4, 1}, r1);
    const auto p2 = dpm::run_mcmc_from(restored, z, h2, {0, 4, 1}, r2);
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(p1.draws[i].kappa == p2.draws[i].kappa);
      CHECK(p1.draws[i].alpha == p2.draws[i].alpha);
      CHECK(p1.draws[i].lambda == p2.draws[i].lambda);
    }
    std::ostringstream csv;
    dpm::write_posterior_csv(p1, z, csv);
    const std::string text = csv.str();
    CHECK(std::count(text.begin(), text.end(), '\n') == 5);
  }
}
