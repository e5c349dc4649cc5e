#include <doctest.h>

#include <cmath>
#include <numbers>

#include "dpmqte/datagen/datagen.hpp"

using namespace dpmqte;
using namespace dpmqte::datagen;
using stat::RngStream;

TEST_CASE("mix_data mean function") {
  double x[10] = {0, 1, 0, 0, 0, 0.3, 0.2, 0.5, 0, 0};
  CHECK(mix_data_mean(x) == doctest::Approx(10 * 1 + 5 * 0.2));
  double x2[10] = {1, 1, 0, 0, 0, 0.5, 1, 0.5, 0, 0};
  CHECK(mix_data_mean(x2) == doctest::Approx(25.0));
  RngStream rng(1);
  auto d = mix_data(20000, 10, 1.0, rng);
  // E f0 = 10·E sin(π B U) + 20·Var(U) + 5 + 2.5 with B ~ Bern(.5), U ~ U(0,1).
  const double expect = 10 * 0.5 * (2 / std::numbers::pi) + 20.0 / 12.0 + 5.0 + 2.5;
  CHECK(d.y.mean() == doctest::Approx(expect).epsilon(0.02));
  CHECK(((d.x.leftCols(5).array() == 0.0) || (d.x.leftCols(5).array() == 1.0)).all());
}

TEST_CASE("three normals truth") {
  const double peak = 1.0 / (2 * std::numbers::pi * 0.5);
  const double cross1 = peak * std::exp(-0.5 * (1.0 + 1.0) / 0.5);
  const double cross2 = peak * std::exp(-0.5 * 9.0 / 0.5);
  CHECK(three_normals_density(2, -1) == doctest::Approx((peak + cross1 + cross2) / 3.0));
  double integral = 0.0;
  const double h = 0.05;
  for (double a = -7; a <= 7; a += h)
    for (double b = -7; b <= 7; b += h) integral += three_normals_density(a, b) * h * h;
  CHECK(integral == doctest::Approx(1.0).epsilon(1e-3));
  RngStream rng(2);
  auto d = three_normals(30000, rng);
  int counts[3] = {0, 0, 0};
  for (int c : d.component) ++counts[c];
  for (int c : counts) CHECK(c / 30000.0 == doctest::Approx(1.0 / 3).epsilon(0.03));
}

TEST_CASE("dunson truth handles") {
  CHECK(dunson_mean(0.0) == 0.0);
  CHECK(dunson_mean(1.0) == doctest::Approx(1.0));
  for (double x : {0.0, 0.3, 0.9}) CHECK(dunson_cdf(3.0, x) == doctest::Approx(1.0));
  double integral = 0.0;
  for (double y = -2; y < 3; y += 0.001) integral += dunson_density(y, 0.4) * 0.001;
  CHECK(integral == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("qte example") {
  double x0[10] = {};
  // Arm 1 at x = 0: equal weights on Normal(3, 0.5²) and Normal(-0.5, 0.8²).
  const double root2pi = std::sqrt(2 * std::numbers::pi);
  const double f1 = 0.5 * std::exp(-0.5 * 36.0) / (0.5 * root2pi) +
                    0.5 * std::exp(-0.5 * std::pow(0.5 / 0.8, 2)) / (0.8 * root2pi);
  CHECK(qte_conditional_density(1, 0.0, x0) == doctest::Approx(f1));
  CHECK(qte_conditional_density(0, 0.7, x0) ==
        doctest::Approx(std::exp(-0.5 * 0.49) / std::sqrt(2 * std::numbers::pi)));
  CHECK(qte_treatment_probability(x0) == 0.5);
  RngStream rng(3);
  auto d = qte_example(500, rng);
  for (int i = 0; i < 500; ++i)
    CHECK(d.y[i] == (d.treatment[i] ? d.y1[i] : d.y0[i]));
}

TEST_CASE("qte truths from the large-sample oracle") {
  const std::vector<double> probs{0.1, 0.25, 0.5, 0.75, 0.9};
  const auto q1 = qte_marginal_quantiles(1, probs, 2000000, 101);
  const auto q0 = qte_marginal_quantiles(0, probs, 2000000, 202);
  const double truth[5] = {-0.22, -0.18, -0.13, 0.04, 0.05};
  for (int i = 0; i < 5; ++i) CHECK(std::abs(q1[i] - q0[i] - truth[i]) <= 0.02);
}
