#include "dpmqte/datagen/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "dpmqte/error.hpp"
#include "dpmqte/stat/special.hpp"

namespace dpmqte::datagen {

using stat::RngStream;

namespace {

double expit(double v) { return 1.0 / (1.0 + std::exp(-v)); }

double normal_density(double y, double mean, double sd) {
  return stat::normal_pdf((y - mean) / sd) / sd;
}

void require_n(std::size_t n) {
  if (n < 1) throw InvalidArgument("generator: n must be >= 1");
}

}  // namespace

double mix_data_mean(const double* x) {
  return 10.0 * std::sin(std::numbers::pi * x[0] * x[5]) + 20.0 * (x[7] - 0.5) * (x[7] - 0.5) +
         10.0 * x[1] + 5.0 * x[6];
}

SyntheticDataset mix_data(std::size_t n, std::size_t p, double sigma, RngStream& rng) {
  require_n(n);
  if (p < 10) throw InvalidArgument("mix_data: p must be >= 10");
  SyntheticDataset d;
  d.x.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  d.y.resize(static_cast<Eigen::Index>(n));
  std::vector<double> row(p);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      row[j] = j < 5 ? (rng.uniform() < 0.5 ? 1.0 : 0.0) : rng.uniform();
      d.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[j];
    }
    d.y[static_cast<Eigen::Index>(i)] = mix_data_mean(row.data()) + sigma * rng.normal();
  }
  return d;
}

namespace {
constexpr double kThreeMeans[3][2] = {{2.0, -1.0}, {1.0, 0.0}, {-1.0, -1.0}};
}

SyntheticDataset three_normals(std::size_t n, RngStream& rng) {
  require_n(n);
  SyntheticDataset d;
  d.x.resize(static_cast<Eigen::Index>(n), 2);
  d.component.resize(n);
  const double sd = std::sqrt(0.5);
  for (std::size_t i = 0; i < n; ++i) {
    const int c = std::min(2, static_cast<int>(rng.uniform() * 3.0));
    d.component[i] = c;
    for (int j = 0; j < 2; ++j)
      d.x(static_cast<Eigen::Index>(i), j) = kThreeMeans[c][j] + sd * rng.normal();
  }
  return d;
}

double three_normals_density(double y1, double y2) {
  double s = 0.0;
  for (const auto& m : kThreeMeans) {
    const double q = ((y1 - m[0]) * (y1 - m[0]) + (y2 - m[1]) * (y2 - m[1])) / 0.5;
    s += std::exp(-0.5 * q) / (2.0 * std::numbers::pi * 0.5);
  }
  return s / 3.0;
}

SyntheticDataset dunson_example(std::size_t n, RngStream& rng) {
  require_n(n);
  SyntheticDataset d;
  d.x.resize(static_cast<Eigen::Index>(n), 1);
  d.y.resize(static_cast<Eigen::Index>(n));
  d.component.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = rng.uniform();
    const bool linear = rng.uniform() < std::exp(-2.0 * x);
    d.component[i] = linear ? 0 : 1;
    d.x(static_cast<Eigen::Index>(i), 0) = x;
    d.y[static_cast<Eigen::Index>(i)] =
        linear ? x + 0.1 * rng.normal() : std::pow(x, 4) + 0.2 * rng.normal();
  }
  return d;
}

double dunson_density(double y, double x) {
  const double w = std::exp(-2.0 * x);
  return w * normal_density(y, x, 0.1) + (1.0 - w) * normal_density(y, std::pow(x, 4), 0.2);
}

double dunson_cdf(double y, double x) {
  const double w = std::exp(-2.0 * x);
  return w * stat::normal_cdf((y - x) / 0.1) +
         (1.0 - w) * stat::normal_cdf((y - std::pow(x, 4)) / 0.2);
}

double dunson_mean(double x) {
  const double w = std::exp(-2.0 * x);
  return w * x + (1.0 - w) * std::pow(x, 4);
}

namespace {

struct ArmMixture {
  double weight, mean1, sd1, mean2, sd2;
};

ArmMixture arm_mixture(int arm, const double* x) {
  if (arm == 1) {
    return {expit(0.5 * x[2] * x[3]), 3.0 + 0.5 * x[1] * x[4] + 0.5 * x[0] * x[0], 0.5,
            -0.5 + 0.5 * x[1] * x[1] - 0.5 * x[0] * x[2], 0.8};
  }
  double lin = 0.0, sq = 0.0;
  for (int j = 0; j < 5; ++j) {
    lin += 0.2 * x[j];
    sq += 0.2 * x[j] * x[j];
  }
  return {std::exp(-std::abs(x[4])), std::pow(lin, 4), 1.0, 2.0 + sq, 1.0};
}

}  // namespace

double qte_treatment_probability(const double* x) {
  double s = 0.0;
  for (int j = 0; j < 10; ++j) s += x[j];
  return expit(0.3 * s);
}

double qte_conditional_density(int arm, double y, const double* x) {
  const ArmMixture m = arm_mixture(arm, x);
  return m.weight * normal_density(y, m.mean1, m.sd1) +
         (1.0 - m.weight) * normal_density(y, m.mean2, m.sd2);
}

double qte_draw_outcome(int arm, const double* x, RngStream& rng) {
  const ArmMixture m = arm_mixture(arm, x);
  return rng.uniform() < m.weight ? m.mean1 + m.sd1 * rng.normal() : m.mean2 + m.sd2 * rng.normal();
}

SyntheticDataset qte_example(std::size_t n, RngStream& rng) {
  require_n(n);
  SyntheticDataset d;
  const auto ni = static_cast<Eigen::Index>(n);
  d.x.resize(ni, 10);
  d.y.resize(ni);
  d.y0.resize(ni);
  d.y1.resize(ni);
  d.treatment.resize(n);
  double row[10];
  for (Eigen::Index i = 0; i < ni; ++i) {
    for (int j = 0; j < 10; ++j) row[j] = d.x(i, j) = -2.0 + 4.0 * rng.uniform();
    const int t = rng.uniform() < qte_treatment_probability(row) ? 1 : 0;
    d.treatment[static_cast<std::size_t>(i)] = t;
    d.y1[i] = qte_draw_outcome(1, row, rng);
    d.y0[i] = qte_draw_outcome(0, row, rng);
    d.y[i] = t ? d.y1[i] : d.y0[i];
  }
  return d;
}

SyntheticDataset null_effect_example(std::size_t n, RngStream& rng) {
  require_n(n);
  SyntheticDataset d;
  const auto ni = static_cast<Eigen::Index>(n);
  d.x.resize(ni, 10);
  d.y.resize(ni);
  d.y0.resize(ni);
  d.y1.resize(ni);
  d.treatment.resize(n);
  double row[10];
  for (Eigen::Index i = 0; i < ni; ++i) {
    for (int j = 0; j < 10; ++j) row[j] = d.x(i, j) = -2.0 + 4.0 * rng.uniform();
    d.treatment[static_cast<std::size_t>(i)] = rng.uniform() < 0.5 ? 1 : 0;
    d.y[i] = d.y0[i] = d.y1[i] = qte_draw_outcome(0, row, rng);
  }
  return d;
}

double qte_marginal_density(int arm, double y, std::size_t draws, std::uint64_t seed) {
  if (draws == 0) throw InvalidArgument("qte_marginal_density: draws must be >= 1");
  RngStream rng(seed);
  double row[10];
  double s = 0.0;
  for (std::size_t i = 0; i < draws; ++i) {
    for (double& v : row) v = -2.0 + 4.0 * rng.uniform();
    s += qte_conditional_density(arm, y, row);
  }
  return s / static_cast<double>(draws);
}

std::vector<double> qte_marginal_quantiles(int arm, const std::vector<double>& probs,
                                           std::size_t draws, std::uint64_t seed) {
  if (draws == 0) throw InvalidArgument("qte_marginal_quantiles: draws must be >= 1");
  RngStream rng(seed);
  std::vector<double> ys(draws);
  double row[10];
  for (auto& y : ys) {
    for (double& v : row) v = -2.0 + 4.0 * rng.uniform();
    y = qte_draw_outcome(arm, row, rng);
  }
  std::vector<double> out;
  for (double p : probs) {
    if (!(p > 0.0 && p < 1.0)) throw InvalidArgument("quantile probability outside (0,1)");
    const auto k = static_cast<std::size_t>(std::ceil(p * static_cast<double>(draws))) - 1;
    std::nth_element(ys.begin(), ys.begin() + static_cast<std::ptrdiff_t>(k), ys.end());
    out.push_back(ys[k]);
  }
  return out;
}

}  // namespace dpmqte::datagen
