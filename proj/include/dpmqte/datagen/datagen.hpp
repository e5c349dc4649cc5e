#pragma once

#include <cstdint>
#include <vector>

#include "dpmqte/stat/linalg.hpp"
#include "dpmqte/stat/rng.hpp"

namespace dpmqte::datagen {

struct SyntheticDataset {
  Matrix x;
  Vector y;
  std::vector<int> treatment;  // empty unless the generator assigns treatment
  Vector y0, y1;               // potential outcomes (treatment generators only)
  std::vector<int> component;  // latent mixture label, when the generator has one
};

/// Friedman-type mixed-covariate regression: x1..x5 ~ Bernoulli(0.5), the rest
/// Uniform(0,1), y ~ Normal(f0(x), sigma²).
SyntheticDataset mix_data(std::size_t n, std::size_t p, double sigma, stat::RngStream& rng);
double mix_data_mean(const double* x);

/// Equal-weight mixture of three bivariate normals with covariance 0.5·I.
SyntheticDataset three_normals(std::size_t n, stat::RngStream& rng);
double three_normals_density(double y1, double y2);

/// x ~ Uniform(0,1); y | x mixes Normal(x, 0.1²) with weight exp(-2x) and
/// Normal(x⁴, 0.2²). Column 0 of x holds the covariate.
SyntheticDataset dunson_example(std::size_t n, stat::RngStream& rng);
double dunson_density(double y, double x);
double dunson_cdf(double y, double x);
double dunson_mean(double x);

/// Ten Uniform(-2,2) confounders, expit treatment assignment and arm-specific
/// two-component normal mixtures for the outcome.
SyntheticDataset qte_example(std::size_t n, stat::RngStream& rng);

/// Same confounders, fair-coin treatment and Y(1) = Y(0) drawn from the control
/// arm's outcome model, so every quantile effect is zero.
SyntheticDataset null_effect_example(std::size_t n, stat::RngStream& rng);

/// Conditional outcome density of arm `arm` at confounders x (10 values).
double qte_conditional_density(int arm, double y, const double* x);
double qte_treatment_probability(const double* x);
/// One draw of Y(arm) given x.
double qte_draw_outcome(int arm, const double* x, stat::RngStream& rng);

/// Monte-Carlo marginal density of Y(arm) at y: average of the conditional
/// density over `draws` confounder vectors from the seeded stream.
double qte_marginal_density(int arm, double y, std::size_t draws, std::uint64_t seed);

/// Quantiles of Y(arm) from `draws` simulated subjects.
std::vector<double> qte_marginal_quantiles(int arm, const std::vector<double>& probs,
                                           std::size_t draws, std::uint64_t seed);

}  // namespace dpmqte::datagen
