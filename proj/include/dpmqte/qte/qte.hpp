#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dpmqte/bart/bart.hpp"
#include "dpmqte/density/density.hpp"
#include "dpmqte/dpm/dpm.hpp"

namespace dpmqte::qte {

/// How the covariate distribution of the target population is represented.
enum class Rdist { known, empirical, bootstrap };
Rdist parse_rdist(const std::string& name);
std::string to_string(Rdist r);

struct QteConfig {
  std::vector<double> probs{0.1, 0.25, 0.5, 0.75, 0.9};
  Rdist rdist = Rdist::bootstrap;
  std::optional<Matrix> xpred;  // required for Rdist::known

  bart::BartHyper bart_hyper = bart::BartHyper::defaults(bart::SplitPrior::polynomial);
  McmcSettings bart_mcmc{500, 5, 100};  // ndpost is K

  dpm::Sampler sampler = dpm::Sampler::blocked;
  bool update_alpha = true;
  bool hyperpriors = true;
  int nclusters = 50;
  McmcSettings dpm_mcmc{500, 200, 2};  // ndpost is L
  double epsilon = 0.01;               // Pólya-urn truncation

  std::size_t ngrid = 100;
  std::optional<std::vector<double>> grid;  // overrides the data-driven grid

  bool pdf = true;
  density::BandKind band = density::BandKind::hpd;
  std::vector<double> alphas{0.05};  // interval levels are 1 - alpha

  int threads = 1;
};

/// Every violated precondition of the configuration, empty when valid.
std::vector<std::string> check(const QteConfig& config, std::size_t num_vars);
void validate(const QteConfig& config, std::size_t num_vars);

struct ArmSummary {
  density::GridEvaluation cdf;                // (K·L) × S draws
  std::optional<density::GridEvaluation> pdf;
  Matrix quantile_draws;                      // (K·L) × probs
  Vector quantile_avg;
};

struct QteResult {
  std::vector<double> grid;
  std::vector<double> probs;
  std::vector<double> alphas;
  density::BandKind band = density::BandKind::hpd;
  Matrix ps_latent;  // K × ñ, latent-scale propensity draws at the target points
  ArmSummary control;
  ArmSummary treated;
  Matrix qte_draws;  // (K·L) × probs, treated minus control per paired draw
  Vector qte_avg;
  std::vector<Matrix> qte_ci;  // per alpha: probs × 2
  double seconds_bart = 0.0;
  double seconds_dpm = 0.0;
  std::vector<double> seconds_jobs;  // per DPM fit and evaluation, index 2k + arm
};

/// Runs the full pipeline. Job (k, t) draws from substream (seed, 1, k, t), the
/// propensity fit from (seed, 0) and bootstrap weights from (seed, 2, k), so the
/// output does not depend on config.threads.
QteResult estimate_qte(std::span<const double> y, const Matrix& x,
                       std::span<const bart::VarType> types, std::span<const int> treatment,
                       const QteConfig& config, std::uint64_t seed);

/// Dirichlet(1, ..., 1) weights.
Vector bayesian_bootstrap_weights(std::size_t n, stat::RngStream& rng);

/// Σ_i u_i F_i(g_s), clamped to [0, 1].
Vector marginal_cdf(const Matrix& conditional, const Vector& weights);

/// Smallest grid point with F ≥ p. Throws when p exceeds F at the last grid point.
double quantile_from_cdf(std::span<const double> cdf, std::span<const double> grid, double p);

/// Re-reads quantiles and effects from the stored CDF draws. No resampling.
QteResult predict_quantiles(const QteResult& result, const std::vector<double>& probs);

}  // namespace dpmqte::qte
