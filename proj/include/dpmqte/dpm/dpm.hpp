#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dpmqte/mcmc.hpp"
#include "dpmqte/stat/linalg.hpp"
#include "dpmqte/stat/rng.hpp"

namespace dpmqte::dpm {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Sampler { polya, blocked };

std::string to_string(Sampler s);
/// Accepts "polya"/"neal" and "blocked"/"truncated".
Sampler parse_sampler(const std::string& name);

/// Hyperparameters of the DP mixture of normals with a normal-inverse-Wishart
/// base measure. With `update_alpha` off, α stays at `alpha`; otherwise α has a
/// Gamma(a0, b0) prior. With `hyperpriors` off, (m, λ, Ψ) stay fixed; otherwise
/// m ~ N(m0, S0), λ ~ Gamma(γ1, γ2), Ψ ~ Wishart(ν0, Ψ0).
struct DpmHyper {
  bool update_alpha = true;
  bool hyperpriors = true;
  double alpha = 10.0;
  double a0 = 10.0, b0 = 1.0;
  Vector m;
  Vector m0;
  Matrix S0;
  double lambda = 0.5;
  double gamma1 = 3.0, gamma2 = 2.0;
  double nu = 0.0;
  Matrix psi;
  double nu0 = 0.0;
  Matrix psi0;
  int nclusters = 50;  // blocked sampler truncation N

  std::size_t dim() const noexcept { return static_cast<std::size_t>(hyperpriors ? m0.size() : m.size()); }
};

/// Data-scaled defaults: c = column means, R = diag((range/4)²).
DpmHyper default_hypers(const Matrix& data, bool update_alpha = true, bool hyperpriors = true,
                        int nclusters = 50);

/// Throws InvalidArgument listing the first violated constraint.
void validate(const DpmHyper& hyper, Sampler sampler);

/// Normal-inverse-Wishart parameters: Ω ~ IW(ν, Ψ), ζ | Ω ~ N(m, Ω/λ).
struct Niw {
  Vector m;
  double lambda;
  double nu;
  Matrix psi;
};

/// Conjugate update of `prior` by the rows of `cluster`.
Niw niw_posterior(const Niw& prior, const Matrix& cluster);

/// Same update from sufficient statistics (count, Σz, Σzzᵀ).
Niw niw_posterior(const Niw& prior, double n, const Vector& sum, const Matrix& outer);

/// (ζ, Ω) drawn from NIW(p). A covariance that fails Cholesky is redrawn once,
/// then NumericalError.
stat::Gaussian sample_niw(const Niw& p, stat::RngStream& rng);

/// Log density of the NIW predictive (multivariate t with ν-d+1 degrees of freedom).
double niw_predictive_logpdf(const Niw& p, const double* z);

struct DpmState {
  Sampler sampler = Sampler::blocked;
  std::vector<int> kappa;                // cluster index per observation, 0-based
  std::vector<stat::Gaussian> clusters;  // Pólya: occupied only; blocked: all N
  Vector weights;                        // blocked only
  Vector log_weights;                    // blocked only
  Vector sticks;                         // blocked only, V_1..V_{N-1}
  Vector log1m_sticks;                   // blocked only, log(1 - V_k)
  double alpha = 10.0;
  Vector m;
  double lambda = 0.5;
  Matrix psi;

  std::vector<int> counts() const;
  std::size_t occupied() const;
};

/// All observations in one cluster, parameters from the prior, α at its prior
/// mean, (m, λ, Ψ) at the hyperprior centres.
DpmState initial_state(std::size_t n, const DpmHyper& hyper, Sampler sampler, stat::RngStream& rng);

/// One Pólya-urn sweep: auxiliary-parameter allocation updates, cluster
/// parameter refresh, then α and base hyperparameters per the flags.
void polya_step(DpmState& state, const RowMatrix& data, const DpmHyper& hyper,
                stat::RngStream& rng);

/// One blocked Gibbs sweep over the truncated stick-breaking model.
void blocked_step(DpmState& state, const RowMatrix& data, const DpmHyper& hyper,
                  stat::RngStream& rng);

/// Shape/rate inputs to the generalized-Dirichlet weight draw:
/// a_k = n_k + 1, b_k = Σ_{j>k} n_j + α.
void stick_parameters(const std::vector<int>& counts, double alpha, std::vector<double>& a,
                      std::vector<double>& b);

/// Rate of the blocked α update, b0 - Σ log(1 - V_k), from the log(1 - V_k) values.
double blocked_alpha_rate(double b0, const Vector& log1m_sticks);

/// Gibbs updates of m, λ, Ψ given the clusters held in the state.
void update_base_hypers(DpmState& state, const DpmHyper& hyper, stat::RngStream& rng);

/// Parameters of the λ full conditional (shape, rate), exposed for testing.
std::pair<double, double> lambda_conditional(const std::vector<stat::Gaussian>& clusters,
                                             const Vector& m, const DpmHyper& hyper);

/// Mixture weight π of the Escobar–West α update for a given η.
double escobar_west_weight(double a0, double b0, std::size_t k, std::size_t n, double eta);
double update_alpha_escobar_west(double alpha, std::size_t k, std::size_t n, double a0, double b0,
                                 stat::RngStream& rng);

struct DpmDraw {
  std::vector<Vector> zeta;
  std::vector<Matrix> omega;
  Vector log_weights;  // blocked only
  std::vector<int> kappa;
  double alpha = 0.0;
  Vector m;
  double lambda = 0.0;
  Matrix psi;

  std::vector<int> counts() const;
};

struct DiagnosticsSeries {
  std::vector<double> loglik;
  std::vector<double> log_partition;  // blocked only
  std::vector<double> alpha;
  std::vector<double> lambda;
  std::vector<Vector> m;
  std::vector<Matrix> psi;
  std::vector<int> occupied;
};

struct DpmPosterior {
  Sampler sampler = Sampler::blocked;
  DpmHyper hyper;
  std::size_t n = 0;
  std::vector<DpmDraw> draws;
  std::optional<DiagnosticsSeries> diagnostics;
  DpmState final_state;
};

DpmDraw snapshot(const DpmState& state);

/// Burn-in, then keep every keepevery-th step. Diagnostics are recorded at the
/// end of each kept step when `diag` is set.
DpmPosterior run_mcmc(const Matrix& data, const DpmHyper& hyper, const McmcSettings& mcmc,
                      Sampler sampler, stat::RngStream& rng, bool diag = false);

/// Continue a chain from a given state (restart from a snapshot).
DpmPosterior run_mcmc_from(DpmState state, const Matrix& data, const DpmHyper& hyper,
                           const McmcSettings& mcmc, stat::RngStream& rng, bool diag = false);

}  // namespace dpmqte::dpm
