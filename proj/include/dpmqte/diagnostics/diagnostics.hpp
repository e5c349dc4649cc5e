#pragma once

#include <span>
#include <vector>

#include "dpmqte/dpm/dpm.hpp"

namespace dpmqte::diagnostics {

/// Σ_i log N(z_i | ζ_{κ_i}, Ω_{κ_i}).
double log_likelihood(const dpm::DpmState& state, const dpm::RowMatrix& data);
double log_likelihood(const dpm::DpmDraw& draw, const dpm::RowMatrix& data);

/// Log marginal likelihood of a partition with (ζ, Ω) integrated against the
/// NIW base measure `base`.
double log_partition_likelihood(const std::vector<int>& kappa, const dpm::RowMatrix& data,
                                const dpm::Niw& base);

/// Log prior probability of an allocation under the truncated stick-breaking
/// model with N clusters and concentration alpha_star, weights integrated out.
double log_allocation_prior(const std::vector<int>& kappa, int nclusters, double alpha_star);

/// Unnormalized log marginal partition posterior: the sum of the two above.
double log_marginal_partition_posterior(const std::vector<int>& kappa,
                                        const dpm::RowMatrix& data, const dpm::Niw& base,
                                        int nclusters, double alpha_star);

/// Biased sample autocorrelation at lags 0..max_lag.
std::vector<double> autocorrelation(std::span<const double> series, std::size_t max_lag);

}  // namespace dpmqte::diagnostics
