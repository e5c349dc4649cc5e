#pragma once

namespace dpmqte::stat {

inline constexpr double kLogTwoPi = 1.8378770664093454835606594728112;
inline constexpr double kLogPi = 1.1447298858494001741434273513531;

double normal_pdf(double x);
double normal_logpdf(double x);
/// Standard normal CDF, accurate in both tails.
double normal_cdf(double x);
double normal_quantile(double p);

/// log Γ_d(x) = d(d-1)/4·log π + Σ_{j=1..d} log Γ(x + (1-j)/2). Requires x > (d-1)/2.
double log_multivariate_gamma(int d, double x);

/// Quantile of the chi-square distribution with `df` degrees of freedom.
double chi_square_quantile(double p, double df);

}  // namespace dpmqte::stat
