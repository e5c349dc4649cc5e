#pragma once

#include <functional>
#include <span>

namespace dpmqte::stat {

/// P(K > x) for the Kolmogorov distribution.
double kolmogorov_survival(double x);

struct KsResult {
  double statistic;
  double p_value;
};

/// One-sample Kolmogorov-Smirnov test against a continuous CDF. The p-value
/// uses the asymptotic distribution with the Stephens small-sample correction.
KsResult ks_test(std::span<const double> sample, const std::function<double(double)>& cdf);

}  // namespace dpmqte::stat
