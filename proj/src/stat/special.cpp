#include "dpmqte/stat/special.hpp"

#include <boost/math/special_functions/erf.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <limits>
#include <string>

#include "dpmqte/error.hpp"

namespace dpmqte::stat {

double normal_pdf(double x) { return std::exp(normal_logpdf(x)); }

double normal_logpdf(double x) { return -0.5 * (kLogTwoPi + x * x); }

double normal_cdf(double x) { return 0.5 * std::erfc(-x * M_SQRT1_2); }

double normal_quantile(double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("normal_quantile: p outside [0, 1]");
  if (p == 0.0) return -std::numeric_limits<double>::infinity();
  if (p == 1.0) return std::numeric_limits<double>::infinity();
  return -M_SQRT2 * boost::math::erfc_inv(2.0 * p);
}

double log_multivariate_gamma(int d, double x) {
  if (d < 1) throw InvalidArgument("log_multivariate_gamma: dimension must be >= 1");
  if (!(x > 0.5 * (d - 1)))
    throw InvalidArgument("log_multivariate_gamma: argument " + std::to_string(x) +
                          " must exceed (d-1)/2");
  double out = 0.25 * d * (d - 1) * kLogPi;
  for (int j = 1; j <= d; ++j) out += std::lgamma(x + 0.5 * (1 - j));
  return out;
}

double chi_square_quantile(double p, double df) {
  if (!(df > 0.0)) throw InvalidArgument("chi_square_quantile: df must be positive");
  if (!(p > 0.0 && p < 1.0)) throw InvalidArgument("chi_square_quantile: p outside (0, 1)");
  return 2.0 * boost::math::gamma_p_inv(0.5 * df, p);
}

}  // namespace dpmqte::stat
