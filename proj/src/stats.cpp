#include "mpp/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include <boost/math/special_functions/beta.hpp>

namespace mpp {

Interval clopper_pearson(std::size_t hits, std::size_t trials, double confidence) {
  if (trials == 0 || hits > trials) throw std::invalid_argument("clopper_pearson: need 0 <= hits <= trials, trials > 0");
  const double alpha = 1.0 - confidence;
  const auto k = static_cast<double>(hits);
  const auto n = static_cast<double>(trials);
  Interval ci;
  ci.lower = hits == 0 ? 0.0 : boost::math::ibeta_inv(k, n - k + 1.0, alpha / 2.0);
  ci.upper = hits == trials ? 1.0 : boost::math::ibeta_inv(k + 1.0, n - k, 1.0 - alpha / 2.0);
  return ci;
}

MeanEstimate estimate_mean(std::span<const double> values) {
  MeanEstimate est;
  est.count = values.size();
  if (values.empty()) return est;
  // Welford, strictly in index order.
  double mean = 0.0, m2 = 0.0;
  std::size_t i = 0;
  for (double v : values) {
    ++i;
    const double delta = v - mean;
    mean += delta / static_cast<double>(i);
    m2 += delta * (v - mean);
  }
  est.mean = mean;
  if (values.size() > 1) {
    est.standard_deviation = std::sqrt(m2 / static_cast<double>(values.size() - 1));
    est.standard_error = est.standard_deviation / std::sqrt(static_cast<double>(values.size()));
  }
  return est;
}

double quantile(std::span<const double> values, double p) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

double least_squares_slope(std::span<const double> xs, std::span<const double> ys) {
  const std::size_t n = std::min(xs.size(), ys.size());
  if (n < 2) return std::numeric_limits<double>::quiet_NaN();
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  if (sxx == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sxy / sxx;
}

}  // namespace mpp
