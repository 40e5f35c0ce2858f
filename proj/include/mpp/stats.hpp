#pragma once

#include <cstddef>
#include <span>

namespace mpp {

struct Interval {
  double lower = 0.0;
  double upper = 1.0;
};

/// Exact two-sided Clopper-Pearson interval for `hits` successes in `trials`.
Interval clopper_pearson(std::size_t hits, std::size_t trials, double confidence = 0.99);

/// Upper end of the 99% Clopper-Pearson interval.
inline double cp99_upper(std::size_t hits, std::size_t trials) {
  return clopper_pearson(hits, trials, 0.99).upper;
}

struct MeanEstimate {
  double mean = 0.0;
  double standard_error = 0.0;
  double standard_deviation = 0.0;
  std::size_t count = 0;
};

/// Sample mean and standard error, accumulated in index order.
MeanEstimate estimate_mean(std::span<const double> values);

/// Empirical quantile (type 7, linear interpolation) of an unsorted sample.
double quantile(std::span<const double> values, double p);

/// Least-squares slope of ys against xs.
double least_squares_slope(std::span<const double> xs, std::span<const double> ys);

}  // namespace mpp
