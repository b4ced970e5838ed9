#pragma once

#include <cstddef>
#include <span>

namespace vaultor {

struct SampleSummary {
  std::size_t n = 0;
  double mean = 0;
  double stddev = 0;
  /// Half-width of the two-sided confidence interval for the mean.
  double ci_half_width = 0;
  double ci_low = 0;
  double ci_high = 0;
  double level = 0.99;
};

/// Mean with a Student-t confidence interval. Needs n >= 2 for an interval;
/// smaller samples report a zero-width interval.
SampleSummary summarize(std::span<const double> samples, double level = 0.99);

/// Two-sided Student-t critical value with `dof` degrees of freedom.
double student_t_critical(double level, std::size_t dof);

}  // namespace vaultor
