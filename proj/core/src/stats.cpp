#include "vaultor/stats.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <cmath>

namespace vaultor {

double student_t_critical(double level, std::size_t dof) {
  boost::math::students_t dist(static_cast<double>(dof));
  return boost::math::quantile(boost::math::complement(dist, (1.0 - level) / 2.0));
}

SampleSummary summarize(std::span<const double> samples, double level) {
  SampleSummary s;
  s.n = samples.size();
  s.level = level;
  if (s.n == 0) return s;
  double sum = 0;
  for (double x : samples) sum += x;
  s.mean = sum / static_cast<double>(s.n);
  if (s.n >= 2) {
    double ss = 0;
    for (double x : samples) ss += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(s.n - 1));
    s.ci_half_width = student_t_critical(level, s.n - 1) * s.stddev / std::sqrt(static_cast<double>(s.n));
  }
  s.ci_low = s.mean - s.ci_half_width;
  s.ci_high = s.mean + s.ci_half_width;
  return s;
}

}  // namespace vaultor
