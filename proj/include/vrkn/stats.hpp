#pragma once

#include <vector>

#include "vrkn/rng.hpp"

namespace vrkn {

struct Interval {
  double mean = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

/// Percentile bootstrap interval of the sample mean.
Interval bootstrap_mean_ci(const std::vector<double>& xs, int resamples, Rng& rng, double level = 0.95);

double mean_of(const std::vector<double>& xs);

}  // namespace vrkn
