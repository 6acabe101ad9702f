#include "vrkn/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vrkn/error.hpp"

namespace vrkn {

double mean_of(const std::vector<double>& xs) {
  if (xs.empty()) throw DimensionError("mean_of: empty sample");
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

Interval bootstrap_mean_ci(const std::vector<double>& xs, int resamples, Rng& rng, double level) {
  if (resamples <= 0) throw ConfigError("bootstrap: resamples must be positive");
  Interval out;
  out.mean = mean_of(xs);
  const int n = static_cast<int>(xs.size());
  std::vector<double> means(static_cast<std::size_t>(resamples));
  for (double& m : means) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += xs[static_cast<std::size_t>(rng.uniform_int(0, n - 1))];
    m = s / n;
  }
  std::sort(means.begin(), means.end());
  const double tail = 0.5 * (1.0 - level);
  auto at = [&](double q) {
    const auto idx = static_cast<std::size_t>(std::clamp(std::floor(q * (resamples - 1) + 0.5), 0.0, resamples - 1.0));
    return means[idx];
  };
  out.lo = at(tail);
  out.hi = at(1.0 - tail);
  return out;
}

}  // namespace vrkn
