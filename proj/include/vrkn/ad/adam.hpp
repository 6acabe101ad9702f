#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vrkn/ad/tape.hpp"

namespace vrkn::ad {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::optional<double> clip_norm{};
};

/// Adam with bias correction and optional global-norm clipping. Moment
/// estimates are kept per parameter name.
class Adam {
 public:
  struct Moments {
    Mat m;
    Mat v;
  };

  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  /// Clips (in place) and applies one update. Returns the gradient norm before
  /// clipping. Throws NumericalError naming the first non-finite gradient.
  double step(const std::vector<Param*>& params);

  const AdamConfig& config() const { return cfg_; }
  AdamConfig& config() { return cfg_; }
  long steps() const { return steps_; }
  void set_steps(long s) { steps_ = s; }
  std::map<std::string, Moments>& moments() { return moments_; }
  const std::map<std::string, Moments>& moments() const { return moments_; }

 private:
  AdamConfig cfg_;
  long steps_ = 0;
  std::map<std::string, Moments> moments_;
};

double global_grad_norm(const std::vector<Param*>& params);

}  // namespace vrkn::ad
