#pragma once

#include <functional>

#include "vrkn/ad/tape.hpp"

namespace vrkn::oracle {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
};

/// Compares Tape gradients of `loss` with central differences of step `eps`
/// over every scalar of every parameter in `store`. Relative error is
/// |analytic - numeric| / max(|analytic|, |numeric|, floor).
GradCheckResult grad_check(ad::ParamStore& store, const std::function<ad::Var(ad::Tape&)>& loss, double eps = 1e-5,
                           double floor = 1e-3);

}  // namespace vrkn::oracle
