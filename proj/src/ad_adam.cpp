#include "vrkn/ad/adam.hpp"

#include <cmath>

namespace vrkn::ad {

double global_grad_norm(const std::vector<Param*>& params) {
  double sq = 0.0;
  for (const Param* p : params) sq += p->grad.squaredNorm();
  return std::sqrt(sq);
}

double Adam::step(const std::vector<Param*>& params) {
  for (const Param* p : params)
    if (!p->grad.allFinite()) throw NumericalError("adam: non-finite gradient in parameter " + p->name);
  const double norm = global_grad_norm(params);
  if (cfg_.clip_norm && norm > *cfg_.clip_norm) {
    const double s = *cfg_.clip_norm / norm;
    for (Param* p : params) p->grad *= s;
  }
  ++steps_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_));
  for (Param* p : params) {
    auto [it, fresh] = moments_.try_emplace(p->name);
    Moments& mo = it->second;
    if (fresh || mo.m.rows() != p->value.rows() || mo.m.cols() != p->value.cols()) {
      mo.m = Mat::Zero(p->value.rows(), p->value.cols());
      mo.v = Mat::Zero(p->value.rows(), p->value.cols());
    }
    mo.m = cfg_.beta1 * mo.m + (1.0 - cfg_.beta1) * p->grad;
    mo.v = cfg_.beta2 * mo.v + (1.0 - cfg_.beta2) * p->grad.cwiseAbs2();
    p->value.array() -= cfg_.lr * (mo.m.array() / bc1) / ((mo.v.array() / bc2).sqrt() + cfg_.eps);
  }
  return norm;
}

}  // namespace vrkn::ad
