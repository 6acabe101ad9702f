#include "gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace vrkn::oracle {

GradCheckResult grad_check(ad::ParamStore& store, const std::function<ad::Var(ad::Tape&)>& loss, double eps,
                           double floor) {
  store.zero_grad();
  {
    ad::Tape tape;
    tape.backward(loss(tape));
  }
  auto eval = [&] {
    ad::Tape tape;
    return loss(tape).scalar();
  };
  GradCheckResult res;
  for (ad::Param* p : store.all()) {
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      double& x = p->value.data()[i];
      const double x0 = x;
      x = x0 + eps;
      const double up = eval();
      x = x0 - eps;
      const double down = eval();
      x = x0;
      const double numeric = (up - down) / (2.0 * eps);
      const double analytic = p->grad.data()[i];
      const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
      if (rel > res.max_rel_error) {
        res.max_rel_error = rel;
        res.worst_param = p->name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return res;
}

}  // namespace vrkn::oracle
