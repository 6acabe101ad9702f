#pragma once

#include <string>
#include <vector>

#include "vrkn/ad/ops.hpp"
#include "vrkn/rng.hpp"

namespace vrkn::ad {

/// Glorot-uniform matrix in +-sqrt(6 / (fan_in + fan_out)).
Mat glorot_uniform(Eigen::Index fan_out, Eigen::Index fan_in, Rng& rng);

class Linear {
 public:
  Linear() = default;
  Linear(ParamStore& store, const std::string& name, Eigen::Index in, Eigen::Index out, Rng& rng);

  Var operator()(Tape& tape, Var x) const;
  Eigen::Index in() const { return weight_->value.cols(); }
  Eigen::Index out() const { return weight_->value.rows(); }
  Param& weight() const { return *weight_; }
  Param& bias() const { return *bias_; }

 private:
  Param* weight_ = nullptr;
  Param* bias_ = nullptr;
};

enum class Activation { Identity, Relu, Elu, Tanh, Sigmoid, Softplus };

Var activate(Var x, Activation act);

/// Stack of Linear layers; hidden layers use `hidden_act`, the last layer `out_act`.
class Mlp {
 public:
  Mlp() = default;
  Mlp(ParamStore& store, const std::string& name, const std::vector<Eigen::Index>& widths, Activation hidden_act,
      Activation out_act, Rng& rng);

  Var operator()(Tape& tape, Var x) const;
  const std::vector<Linear>& layers() const { return layers_; }

 private:
  std::vector<Linear> layers_;
  Activation hidden_act_ = Activation::Relu;
  Activation out_act_ = Activation::Identity;
};

/// f(x) = s * sigmoid(x + b) + m with range (lo, hi) and f(0) = mid.
struct BoundedSigmoid {
  double lo;
  double hi;
  double mid;

  BoundedSigmoid(double lo_, double hi_, double mid_);
  double scale() const { return hi - lo; }
  double shift() const { return lo; }
  double bias() const;
  double operator()(double x) const;
  Var operator()(Var x) const;
};

/// Gated recurrent unit (reset gate applied to the hidden projection).
class GruCell {
 public:
  GruCell() = default;
  GruCell(ParamStore& store, const std::string& name, Eigen::Index input, Eigen::Index hidden, Rng& rng);

  Var operator()(Tape& tape, Var x, Var h) const;
  Eigen::Index hidden() const { return hidden_; }

 private:
  Param* w_input_ = nullptr;   // 3H x in  (reset, update, candidate)
  Param* w_hidden_ = nullptr;  // 3H x H
  Param* b_input_ = nullptr;
  Param* b_hidden_ = nullptr;
  Eigen::Index hidden_ = 0;
};

/// Inverted dropout: zero each unit with probability `rate`, scale survivors by
/// 1 / (1 - rate). Identity when inactive or rate == 0.
Var dropout(Var x, double rate, Rng& rng, bool active);

/// z = mu + sigma * eps.
Var reparam_sample(Var mu, Var sigma, const Mat& eps);

}  // namespace vrkn::ad
