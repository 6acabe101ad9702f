#include "vrkn/ad/layers.hpp"

#include <cmath>

namespace vrkn::ad {

Mat glorot_uniform(Eigen::Index fan_out, Eigen::Index fan_in, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Mat w(fan_out, fan_in);
  for (Eigen::Index j = 0; j < fan_in; ++j)
    for (Eigen::Index i = 0; i < fan_out; ++i) w(i, j) = limit * (2.0 * rng.uniform() - 1.0);
  return w;
}

Linear::Linear(ParamStore& store, const std::string& name, Eigen::Index in, Eigen::Index out, Rng& rng)
    : weight_(&store.add(name + ".weight", glorot_uniform(out, in, rng))),
      bias_(&store.add(name + ".bias", Mat::Zero(out, 1))) {}

Var Linear::operator()(Tape& tape, Var x) const {
  return add_col(matmul(tape.param(*weight_), x), tape.param(*bias_));
}

Var activate(Var x, Activation act) {
  switch (act) {
    case Activation::Identity: return x;
    case Activation::Relu: return relu(x);
    case Activation::Elu: return elu(x);
    case Activation::Tanh: return tanh(x);
    case Activation::Sigmoid: return sigmoid(x);
    case Activation::Softplus: return softplus(x);
  }
  return x;
}

Mlp::Mlp(ParamStore& store, const std::string& name, const std::vector<Eigen::Index>& widths,
         Activation hidden_act, Activation out_act, Rng& rng)
    : hidden_act_(hidden_act), out_act_(out_act) {
  if (widths.size() < 2) throw ConfigError("Mlp: need at least input and output width");
  for (std::size_t i = 0; i + 1 < widths.size(); ++i)
    layers_.emplace_back(store, name + "." + std::to_string(i), widths[i], widths[i + 1], rng);
}

Var Mlp::operator()(Tape& tape, Var x) const {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    x = layers_[i](tape, x);
    x = activate(x, i + 1 < layers_.size() ? hidden_act_ : out_act_);
  }
  return x;
}

BoundedSigmoid::BoundedSigmoid(double lo_, double hi_, double mid_) : lo(lo_), hi(hi_), mid(mid_) {
  if (!(lo < mid && mid < hi)) throw ConfigError("BoundedSigmoid: require lo < mid < hi");
}

double BoundedSigmoid::bias() const {
  const double p = (mid - lo) / (hi - lo);
  return std::log(p / (1.0 - p));
}

double BoundedSigmoid::operator()(double x) const {
  return scale() / (1.0 + std::exp(-(x + bias()))) + shift();
}

Var BoundedSigmoid::operator()(Var x) const {
  return add_scalar(ad::scale(ad::sigmoid(add_scalar(x, bias())), scale()), shift());
}

GruCell::GruCell(ParamStore& store, const std::string& name, Eigen::Index input, Eigen::Index hidden, Rng& rng)
    : hidden_(hidden) {
  Mat wi(3 * hidden, input), wh(3 * hidden, hidden);
  for (int g = 0; g < 3; ++g) {
    wi.middleRows(g * hidden, hidden) = glorot_uniform(hidden, input, rng);
    wh.middleRows(g * hidden, hidden) = glorot_uniform(hidden, hidden, rng);
  }
  w_input_ = &store.add(name + ".w_input", std::move(wi));
  w_hidden_ = &store.add(name + ".w_hidden", std::move(wh));
  b_input_ = &store.add(name + ".b_input", Mat::Zero(3 * hidden, 1));
  b_hidden_ = &store.add(name + ".b_hidden", Mat::Zero(3 * hidden, 1));
}

Var GruCell::operator()(Tape& tape, Var x, Var h) const {
  if (h.rows() != hidden_) throw DimensionError("GruCell: hidden state size mismatch");
  const Eigen::Index H = hidden_;
  Var gi = add_col(matmul(tape.param(*w_input_), x), tape.param(*b_input_));
  Var gh = add_col(matmul(tape.param(*w_hidden_), h), tape.param(*b_hidden_));
  Var r = sigmoid(add(rows(gi, 0, H), rows(gh, 0, H)));
  Var z = sigmoid(add(rows(gi, H, H), rows(gh, H, H)));
  Var n = tanh(add(rows(gi, 2 * H, H), mul(r, rows(gh, 2 * H, H))));
  // h' = (1 - z) n + z h = n + z (h - n)
  return add(n, mul(z, sub(h, n)));
}

Var dropout(Var x, double rate, Rng& rng, bool active) {
  if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout: rate must lie in [0, 1)");
  if (!active || rate == 0.0) return x;
  Mat mask(x.rows(), x.cols());
  const double keep = 1.0 / (1.0 - rate);
  for (Eigen::Index j = 0; j < mask.cols(); ++j)
    for (Eigen::Index i = 0; i < mask.rows(); ++i) mask(i, j) = rng.uniform() < rate ? 0.0 : keep;
  return mul_const(x, mask);
}

Var reparam_sample(Var mu, Var sigma, const Mat& eps) { return add(mu, mul_const(sigma, eps)); }

}  // namespace vrkn::ad
