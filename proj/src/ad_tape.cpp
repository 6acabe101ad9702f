#include "vrkn/ad/tape.hpp"

namespace vrkn::ad {

Param& ParamStore::add(const std::string& name, Mat init) {
  if (index_.count(name)) throw ConfigError("ParamStore: duplicate parameter name " + name);
  index_[name] = params_.size();
  params_.emplace_back(name, std::move(init));
  return params_.back();
}

Param* ParamStore::find(const std::string& name) {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &params_[it->second];
}

const Param* ParamStore::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &params_[it->second];
}

std::vector<Param*> ParamStore::all() {
  std::vector<Param*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(&p);
  return out;
}

std::vector<const Param*> ParamStore::all() const {
  std::vector<const Param*> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(&p);
  return out;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

Eigen::Index ParamStore::num_scalars() const {
  Eigen::Index n = 0;
  for (const auto& p : params_) n += p.size();
  return n;
}

Var Tape::constant(Mat value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::param(Param& p) {
  auto it = param_nodes_.find(&p);
  if (it != param_nodes_.end()) return {this, it->second};
  Node n;
  n.ext = &p.value;
  n.needs_grad = true;
  Param* pp = &p;
  n.backward = [pp](Tape& t, int self) { pp->grad += t.grad(self); };
  nodes_.push_back(std::move(n));
  const int id = static_cast<int>(nodes_.size()) - 1;
  param_nodes_[&p] = id;
  return {this, id};
}

Var Tape::record(Mat value, std::initializer_list<Var> parents, Backward fn) {
  Node n;
  n.value = std::move(value);
  for (const Var& p : parents) {
    if (p.tape() != this) throw Error("ad::Tape: operand belongs to a different tape");
    n.needs_grad = n.needs_grad || needs_grad(p.id());
  }
  if (n.needs_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::record(Mat value, const std::vector<Var>& parents, Backward fn) {
  Node n;
  n.value = std::move(value);
  for (const Var& p : parents) {
    if (p.tape() != this) throw Error("ad::Tape: operand belongs to a different tape");
    n.needs_grad = n.needs_grad || needs_grad(p.id());
  }
  if (n.needs_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

void Tape::backward(const Var& loss) {
  if (loss.tape() != this || loss.id() < 0 || loss.id() >= static_cast<int>(nodes_.size()))
    throw Error("ad::Tape::backward: loss was not recorded on this tape (backward before forward)");
  if (backward_done_) throw Error("ad::Tape::backward: tape already consumed");
  const Mat& v = value(loss.id());
  if (v.rows() != 1 || v.cols() != 1) throw DimensionError("ad::Tape::backward: loss must be a scalar");
  backward_done_ = true;
  if (!needs_grad(loss.id())) return;
  nodes_[static_cast<std::size_t>(loss.id())].grad = Mat::Ones(1, 1);
  for (int id = loss.id(); id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.needs_grad || n.grad.size() == 0 || !n.backward) continue;
    n.backward(*this, id);
  }
}

void Tape::clear() {
  nodes_.clear();
  param_nodes_.clear();
  backward_done_ = false;
}

}  // namespace vrkn::ad
