#pragma once

#include <deque>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "vrkn/error.hpp"

namespace vrkn::ad {

using Mat = Eigen::MatrixXd;

/// Learnable tensor. grad has the shape of value and is accumulated by
/// Tape::backward until zero_grad().
struct Param {
  std::string name;
  Mat value;
  Mat grad;

  Param(std::string n, Mat v) : name(std::move(n)), value(std::move(v)), grad(Mat::Zero(value.rows(), value.cols())) {}
  void zero_grad() { grad.setZero(); }
  Eigen::Index size() const { return value.size(); }
};

/// Owns parameters with stable addresses, in registration order.
class ParamStore {
 public:
  Param& add(const std::string& name, Mat init);
  Param* find(const std::string& name);
  const Param* find(const std::string& name) const;
  std::vector<Param*> all();
  std::vector<const Param*> all() const;
  void zero_grad();
  std::size_t size() const { return params_.size(); }
  Eigen::Index num_scalars() const;

 private:
  std::deque<Param> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

class Tape;

/// Handle to a node on a tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  const Mat& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }
  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Reverse-mode tape. Nodes are recorded in evaluation order; backward()
/// sweeps them in reverse. Single-threaded.
class Tape {
 public:
  using Backward = std::function<void(Tape&, int)>;

  Var constant(Mat value);
  /// Leaf bound to a Param; one node per Param per tape.
  Var param(Param& p);

  Var record(Mat value, std::initializer_list<Var> parents, Backward fn);
  Var record(Mat value, const std::vector<Var>& parents, Backward fn);

  /// Seeds d(loss)/d(loss) = 1 and accumulates into every Param reached.
  void backward(const Var& loss);

  const Mat& value(int id) const {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    return n.ext ? *n.ext : n.value;
  }
  bool needs_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }
  const Mat& grad(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }
  bool has_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].grad.size() != 0; }

  template <class Expr>
  void accumulate(int id, const Expr& g) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.needs_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  /// Adds g into rows [start, start + g.rows()) of the gradient of `id`.
  template <class Expr>
  void accumulate_rows(int id, Eigen::Index start, const Expr& g) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.needs_grad) return;
    if (n.grad.size() == 0) n.grad = Mat::Zero(value(id).rows(), value(id).cols());
    n.grad.middleRows(start, g.rows()) += g;
  }

  /// Mutable gradient of `id`, zero-initialized on first use.
  Mat& grad_ref(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.size() == 0) n.grad = Mat::Zero(value(id).rows(), value(id).cols());
    return n.grad;
  }

  std::size_t size() const { return nodes_.size(); }
  void clear();

 private:
  struct Node {
    Mat value;
    const Mat* ext = nullptr;
    Mat grad;
    Backward backward;
    bool needs_grad = false;
  };

  std::vector<Node> nodes_;
  std::unordered_map<const Param*, int> param_nodes_;
  bool backward_done_ = false;
};

inline const Mat& Var::value() const {
  if (!tape_) throw Error("ad::Var: use of an unbound variable");
  return tape_->value(id_);
}

}  // namespace vrkn::ad
