#include "vrkn/ad/ops.hpp"

#include <cmath>
#include <string>

namespace vrkn::ad {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DimensionError(std::string("ad::") + op + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()));
}

template <class F, class D>
Var unary(Var x, F f, D dfdx) {
  Tape& t = *x.tape();
  Mat y = x.value().unaryExpr(f);
  const int xi = x.id();
  return t.record(std::move(y), {x}, [xi, dfdx](Tape& tp, int self) {
    const Mat& xv = tp.value(xi);
    const Mat& yv = tp.value(self);
    tp.accumulate(xi, tp.grad(self).cwiseProduct(xv.binaryExpr(yv, dfdx)));
  });
}

}  // namespace

Var add(Var a, Var b) {
  same_shape(a, b, "add");
  const int ai = a.id(), bi = b.id();
  return a.tape()->record(a.value() + b.value(), {a, b}, [ai, bi](Tape& t, int self) {
    t.accumulate(ai, t.grad(self));
    t.accumulate(bi, t.grad(self));
  });
}

Var sub(Var a, Var b) {
  same_shape(a, b, "sub");
  const int ai = a.id(), bi = b.id();
  return a.tape()->record(a.value() - b.value(), {a, b}, [ai, bi](Tape& t, int self) {
    t.accumulate(ai, t.grad(self));
    t.accumulate(bi, -t.grad(self));
  });
}

Var mul(Var a, Var b) {
  same_shape(a, b, "mul");
  const int ai = a.id(), bi = b.id();
  return a.tape()->record(a.value().cwiseProduct(b.value()), {a, b}, [ai, bi](Tape& t, int self) {
    const Mat& g = t.grad(self);
    if (t.needs_grad(ai)) t.accumulate(ai, g.cwiseProduct(t.value(bi)));
    if (t.needs_grad(bi)) t.accumulate(bi, g.cwiseProduct(t.value(ai)));
  });
}

Var div(Var a, Var b) {
  same_shape(a, b, "div");
  const int ai = a.id(), bi = b.id();
  return a.tape()->record(a.value().cwiseQuotient(b.value()), {a, b}, [ai, bi](Tape& t, int self) {
    const Mat& g = t.grad(self);
    if (t.needs_grad(ai)) t.accumulate(ai, g.cwiseQuotient(t.value(bi)));
    if (t.needs_grad(bi))
      t.accumulate(bi, -g.cwiseProduct(t.value(self)).cwiseQuotient(t.value(bi)));
  });
}

Var neg(Var a) { return scale(a, -1.0); }

Var scale(Var a, double s) {
  const int ai = a.id();
  return a.tape()->record(s * a.value(), {a}, [ai, s](Tape& t, int self) { t.accumulate(ai, s * t.grad(self)); });
}

Var add_scalar(Var a, double s) {
  const int ai = a.id();
  return a.tape()->record((a.value().array() + s).matrix(), {a},
                          [ai](Tape& t, int self) { t.accumulate(ai, t.grad(self)); });
}

Var mul_const(Var a, const Mat& c) {
  if (a.rows() != c.rows() || a.cols() != c.cols()) throw DimensionError("ad::mul_const: shape mismatch");
  const int ai = a.id();
  return a.tape()->record(a.value().cwiseProduct(c), {a},
                          [ai, c](Tape& t, int self) { t.accumulate(ai, t.grad(self).cwiseProduct(c)); });
}

Var matmul(Var a, Var b) {
  if (a.cols() != b.rows())
    throw DimensionError("ad::matmul: inner dimensions " + std::to_string(a.cols()) + " vs " +
                         std::to_string(b.rows()));
  const int ai = a.id(), bi = b.id();
  return a.tape()->record(a.value() * b.value(), {a, b}, [ai, bi](Tape& t, int self) {
    const Mat& g = t.grad(self);
    if (t.needs_grad(ai)) t.accumulate(ai, g * t.value(bi).transpose());
    if (t.needs_grad(bi)) t.accumulate(bi, t.value(ai).transpose() * g);
  });
}

Var add_col(Var x, Var b) {
  if (b.cols() != 1 || b.rows() != x.rows()) throw DimensionError("ad::add_col: bias shape mismatch");
  const int xi = x.id(), bi = b.id();
  Mat y = x.value();
  y.colwise() += b.value().col(0);
  return x.tape()->record(std::move(y), {x, b}, [xi, bi](Tape& t, int self) {
    const Mat& g = t.grad(self);
    t.accumulate(xi, g);
    if (t.needs_grad(bi)) t.accumulate(bi, g.rowwise().sum());
  });
}

Var expand(Var v, Eigen::Index rows, Eigen::Index cols) {
  const Mat& val = v.value();
  const int vi = v.id();
  if (val.rows() == rows && val.cols() == cols) return v;
  Mat y;
  int mode = 0;
  if (val.rows() == 1 && val.cols() == 1) {
    y = Mat::Constant(rows, cols, val(0, 0));
    mode = 0;
  } else if (val.cols() == 1 && val.rows() == rows) {
    y = val.replicate(1, cols);
    mode = 1;
  } else if (val.rows() == 1 && val.cols() == cols) {
    y = val.replicate(rows, 1);
    mode = 2;
  } else {
    throw DimensionError("ad::expand: incompatible shape");
  }
  return v.tape()->record(std::move(y), {v}, [vi, mode](Tape& t, int self) {
    const Mat& g = t.grad(self);
    if (mode == 0) t.accumulate(vi, Mat::Constant(1, 1, g.sum()));
    else if (mode == 1) t.accumulate(vi, g.rowwise().sum());
    else t.accumulate(vi, g.colwise().sum());
  });
}

Var relu(Var x) {
  return unary(x, [](double v) { return v > 0.0 ? v : 0.0; },
               [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var elu(Var x) {
  return unary(x, [](double v) { return v > 0.0 ? v : std::expm1(v); },
               [](double v, double y) { return v > 0.0 ? 1.0 : y + 1.0; });
}

Var softplus(Var x) {
  return unary(x, [](double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); },
               [](double v, double) { return 1.0 / (1.0 + std::exp(-v)); });
}

Var sigmoid(Var x) {
  return unary(x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
               [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var x) {
  return unary(x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Var exp(Var x) {
  return unary(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Var log(Var x) {
  return unary(x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Var square(Var x) {
  return unary(x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Var sqrt(Var x) {
  return unary(x, [](double v) { return std::sqrt(v); }, [](double, double y) { return 0.5 / y; });
}

Var clamp_min(Var x, double lo) {
  return unary(x, [lo](double v) { return v > lo ? v : lo; },
               [lo](double v, double) { return v > lo ? 1.0 : 0.0; });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("ad::concat_rows: no operands");
  const Eigen::Index cols = parts.front().cols();
  Eigen::Index total = 0;
  for (const Var& p : parts) {
    if (p.cols() != cols) throw DimensionError("ad::concat_rows: column mismatch");
    total += p.rows();
  }
  Mat y(total, cols);
  std::vector<int> ids;
  std::vector<Eigen::Index> offsets;
  Eigen::Index off = 0;
  for (const Var& p : parts) {
    y.middleRows(off, p.rows()) = p.value();
    ids.push_back(p.id());
    offsets.push_back(off);
    off += p.rows();
  }
  return parts.front().tape()->record(std::move(y), parts, [ids, offsets](Tape& t, int self) {
    const Mat& g = t.grad(self);
    for (std::size_t i = 0; i < ids.size(); ++i)
      if (t.needs_grad(ids[i])) t.accumulate(ids[i], g.middleRows(offsets[i], t.value(ids[i]).rows()));
  });
}

Var rows(Var x, Eigen::Index start, Eigen::Index n) {
  if (start < 0 || n < 0 || start + n > x.rows()) throw DimensionError("ad::rows: range out of bounds");
  const int xi = x.id();
  return x.tape()->record(x.value().middleRows(start, n), {x},
                          [xi, start](Tape& t, int self) { t.accumulate_rows(xi, start, t.grad(self)); });
}

Var gather_rows(Var x, const std::vector<Eigen::Index>& idx) {
  const Mat& xv = x.value();
  Mat y(static_cast<Eigen::Index>(idx.size()), xv.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= xv.rows()) throw DimensionError("ad::gather_rows: index out of bounds");
    y.row(static_cast<Eigen::Index>(i)) = xv.row(idx[i]);
  }
  const int xi = x.id();
  return x.tape()->record(std::move(y), {x}, [xi, idx](Tape& t, int self) {
    if (!t.needs_grad(xi)) return;
    const Mat& g = t.grad(self);
    Mat& gx = t.grad_ref(xi);
    for (std::size_t i = 0; i < idx.size(); ++i) gx.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
  });
}

Var sum(Var x) {
  const int xi = x.id();
  return x.tape()->record(Mat::Constant(1, 1, x.value().sum()), {x}, [xi](Tape& t, int self) {
    const Mat& xv = t.value(xi);
    t.accumulate(xi, Mat::Constant(xv.rows(), xv.cols(), t.grad(self)(0, 0)));
  });
}

Var sum_rows(Var x) {
  const int xi = x.id();
  return x.tape()->record(x.value().colwise().sum(), {x}, [xi](Tape& t, int self) {
    t.accumulate(xi, t.grad(self).replicate(t.value(xi).rows(), 1));
  });
}

Var mean(Var x) { return scale(sum(x), 1.0 / static_cast<double>(x.value().size())); }

Var select_cols(const std::vector<std::uint8_t>& take_a, Var a, Var b) {
  same_shape(a, b, "select_cols");
  if (static_cast<Eigen::Index>(take_a.size()) != a.cols()) throw DimensionError("ad::select_cols: mask length");
  Mat y = b.value();
  for (Eigen::Index j = 0; j < a.cols(); ++j)
    if (take_a[static_cast<std::size_t>(j)]) y.col(j) = a.value().col(j);
  const int ai = a.id(), bi = b.id();
  return a.tape()->record(std::move(y), {a, b}, [ai, bi, take_a](Tape& t, int self) {
    const Mat& g = t.grad(self);
    Mat ga = Mat::Zero(g.rows(), g.cols());
    Mat gb = Mat::Zero(g.rows(), g.cols());
    for (Eigen::Index j = 0; j < g.cols(); ++j) {
      if (take_a[static_cast<std::size_t>(j)]) ga.col(j) = g.col(j);
      else gb.col(j) = g.col(j);
    }
    t.accumulate(ai, ga);
    t.accumulate(bi, gb);
  });
}

Var bmm(Var a, Var b, Eigen::Index m, Eigen::Index k, Eigen::Index n) {
  if (a.rows() != m * k || b.rows() != k * n || a.cols() != b.cols())
    throw DimensionError("ad::bmm: operand shapes do not match the block sizes");
  const Eigen::Index batch = a.cols();
  Mat y(m * n, batch);
  const Mat& av = a.value();
  const Mat& bv = b.value();
  for (Eigen::Index j = 0; j < batch; ++j) {
    Eigen::Map<const RowMajor> A(av.col(j).data(), m, k);
    Eigen::Map<const RowMajor> B(bv.col(j).data(), k, n);
    Eigen::Map<RowMajor> C(y.col(j).data(), m, n);
    C.noalias() = A * B;
  }
  const int ai = a.id(), bi = b.id();
  return a.tape()->record(std::move(y), {a, b}, [ai, bi, m, k, n](Tape& t, int self) {
    const Mat& g = t.grad(self);
    const Mat& av2 = t.value(ai);
    const Mat& bv2 = t.value(bi);
    const bool need_a = t.needs_grad(ai), need_b = t.needs_grad(bi);
    Mat ga = need_a ? Mat(m * k, g.cols()) : Mat();
    Mat gb = need_b ? Mat(k * n, g.cols()) : Mat();
    for (Eigen::Index j = 0; j < g.cols(); ++j) {
      Eigen::Map<const RowMajor> G(g.col(j).data(), m, n);
      if (need_a) {
        Eigen::Map<const RowMajor> B(bv2.col(j).data(), k, n);
        Eigen::Map<RowMajor> GA(ga.col(j).data(), m, k);
        GA.noalias() = G * B.transpose();
      }
      if (need_b) {
        Eigen::Map<const RowMajor> A(av2.col(j).data(), m, k);
        Eigen::Map<RowMajor> GB(gb.col(j).data(), k, n);
        GB.noalias() = A.transpose() * G;
      }
    }
    if (need_a) t.accumulate(ai, ga);
    if (need_b) t.accumulate(bi, gb);
  });
}

Var btranspose(Var a, Eigen::Index m, Eigen::Index n) {
  if (a.rows() != m * n) throw DimensionError("ad::btranspose: block size mismatch");
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(m * n));
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < n; ++j) idx[static_cast<std::size_t>(j * m + i)] = i * n + j;
  return gather_rows(a, idx);
}

}  // namespace vrkn::ad
