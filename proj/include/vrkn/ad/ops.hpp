#pragma once

#include <cstdint>
#include <vector>

#include "vrkn/ad/tape.hpp"

namespace vrkn::ad {

// Layout convention: features in rows, batch samples in columns.

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);  // elementwise
Var div(Var a, Var b);  // elementwise
Var neg(Var a);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var mul_const(Var a, const Mat& c);  // elementwise by a constant

Var matmul(Var a, Var b);
/// x (m x n) + b (m x 1) broadcast over columns.
Var add_col(Var x, Var b);
/// Broadcasts a 1x1, m x 1 or 1 x n operand to rows x cols.
Var expand(Var v, Eigen::Index rows, Eigen::Index cols);

Var relu(Var x);
Var elu(Var x);
Var softplus(Var x);
Var sigmoid(Var x);
Var tanh(Var x);
Var exp(Var x);
Var log(Var x);
Var square(Var x);
Var sqrt(Var x);
/// max(x, lo); gradient is zero wherever x <= lo.
Var clamp_min(Var x, double lo);

Var concat_rows(const std::vector<Var>& parts);
Var rows(Var x, Eigen::Index start, Eigen::Index n);
Var gather_rows(Var x, const std::vector<Eigen::Index>& idx);

Var sum(Var x);       // 1 x 1
Var sum_rows(Var x);  // 1 x n, column sums
Var mean(Var x);      // 1 x 1

/// Column j of the result is a.col(j) where take_a[j] != 0, else b.col(j).
Var select_cols(const std::vector<std::uint8_t>& take_a, Var a, Var b);

/// Batched small matrix product. Each column of a holds an m x k matrix and
/// each column of b a k x n matrix, both flattened row-major; the result
/// holds the m x n products.
Var bmm(Var a, Var b, Eigen::Index m, Eigen::Index k, Eigen::Index n);
/// Batched transpose of row-major m x n blocks stored per column.
Var btranspose(Var a, Eigen::Index m, Eigen::Index n);

}  // namespace vrkn::ad
