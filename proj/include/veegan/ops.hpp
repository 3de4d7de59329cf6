#pragma once

#include <cstddef>

#include "veegan/tape.hpp"
#include "veegan/tensor.hpp"

// Differentiable primitives. Binary elementwise ops accept equal shapes, or a
// right operand whose shape equals the left shape with the leading (batch)
// dimension removed; the right operand is then broadcast across rows.

namespace veegan::nd {

/// op(a) * op(b) for 2D operands, where op transposes when the flag is set.
Var matmul(const Var& a, const Var& b, bool transpose_a = false, bool transpose_b = false);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var neg(const Var& a);
Var scale(const Var& a, double factor);
Var add_scalar(const Var& a, double offset);

Var tanh(const Var& a);
Var relu(const Var& a);
Var leaky_relu(const Var& a, double slope = 0.2);
Var sigmoid(const Var& a);
/// log(sigmoid(t)), evaluated as -softplus(-t).
Var log_sigmoid(const Var& a);
Var softplus(const Var& a);

/// Sum of all elements, rank-0 result.
Var sum(const Var& a);
Var mean(const Var& a);
/// Sum of squares of all elements, rank-0 result.
Var squared_l2(const Var& a);

/// Reduce over the leading dimension: [n x ...] -> [...].
Var sum_rows(const Var& a);
/// Repeat `a` n times along a new leading dimension.
Var broadcast_rows(const Var& a, std::size_t n);
/// Fill a tensor of `shape` with the single value of `s`.
Var expand_scalar(const Var& s, const Shape& shape);

Var concat_cols(const Var& a, const Var& b);
/// Columns [offset, offset + width) of a 2D tensor.
Var slice_cols(const Var& a, std::size_t offset, std::size_t width);
/// Embed a 2D tensor at column `offset` inside a zero tensor with `total` columns.
Var pad_cols(const Var& a, std::size_t offset, std::size_t total);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator-(const Var& a) { return neg(a); }

namespace kernels {

Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_a = false, bool transpose_b = false);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor slice_cols(const Tensor& a, std::size_t offset, std::size_t width);
double log_sigmoid(double t) noexcept;
double sigmoid(double t) noexcept;
double softplus(double t) noexcept;

}  // namespace kernels

}  // namespace veegan::nd
