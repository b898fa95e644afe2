#pragma once

#include "mflal/tensor.hpp"

namespace mflal {

// Elementwise binary ops. Operands must have equal shapes, or the right-hand
// side may be a row vector matching the last axis (bias broadcast), or either
// side may be a single-element tensor.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double offset);
Tensor neg(const Tensor& a);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);
/// Columns [begin, end) of a 2-D tensor.
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end);

Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor square(const Tensor& a);

Tensor softmax(const Tensor& a);
Tensor log_softmax(const Tensor& a);
/// Reduces the last axis; a rank-1 input gives a one-element tensor.
Tensor log_sum_exp(const Tensor& a);
Tensor sum_last(const Tensor& a);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor l2_norm(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator*(const Tensor& a, double s) { return scale(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }
inline Tensor operator+(const Tensor& a, double s) { return add_scalar(a, s); }
inline Tensor operator-(const Tensor& a, double s) { return add_scalar(a, -s); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

/// Inverse of softplus, for initializing constrained parameters.
double softplus_inverse(double y);
double softplus_value(double x);

}  // namespace mflal

namespace mflal {

/// Square matrix with `v` on the diagonal.
Tensor diag_embed(const Tensor& v);
/// Main diagonal of a square matrix.
Tensor diag_part(const Tensor& a);

}  // namespace mflal
