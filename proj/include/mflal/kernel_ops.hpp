#pragma once

#include <span>

#include "mflal/tensor.hpp"

namespace mflal {

/// Matern-5/2 covariance for one pair of points:
/// scale * (1 + sqrt(5) r / l + 5 r^2 / (3 l^2)) * exp(-sqrt(5) r / l).
double matern52(std::span<const double> a, std::span<const double> b, double scale,
                double lengthscale);

/// Matern-5/2 cross-covariance between the rows of `a` (n x d) and `b`
/// (m x d). `scale` and `lengthscale` are one-element tensors. The gradient
/// is finite at zero distance.
Tensor matern52_matrix(const Tensor& a, const Tensor& b, const Tensor& scale,
                       const Tensor& lengthscale);

/// Lower Cholesky factor of `a + jitter * I`. Throws NumericalError when
/// the matrix is not positive definite.
Tensor cholesky(const Tensor& a, double jitter = 0.0);

struct JitteredCholesky {
  Tensor factor;
  double jitter = 0.0;
};

/// Tries each jitter of the ladder 1e-8, 1e-6, 1e-4, 1e-3 in turn.
JitteredCholesky cholesky_with_jitter(const Tensor& a);

/// Solves lower-triangular `l * x = b` for x.
Tensor tri_solve_lower(const Tensor& l, const Tensor& b);

}  // namespace mflal
