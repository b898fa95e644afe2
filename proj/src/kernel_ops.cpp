#include "mflal/kernel_ops.hpp"

#include <Eigen/Dense>
#include <array>
#include <cmath>

#include "mflal/errors.hpp"

namespace mflal {
namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMajor>;
using ConstMatMap = Eigen::Map<const RowMajor>;

const double kSqrt5 = std::sqrt(5.0);

constexpr std::array<double, 4> kJitterLadder{1e-8, 1e-6, 1e-4, 1e-3};

void require_square(const char* op, const Tensor& a) {
  if (a.rank() != 2 || a.rows() != a.cols()) {
    throw ShapeError(std::string(op) + ": expected a square matrix, got " + shape_string(a.shape()));
  }
}

}  // namespace

double matern52(std::span<const double> a, std::span<const double> b, double scale,
                double lengthscale) {
  if (a.size() != b.size()) throw ShapeError("matern52: points differ in dimension");
  double ss = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) ss += (a[i] - b[i]) * (a[i] - b[i]);
  const double q = kSqrt5 * std::sqrt(ss) / lengthscale;
  return scale * (1.0 + q + q * q / 3.0) * std::exp(-q);
}

Tensor matern52_matrix(const Tensor& a, const Tensor& b, const Tensor& scale,
                       const Tensor& lengthscale) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.cols()) {
    throw ShapeError("matern52_matrix: incompatible shapes " + shape_string(a.shape()) + " and " +
                     shape_string(b.shape()));
  }
  const std::size_t n = a.rows(), m = b.rows(), d = a.cols();
  const double s2 = scale.item();
  const double ell = lengthscale.item();
  std::vector<double> out(n * m);
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      out[i * m + j] = matern52(av.subspan(i * d, d), bv.subspan(j * d, d), s2, ell);
    }
  }
  return Tensor::make_result(
      {n, m}, std::move(out), {a, b, scale, lengthscale}, [n, m, d](detail::Node& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        auto& ps = *self.parents[2];
        auto& pl = *self.parents[3];
        const double s2 = ps.value[0];
        const double ell = pl.value[0];
        const double coef = 5.0 / (3.0 * ell * ell);
        double g_scale = 0.0, g_ell = 0.0;
        std::vector<double> diff(d);
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < m; ++j) {
            const double g = self.grad[i * m + j];
            if (g == 0.0) continue;
            double ss = 0.0;
            for (std::size_t c = 0; c < d; ++c) {
              diff[c] = pa.value[i * d + c] - pb.value[j * d + c];
              ss += diff[c] * diff[c];
            }
            const double q = kSqrt5 * std::sqrt(ss) / ell;
            const double e = std::exp(-q);
            g_scale += g * (1.0 + q + q * q / 3.0) * e;
            g_ell += g * s2 * e * q * q * (1.0 + q) / (3.0 * ell);
            // d k / d a = -scale * exp(-q) * (1 + q) * 5 / (3 l^2) * (a - b)
            const double radial = -g * s2 * e * (1.0 + q) * coef;
            if (pa.requires_grad) {
              auto& ga = pa.grad_buffer();
              for (std::size_t c = 0; c < d; ++c) ga[i * d + c] += radial * diff[c];
            }
            if (pb.requires_grad) {
              auto& gb = pb.grad_buffer();
              for (std::size_t c = 0; c < d; ++c) gb[j * d + c] -= radial * diff[c];
            }
          }
        }
        if (ps.requires_grad) ps.grad_buffer()[0] += g_scale;
        if (pl.requires_grad) pl.grad_buffer()[0] += g_ell;
      });
}

Tensor cholesky(const Tensor& a, double jitter) {
  require_square("cholesky", a);
  const auto n = static_cast<Eigen::Index>(a.rows());
  RowMajor mat = ConstMatMap(a.values().data(), n, n);
  mat.diagonal().array() += jitter;
  Eigen::LLT<RowMajor> llt(mat);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("cholesky: matrix of size " + std::to_string(n) +
                         " is not positive definite (jitter " + std::to_string(jitter) + ")");
  }
  RowMajor lower = llt.matrixL();
  if (!lower.allFinite()) throw NumericalError("cholesky: non-finite factor");
  std::vector<double> out(lower.data(), lower.data() + lower.size());
  return Tensor::make_result(a.shape(), std::move(out), {a}, [n](detail::Node& self) {
    // A_bar = sym(L^-T Phi(L^T L_bar) L^-1), Phi = lower triangle with halved diagonal.
    ConstMatMap l(self.value.data(), n, n);
    ConstMatMap lbar(self.grad.data(), n, n);
    RowMajor p = (l.transpose() * lbar.triangularView<Eigen::Lower>()).triangularView<Eigen::Lower>();
    p.diagonal() *= 0.5;
    RowMajor s = l.transpose().triangularView<Eigen::Upper>().solve(p);
    s = l.transpose().triangularView<Eigen::Upper>().solve(s.transpose()).transpose();
    MatMap(self.parents[0]->grad_buffer().data(), n, n) += 0.5 * (s + s.transpose());
  });
}

JitteredCholesky cholesky_with_jitter(const Tensor& a) {
  for (double jitter : kJitterLadder) {
    try {
      return {cholesky(a, jitter), jitter};
    } catch (const NumericalError&) {
    }
  }
  throw NumericalError("cholesky: still singular at maximum jitter 1e-3");
}

Tensor tri_solve_lower(const Tensor& l, const Tensor& b) {
  require_square("tri_solve_lower", l);
  if (b.rank() != 2 || b.rows() != l.rows()) {
    throw ShapeError("tri_solve_lower: incompatible shapes " + shape_string(l.shape()) + " and " +
                     shape_string(b.shape()));
  }
  const auto n = static_cast<Eigen::Index>(l.rows());
  const auto m = static_cast<Eigen::Index>(b.cols());
  ConstMatMap lm(l.values().data(), n, n);
  RowMajor x = lm.triangularView<Eigen::Lower>().solve(ConstMatMap(b.values().data(), n, m));
  std::vector<double> out(x.data(), x.data() + x.size());
  return Tensor::make_result(b.shape(), std::move(out), {l, b}, [n, m](detail::Node& self) {
    auto& pl = *self.parents[0];
    auto& pb = *self.parents[1];
    ConstMatMap lm(pl.value.data(), n, n);
    RowMajor bbar = lm.transpose().triangularView<Eigen::Upper>().solve(ConstMatMap(self.grad.data(), n, m));
    if (pb.requires_grad) MatMap(pb.grad_buffer().data(), n, m) += bbar;
    if (pl.requires_grad) {
      RowMajor lbar = -(bbar * ConstMatMap(self.value.data(), n, m).transpose());
      MatMap(pl.grad_buffer().data(), n, n) += lbar.triangularView<Eigen::Lower>().toDenseMatrix();
    }
  });
}

}  // namespace mflal
