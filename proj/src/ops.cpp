#include "mflal/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "mflal/errors.hpp"

namespace mflal {
namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMajor>;
using ConstMatMap = Eigen::Map<const RowMajor>;

enum class Broadcast { same, row, scalar_left, scalar_right };

Broadcast classify(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return Broadcast::same;
  if (b.size() == 1) return Broadcast::scalar_right;
  if (a.size() == 1) return Broadcast::scalar_left;
  if (b.rank() == 1 && a.rank() >= 2 && b.size() == a.cols()) return Broadcast::row;
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_string(a.shape()) + " and " +
                   shape_string(b.shape()));
}

// Elementwise binary op with broadcasting. `f` computes the value, `da` and
// `db` the partial derivatives given (a, b, out).
template <class F, class Da, class Db>
Tensor binary(const char* name, const Tensor& a, const Tensor& b, F f, Da da, Db db) {
  const Broadcast mode = classify(name, a, b);
  const Shape& shape = mode == Broadcast::scalar_left ? b.shape() : a.shape();
  const std::size_t n = shape_size(shape);
  const std::size_t bcols = b.size();
  auto ia = [mode](std::size_t i) { return mode == Broadcast::scalar_left ? 0 : i; };
  auto ib = [mode, bcols](std::size_t i) {
    switch (mode) {
      case Broadcast::same:
      case Broadcast::scalar_left: return i;
      case Broadcast::row: return i % bcols;
      case Broadcast::scalar_right: return std::size_t{0};
    }
    return i;
  };
  std::vector<double> out(n);
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < n; ++i) out[i] = f(av[ia(i)], bv[ib(i)]);
  return Tensor::make_result(shape, std::move(out), {a, b}, [=](detail::Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    const auto& g = self.grad;
    if (pa.requires_grad) {
      auto& ga = pa.grad_buffer();
      for (std::size_t i = 0; i < n; ++i)
        ga[ia(i)] += g[i] * da(pa.value[ia(i)], pb.value[ib(i)], self.value[i]);
    }
    if (pb.requires_grad) {
      auto& gb = pb.grad_buffer();
      for (std::size_t i = 0; i < n; ++i)
        gb[ib(i)] += g[i] * db(pa.value[ia(i)], pb.value[ib(i)], self.value[i]);
    }
  });
}

// Elementwise unary op; `d` gives the derivative from (x, out).
template <class F, class D>
Tensor unary(const Tensor& a, F f, D d) {
  std::vector<double> out(a.size());
  const auto av = a.values();
  std::transform(av.begin(), av.end(), out.begin(), f);
  return Tensor::make_result(a.shape(), std::move(out), {a}, [d](detail::Node& self) {
    auto& p = *self.parents[0];
    auto& gp = p.grad_buffer();
    for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += self.grad[i] * d(p.value[i], self.value[i]);
  });
}

Shape reduced_last(const Shape& shape) {
  if (shape.size() <= 1) return {1};
  return Shape(shape.begin(), shape.end() - 1);
}

}  // namespace

double softplus_value(double x) {
  return x > 30.0 ? x : std::log1p(std::exp(x));
}

double softplus_inverse(double y) {
  if (y <= 0.0) throw std::invalid_argument("softplus_inverse: argument must be positive");
  return y > 30.0 ? y : std::log(std::expm1(y));
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y, double) { return y; }, [](double x, double, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double, double y, double) { return 1.0 / y; },
      [](double, double y, double out) { return -out / y; });
}

Tensor scale(const Tensor& a, double factor) {
  return unary(
      a, [factor](double x) { return x * factor; }, [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double offset) {
  return unary(
      a, [offset](double x) { return x + offset; }, [](double, double) { return 1.0; });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
    throw ShapeError("matmul: incompatible shapes " + shape_string(a.shape()) + " and " +
                     shape_string(b.shape()));
  }
  const auto n = static_cast<Eigen::Index>(a.rows());
  const auto k = static_cast<Eigen::Index>(a.cols());
  const auto m = static_cast<Eigen::Index>(b.cols());
  std::vector<double> out(static_cast<std::size_t>(n * m));
  MatMap(out.data(), n, m).noalias() =
      ConstMatMap(a.values().data(), n, k) * ConstMatMap(b.values().data(), k, m);
  return Tensor::make_result({a.rows(), b.cols()}, std::move(out), {a, b},
                             [n, k, m](detail::Node& self) {
                               auto& pa = *self.parents[0];
                               auto& pb = *self.parents[1];
                               ConstMatMap g(self.grad.data(), n, m);
                               if (pa.requires_grad) {
                                 MatMap(pa.grad_buffer().data(), n, k).noalias() +=
                                     g * ConstMatMap(pb.value.data(), k, m).transpose();
                               }
                               if (pb.requires_grad) {
                                 MatMap(pb.grad_buffer().data(), k, m).noalias() +=
                                     ConstMatMap(pa.value.data(), n, k).transpose() * g;
                               }
                             });
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw ShapeError("transpose: expected rank 2, got " + shape_string(a.shape()));
  const auto n = static_cast<Eigen::Index>(a.rows());
  const auto m = static_cast<Eigen::Index>(a.cols());
  std::vector<double> out(a.size());
  MatMap(out.data(), m, n) = ConstMatMap(a.values().data(), n, m).transpose();
  return Tensor::make_result({a.cols(), a.rows()}, std::move(out), {a}, [n, m](detail::Node& self) {
    auto& p = *self.parents[0];
    MatMap(p.grad_buffer().data(), n, m) += ConstMatMap(self.grad.data(), m, n).transpose();
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_size(shape) != a.size()) {
    throw ShapeError("reshape: cannot view " + shape_string(a.shape()) + " as " + shape_string(shape));
  }
  std::vector<double> out(a.values().begin(), a.values().end());
  return Tensor::make_result(std::move(shape), std::move(out), {a}, [](detail::Node& self) {
    auto& gp = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += self.grad[i];
  });
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
  if (a.rank() != 2 || begin >= end || end > a.cols()) {
    throw ShapeError("slice_cols: range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") invalid for shape " + shape_string(a.shape()));
  }
  const std::size_t n = a.rows(), m = a.cols(), w = end - begin;
  std::vector<double> out(n * w);
  const auto av = a.values();
  for (std::size_t r = 0; r < n; ++r)
    std::copy_n(av.begin() + static_cast<std::ptrdiff_t>(r * m + begin), w, out.begin() + static_cast<std::ptrdiff_t>(r * w));
  return Tensor::make_result({n, w}, std::move(out), {a}, [n, m, w, begin](detail::Node& self) {
    auto& gp = self.parents[0]->grad_buffer();
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < w; ++c) gp[r * m + begin + c] += self.grad[r * w + c];
  });
}

Tensor relu(const Tensor& a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor exp(const Tensor& a) {
  return unary(
      a, [](double x) { return std::exp(x); }, [](double, double out) { return out; });
}

Tensor log(const Tensor& a) {
  return unary(
      a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor softplus(const Tensor& a) {
  return unary(
      a, softplus_value, [](double x, double) { return 1.0 / (1.0 + std::exp(-x)); });
}

Tensor sqrt(const Tensor& a) {
  return unary(
      a, [](double x) { return std::sqrt(x); }, [](double, double out) { return 0.5 / out; });
}

Tensor square(const Tensor& a) {
  return unary(
      a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor log_softmax(const Tensor& a) {
  const std::size_t m = a.cols();
  const std::size_t n = a.size() / m;
  std::vector<double> out(a.size());
  const auto av = a.values();
  for (std::size_t r = 0; r < n; ++r) {
    const double* row = av.data() + r * m;
    const double mx = *std::max_element(row, row + m);
    double s = 0.0;
    for (std::size_t c = 0; c < m; ++c) s += std::exp(row[c] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t c = 0; c < m; ++c) out[r * m + c] = row[c] - lse;
  }
  return Tensor::make_result(a.shape(), std::move(out), {a}, [n, m](detail::Node& self) {
    auto& gp = self.parents[0]->grad_buffer();
    for (std::size_t r = 0; r < n; ++r) {
      double gsum = 0.0;
      for (std::size_t c = 0; c < m; ++c) gsum += self.grad[r * m + c];
      for (std::size_t c = 0; c < m; ++c) {
        const std::size_t i = r * m + c;
        gp[i] += self.grad[i] - std::exp(self.value[i]) * gsum;
      }
    }
  });
}

Tensor softmax(const Tensor& a) {
  const std::size_t m = a.cols();
  const std::size_t n = a.size() / m;
  std::vector<double> out(a.size());
  const auto av = a.values();
  for (std::size_t r = 0; r < n; ++r) {
    const double* row = av.data() + r * m;
    const double mx = *std::max_element(row, row + m);
    double s = 0.0;
    for (std::size_t c = 0; c < m; ++c) s += (out[r * m + c] = std::exp(row[c] - mx));
    for (std::size_t c = 0; c < m; ++c) out[r * m + c] /= s;
  }
  return Tensor::make_result(a.shape(), std::move(out), {a}, [n, m](detail::Node& self) {
    auto& gp = self.parents[0]->grad_buffer();
    for (std::size_t r = 0; r < n; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < m; ++c) dot += self.grad[r * m + c] * self.value[r * m + c];
      for (std::size_t c = 0; c < m; ++c) {
        const std::size_t i = r * m + c;
        gp[i] += self.value[i] * (self.grad[i] - dot);
      }
    }
  });
}

Tensor log_sum_exp(const Tensor& a) {
  const std::size_t m = a.cols();
  const std::size_t n = a.size() / m;
  std::vector<double> out(n);
  const auto av = a.values();
  for (std::size_t r = 0; r < n; ++r) {
    const double* row = av.data() + r * m;
    const double mx = *std::max_element(row, row + m);
    if (std::isinf(mx)) {
      out[r] = mx;
      continue;
    }
    double s = 0.0;
    for (std::size_t c = 0; c < m; ++c) s += std::exp(row[c] - mx);
    out[r] = mx + std::log(s);
  }
  return Tensor::make_result(reduced_last(a.shape()), std::move(out), {a}, [n, m](detail::Node& self) {
    auto& p = *self.parents[0];
    auto& gp = p.grad_buffer();
    for (std::size_t r = 0; r < n; ++r) {
      if (!std::isfinite(self.value[r])) continue;
      for (std::size_t c = 0; c < m; ++c)
        gp[r * m + c] += self.grad[r] * std::exp(p.value[r * m + c] - self.value[r]);
    }
  });
}

Tensor sum_last(const Tensor& a) {
  const std::size_t m = a.cols();
  const std::size_t n = a.size() / m;
  std::vector<double> out(n, 0.0);
  const auto av = a.values();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < m; ++c) out[r] += av[r * m + c];
  return Tensor::make_result(reduced_last(a.shape()), std::move(out), {a}, [n, m](detail::Node& self) {
    auto& gp = self.parents[0]->grad_buffer();
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < m; ++c) gp[r * m + c] += self.grad[r];
  });
}

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double v : a.values()) total += v;
  return Tensor::make_result({1}, {total}, {a}, [](detail::Node& self) {
    auto& gp = self.parents[0]->grad_buffer();
    for (double& g : gp) g += self.grad[0];
  });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

Tensor l2_norm(const Tensor& a) {
  double ss = 0.0;
  for (double v : a.values()) ss += v * v;
  const double norm = std::sqrt(ss);
  return Tensor::make_result({1}, {norm}, {a}, [](detail::Node& self) {
    auto& p = *self.parents[0];
    if (self.value[0] == 0.0) return;
    auto& gp = p.grad_buffer();
    for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += self.grad[0] * p.value[i] / self.value[0];
  });
}

}  // namespace mflal

namespace mflal {

Tensor diag_embed(const Tensor& v) {
  const std::size_t n = v.size();
  std::vector<double> out(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) out[i * n + i] = v[i];
  return Tensor::make_result({n, n}, std::move(out), {v}, [n](detail::Node& self) {
    auto& gp = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < n; ++i) gp[i] += self.grad[i * n + i];
  });
}

Tensor diag_part(const Tensor& a) {
  if (a.rank() != 2 || a.rows() != a.cols()) {
    throw ShapeError("diag_part: expected a square matrix, got " + shape_string(a.shape()));
  }
  const std::size_t n = a.rows();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i * n + i];
  return Tensor::make_result({n}, std::move(out), {a}, [n](detail::Node& self) {
    auto& gp = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < n; ++i) gp[i * n + i] += self.grad[i];
  });
}

}  // namespace mflal
