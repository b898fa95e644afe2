#include <doctest.h>

#include <cmath>
#include <numbers>

#include "../support/gradcheck.hpp"
#include "mflal/adam.hpp"
#include "mflal/errors.hpp"
#include "mflal/kernel_ops.hpp"
#include "mflal/mlp.hpp"
#include "mflal/ops.hpp"
#include "mflal/rng.hpp"

using namespace mflal;
using mflal::testing::max_gradient_error;

namespace {

Tensor random_param(Shape shape, Rng& rng, double s = 1.0) {
  std::vector<double> v(shape_size(shape));
  for (double& x : v) x = s * rng.normal();
  return Tensor::parameter(std::move(shape), std::move(v));
}

}  // namespace

TEST_CASE("matmul with the identity returns the other operand") {
  Rng rng(1);
  const Tensor eye = Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  const Tensor a = random_param({3, 3}, rng);
  const Tensor out = matmul(eye, a);
  for (std::size_t i = 0; i < 9; ++i) CHECK(out[i] == a[i]);
}

TEST_CASE("relu clips negatives") {
  const Tensor out = relu(Tensor::from({3}, {-1, 0, 2}));
  CHECK(out[0] == 0.0);
  CHECK(out[1] == 0.0);
  CHECK(out[2] == 2.0);
}

TEST_CASE("log_sum_exp of two zeros is ln 2") {
  CHECK(log_sum_exp(Tensor::from({2}, {0, 0})).item() == doctest::Approx(std::numbers::ln2).epsilon(1e-15));
}

TEST_CASE("log_sum_exp agrees with the naive formula and stays finite for large inputs") {
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> v(1 + rng.uniform_int(10));
    double naive = 0.0;
    for (double& x : v) {
      x = 40.0 * rng.uniform() - 20.0;
      naive += std::exp(x);
    }
    const double lse = log_sum_exp(Tensor::from({v.size()}, v)).item();
    CHECK(std::abs(lse - std::log(naive)) <= 1e-12 * std::max(1.0, std::abs(lse)));
  }
  const Tensor big = Tensor::from({3}, {700.0, 699.0, -700.0});
  CHECK(std::isfinite(log_sum_exp(big).item()));
}

TEST_CASE("shape mismatches name the operation and both shapes") {
  const Tensor a = Tensor::zeros({2, 3});
  const Tensor b = Tensor::zeros({4, 5});
  try {
    (void)matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("matmul") != std::string::npos);
    CHECK(msg.find("[2,3]") != std::string::npos);
    CHECK(msg.find("[4,5]") != std::string::npos);
  }
  CHECK_THROWS_AS((void)add(a, Tensor::zeros({2, 2})), ShapeError);
}

TEST_CASE("backward: derivative of x^2 at 3 is 6") {
  Tensor x = Tensor::parameter({1}, {3.0});
  square(x).backward();
  CHECK(x.grad()[0] == doctest::Approx(6.0));
}

TEST_CASE("backward: unreachable parameters keep zero gradient") {
  Tensor p = Tensor::parameter({2}, {1.0, 2.0});
  Tensor q = Tensor::parameter({1}, {5.0});
  const Tensor loss = add(sum(Tensor::from({2}, {3.0, 4.0})), sum(square(q)));
  loss.backward();
  CHECK(p.grad()[0] == 0.0);
  CHECK(p.grad()[1] == 0.0);
  CHECK(q.grad()[0] == doctest::Approx(10.0));
}

TEST_CASE("backward rejects non-scalar losses") {
  Tensor x = Tensor::parameter({2}, {1.0, 2.0});
  CHECK_THROWS_AS(square(x).backward(), ShapeError);
}

TEST_CASE("elementwise and reduction gradients match central differences") {
  Rng rng(11);
  Tensor a = random_param({3, 4}, rng);
  Tensor b = random_param({3, 4}, rng);
  Tensor row = random_param({4}, rng);
  Tensor pos = Tensor::parameter({3, 4}, std::vector<double>(12, 0.0));
  for (double& v : pos.mutable_values()) v = 0.5 + rng.uniform();

  auto check = [&](const std::function<Tensor()>& f, std::vector<Tensor> ps) {
    CHECK(max_gradient_error(f, std::move(ps)) < 1e-6);
  };
  check([&] { return sum(mul(add(a, row), b)); }, {a, b, row});
  check([&] { return sum(div(a, pos)); }, {a, pos});
  check([&] { return sum(mul(softmax(a), b)); }, {a});
  check([&] { return sum(mul(log_softmax(a), b)); }, {a});
  check([&] { return sum(mul(log_sum_exp(a), sum_last(b))); }, {a, b});
  check([&] { return sum(mul(softplus(a), exp(b))); }, {a, b});
  check([&] { return sum(mul(log(pos), sqrt(pos))); }, {pos});
  check([&] { return l2_norm(matmul(transpose(a), b)); }, {a, b});
  check([&] { return mean(square(slice_cols(reshape(a, {4, 3}), 1, 3))); }, {a});
  check([&] { return sum(mul(diag_embed(row), diag_embed(diag_part(matmul(transpose(a), b))))); }, {a, b, row});
}

TEST_CASE("kernel and factorization gradients match central differences") {
  Rng rng(5);
  Tensor x = random_param({5, 2}, rng);
  Tensor y = random_param({3, 2}, rng);
  Tensor s = Tensor::parameter({1}, {1.3});
  Tensor l = Tensor::parameter({1}, {0.8});
  Tensor w = random_param({5, 3}, rng);
  CHECK(max_gradient_error([&] { return sum(mul(matern52_matrix(x, y, s, l), w)); }, {x, y, s, l}) < 1e-6);

  // Self-covariance: zero distances on the diagonal must not produce NaN.
  Tensor w5 = random_param({5, 5}, rng);
  CHECK(max_gradient_error([&] { return sum(mul(matern52_matrix(x, x, s, l), w5)); }, {x, s, l}) < 1e-6);

  Tensor b = random_param({5, 2}, rng);
  auto chol_loss = [&] {
    const Tensor k = matern52_matrix(x, x, s, l);
    const Tensor lower = cholesky(k, 1e-2);
    return sum(square(tri_solve_lower(lower, b)));
  };
  CHECK(max_gradient_error(chol_loss, {x, s, l, b}) < 1e-5);
}

TEST_CASE("matern52 closed form at unit distance") {
  const std::vector<double> a{0.0}, b{1.0};
  const double expected = (1.0 + std::sqrt(5.0) + 5.0 / 3.0) * std::exp(-std::sqrt(5.0));
  CHECK(matern52(a, b, 1.0, 1.0) == doctest::Approx(expected).epsilon(1e-14));
  CHECK(matern52(a, b, 1.0, 1.0) == doctest::Approx(0.5240).epsilon(1e-4));
  CHECK(matern52(a, a, 2.5, 0.3) == 2.5);
  const std::vector<double> c{0.3, -1.2}, d{1.1, 0.4};
  CHECK(matern52(c, d, 1.7, 0.9) == matern52(d, c, 1.7, 0.9));
}

TEST_CASE("cholesky jitter ladder recovers a singular matrix") {
  const Tensor ones = Tensor::from({2, 2}, {1, 1, 1, 1});
  CHECK_THROWS_AS((void)cholesky(ones, 0.0), NumericalError);
  const auto chol = cholesky_with_jitter(ones);
  CHECK(chol.jitter > 0.0);
  CHECK(chol.jitter <= 1e-3);
}

TEST_CASE("random two-layer network gradients match central differences") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t in = 1 + rng.uniform_int(16), hidden = 1 + rng.uniform_int(16), out = 1 + rng.uniform_int(16);
    const Mlp net({in, hidden, out}, rng);
    const Tensor x = random_param({4, in}, rng).detach();
    const Tensor target = random_param({4, out}, rng).detach();
    const double err = max_gradient_error([&] { return mean(square(sub(net.forward(x), target))); },
                                          net.parameters(), 1e-5, 1e-6);
    CHECK(err < 1e-4);
  }
}

TEST_CASE("gradients are bit-identical across repeated passes") {
  auto run = [] {
    Rng rng(99);
    const Mlp net({6, 8, 3}, rng);
    const Tensor x = random_param({5, 6}, rng).detach();
    log_sum_exp(reshape(net.forward(x), {15})).backward();
    std::vector<double> all;
    for (const Tensor& p : net.parameters()) all.insert(all.end(), p.grad().begin(), p.grad().end());
    return all;
  };
  CHECK(run() == run());
}

TEST_CASE("adam: zero gradients leave parameters unchanged") {
  std::vector<Tensor> params{Tensor::parameter({3}, {1.0, -2.0, 0.5})};
  AdamState state = make_adam_state(params, 0.1);
  for (int i = 0; i < 5; ++i) adam_step(params, state);
  CHECK(params[0][0] == 1.0);
  CHECK(params[0][1] == -2.0);
  CHECK(params[0][2] == 0.5);
  CHECK(state.step_count == 5);
}

TEST_CASE("adam: first bias-corrected step moves by the learning rate") {
  // m1 = 0.1, v1 = 0.001; corrected m = v = 1, so the step is lr / (1 + eps).
  Tensor p = Tensor::parameter({1}, {2.0});
  Adam opt({p}, 0.1);
  sum(p).backward();  // constant gradient 1
  opt.step();
  CHECK(p[0] == doctest::Approx(2.0 - 0.1 / (1.0 + 1e-8)).epsilon(1e-12));
  CHECK(opt.state().step_count == 1);
}
