#include <doctest.h>

#include <cmath>
#include <numbers>

#include "mflal/adam.hpp"
#include "mflal/hierarchy.hpp"
#include "mflal/ops.hpp"
#include "mflal/sequence.hpp"

using namespace mflal;

namespace {

HierarchyConfig small_config() {
  HierarchyConfig c;
  c.seq_len = 6;
  c.alphabet_size = 5;
  c.latent_dim = 4;
  c.hidden_width = 32;
  c.fidelities = 3;
  return c;
}

Tensor random_rows(std::size_t n, std::size_t d, Rng& rng, double s = 1.0) {
  std::vector<double> v(n * d);
  for (double& x : v) x = s * rng.normal();
  return Tensor::from({n, d}, std::move(v));
}

Tensor random_onehots(std::size_t n, const HierarchyConfig& c, Rng& rng) {
  const Alphabet a = Alphabet::standard(c.alphabet_size);
  std::vector<Sequence> xs;
  for (std::size_t i = 0; i < n; ++i) xs.push_back(random_sequence(c.seq_len, a, rng));
  return encode_batch(xs, a);
}

bool all_zero(std::span<const double> v) {
  for (double x : v) {
    if (x != 0.0) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("encoder sigma is positive and the encoder is deterministic") {
  const HierarchyConfig c = small_config();
  Rng rng(1);
  const LatentHierarchy h(c, rng);
  const Tensor x = random_onehots(1000, c, rng);
  const LatentGaussian g = h.encode(x);
  CHECK(g.mu.shape() == Shape{1000, 4});
  for (double s : g.sigma.values()) CHECK(s >= c.sigma_floor);
  const LatentGaussian again = h.encode(x);
  CHECK(std::equal(g.mu.values().begin(), g.mu.values().end(), again.mu.values().begin()));
}

TEST_CASE("transitions keep the latent shape, reject bad levels and stay finite when chained") {
  const HierarchyConfig c = small_config();
  Rng rng(2);
  const LatentHierarchy h(c, rng);
  Tensor z = random_rows(1000, 4, rng, 3.0);
  for (std::size_t k = 1; k < c.fidelities; ++k) {
    const LatentGaussian g = h.transition(z, k);
    CHECK(g.mu.shape() == z.shape());
    CHECK(g.sigma.shape() == z.shape());
    const LatentGaussian g2 = h.transition(z, k);
    CHECK(std::equal(g.mu.values().begin(), g.mu.values().end(), g2.mu.values().begin()));
    z = g.mu;
  }
  for (double v : z.values()) CHECK(std::isfinite(v));
  CHECK_THROWS(h.transition(z, 0));
  CHECK_THROWS(h.transition(z, 3));
  CHECK_THROWS(h.decode_logits(z, 4));
  CHECK(h.decode_logits(z, 3).shape() == Shape{1000, 30});
}

TEST_CASE("reparameterization") {
  const Tensor mu = Tensor::parameter({1, 3}, {0.5, -1.0, 2.0});
  const Tensor sigma = Tensor::from({1, 3}, {0.1, 1.0, 3.0});
  const Tensor z0 = reparameterize({mu, sigma}, Tensor::zeros({1, 3}));
  for (std::size_t i = 0; i < 3; ++i) CHECK(z0[i] == mu[i]);

  // dz/dmu is the identity: d(sum z)/dmu = 1 per coordinate.
  sum(reparameterize({mu, sigma}, Tensor::from({1, 3}, {0.3, -0.2, 1.1}))).backward();
  for (double g : mu.grad()) CHECK(g == 1.0);

  Rng rng(4);
  const std::size_t n = 10000;
  std::vector<double> total(3, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    const Tensor z = reparameterize({mu.detach(), sigma}, rng);
    for (std::size_t i = 0; i < 3; ++i) total[i] += z[i];
  }
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(std::abs(total[i] / n - mu[i]) < 3.0 * sigma[i] / std::sqrt(static_cast<double>(n)));
  }
}

TEST_CASE("KL against the standard normal") {
  const Tensor zero = Tensor::zeros({1, 4});
  const Tensor one = Tensor::full({1, 4}, 1.0);
  CHECK(kl_to_standard_normal({zero, one}).item() == doctest::Approx(0.0).epsilon(1e-15));
  const Tensor mu = Tensor::from({1, 2}, {1.5, -2.0});
  // mu^2 / 2 per coordinate
  CHECK(kl_to_standard_normal({mu, Tensor::full({1, 2}, 1.0)}).item() == doctest::Approx(1.125 + 2.0));
  // 0.5 (s^2 - 1 - ln s^2) for s = 2
  CHECK(kl_to_standard_normal({Tensor::zeros({1, 1}), Tensor::full({1, 1}, 2.0)}).item() ==
        doctest::Approx(0.5 * (4.0 - 1.0 - std::log(4.0))));
}

TEST_CASE("cross-entropy limits") {
  const std::size_t l = 3, a = 4;
  const Alphabet alpha = Alphabet::standard(a);
  const Tensor target = encode_one_hot(Sequence{{1, 3, 0}}, alpha);
  const Tensor t = reshape(target, {1, l * a});
  const Tensor uniform = Tensor::zeros({1, l * a});
  CHECK(sequence_cross_entropy(uniform, t, a).item() == doctest::Approx(l * std::log(4.0)));
  const Tensor sharp = scale(t, 60.0);
  CHECK(sequence_cross_entropy(sharp, t, a).item() < 1e-20);
}

TEST_CASE("the level-k loss only reaches the encoder, transitions below k and decoder k") {
  const HierarchyConfig c = small_config();
  Rng rng(5);
  const LatentHierarchy h(c, rng);
  const Tensor x = random_onehots(8, c, rng);
  for (std::size_t k = 1; k <= c.fidelities; ++k) {
    for (Tensor p : h.parameters()) p.zero_grad();
    const ElboTerms terms = h.elbo_loss(x, k, rng);
    CHECK(terms.kl.item() >= 0.0);
    CHECK(terms.reconstruction.item() >= 0.0);
    terms.loss.backward();
    bool encoder_touched = false;
    for (const Tensor& p : h.encoder().parameters()) encoder_touched |= !all_zero(p.grad());
    CHECK(encoder_touched);
    for (std::size_t j = 1; j <= c.fidelities; ++j) {
      bool touched = false;
      for (const Tensor& p : h.decoder(j).parameters()) touched |= !all_zero(p.grad());
      CHECK(touched == (j == k));
    }
    for (std::size_t j = 1; j < c.fidelities; ++j) {
      bool touched = false;
      for (const Tensor& p : h.transition_net(j).parameters()) touched |= !all_zero(p.grad());
      CHECK(touched == (j < k));
    }
  }
}

TEST_CASE("training on 64 sequences halves the loss and reconstructs them") {
  HierarchyConfig c;
  c.seq_len = 10;
  c.alphabet_size = 12;
  c.latent_dim = 16;
  c.hidden_width = 128;
  c.fidelities = 2;
  Rng rng(6);
  LatentHierarchy h(c, rng);
  const Alphabet a = Alphabet::standard(12);
  std::vector<Sequence> xs;
  for (int i = 0; i < 64; ++i) xs.push_back(random_sequence(10, a, rng));
  const Tensor x = encode_batch(xs, a);

  Adam opt(h.parameters(), 3e-3);
  std::vector<double> losses;
  for (int step = 0; step < 500; ++step) {
    opt.zero_grad();
    const Tensor loss = h.elbo_loss(x, 1, rng).loss;
    losses.push_back(loss.item());
    loss.backward();
    opt.step();
  }
  double early = 0.0, late = 0.0;
  for (int i = 0; i < 10; ++i) {
    early += losses[i] / 10.0;
    late += losses[losses.size() - 1 - i] / 10.0;
  }
  CHECK(late <= 0.5 * early);

  const Tensor z = h.latent_mean(x, 1);
  const Tensor logits = h.decode_logits(z, 1);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const Tensor row = Tensor::from({120}, {logits.values().begin() + static_cast<std::ptrdiff_t>(i * 120),
                                            logits.values().begin() + static_cast<std::ptrdiff_t>((i + 1) * 120)});
    const Sequence y = decode_greedy(row, 10);
    for (std::size_t p = 0; p < 10; ++p) hits += y.ids[p] == xs[i].ids[p];
  }
  CHECK(static_cast<double>(hits) / 640.0 > 0.9);

  double norm = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double s = 0.0;
    for (std::size_t d = 0; d < 16; ++d) s += z[i * 16 + d] * z[i * 16 + d];
    norm += std::sqrt(s) / 64.0;
  }
  CHECK(norm >= 0.1 * 4.0);
  CHECK(norm <= 3.0 * 4.0);
}
