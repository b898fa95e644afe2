#pragma once

#include <vector>

#include "mflal/mlp.hpp"
#include "mflal/rng.hpp"
#include "mflal/tensor.hpp"

namespace mflal {

struct HierarchyConfig {
  std::size_t seq_len = 10;
  std::size_t alphabet_size = 12;
  std::size_t latent_dim = 16;
  std::size_t hidden_width = 128;
  std::size_t fidelities = 4;
  double kl_weight = 0.1;
  double sigma_floor = 1e-6;
};

/// Diagonal Gaussian over a batch of latent points; both fields are n x d_z.
struct LatentGaussian {
  Tensor mu;
  Tensor sigma;
};

struct ElboTerms {
  Tensor loss;           // mean over the batch of recon + kl_weight * kl
  Tensor reconstruction; // mean per-sequence cross-entropy
  Tensor kl;             // mean per-sequence KL summed over visited levels
  Tensor latent;         // sampled z_k, n x d_z, still attached to the graph
};

/// z = mu + sigma * eps with eps ~ N(0, I) drawn from `rng`.
Tensor reparameterize(const LatentGaussian& g, Rng& rng);
Tensor reparameterize(const LatentGaussian& g, const Tensor& eps);

/// Per-row KL(N(mu, diag sigma^2) || N(0, I)).
Tensor kl_to_standard_normal(const LatentGaussian& g);

/// Per-row cross-entropy of position-wise softmax(logits) against the
/// one-hot targets; both are n x (L * A).
Tensor sequence_cross_entropy(const Tensor& logits, const Tensor& targets, std::size_t alphabet_size);

/// Shared encoder, the chain of transition networks between consecutive
/// latent spaces, and one decoder per fidelity. Fidelities are 1-based.
class LatentHierarchy {
 public:
  LatentHierarchy() = default;
  LatentHierarchy(const HierarchyConfig& config, Rng& rng);

  const HierarchyConfig& config() const { return config_; }
  std::size_t fidelities() const { return config_.fidelities; }
  std::size_t latent_dim() const { return config_.latent_dim; }

  /// Fidelity-1 posterior for a batch of one-hot rows.
  LatentGaussian encode(const Tensor& one_hot) const;
  /// Distribution in latent space k+1 given points in space k, 1 <= k < K.
  LatentGaussian transition(const Tensor& z, std::size_t k) const;
  /// Unnormalized logits, n x (L * A), from decoder k.
  Tensor decode_logits(const Tensor& z, std::size_t k) const;

  /// Reconstruction through latent level k with one sample per level and
  /// KL against N(0, I) at every visited level.
  ElboTerms elbo_loss(const Tensor& one_hot, std::size_t k, Rng& rng) const;

  /// Chains posterior means from the encoder up to level k.
  Tensor latent_mean(const Tensor& one_hot, std::size_t k) const;

  std::vector<Tensor> parameters() const;
  const Mlp& encoder() const { return encoder_; }
  const Mlp& transition_net(std::size_t k) const;
  const Mlp& decoder(std::size_t k) const;

 private:
  LatentGaussian split_gaussian(const Tensor& raw) const;
  void check_level(const char* op, std::size_t k, std::size_t max) const;

  HierarchyConfig config_;
  Mlp encoder_;
  std::vector<Mlp> transitions_;
  std::vector<Mlp> decoders_;
};

}  // namespace mflal
