#pragma once

#include <vector>

#include "mflal/mlp.hpp"
#include "mflal/rng.hpp"
#include "mflal/tensor.hpp"

namespace mflal {

struct SvgpConfig {
  std::size_t input_dim = 16;
  std::size_t embed_dim = 8;
  std::size_t kernel_hidden = 32;
  /// Linear layers in the deep-kernel network; 0 uses the raw inputs.
  std::size_t kernel_layers = 4;
  std::size_t inducing = 32;
  double init_scale = 1.0;
  double init_lengthscale = 1.0;
  double init_noise = 0.1;
};

/// Predictive moments of the latent function, one entry per input row.
struct SvgpMoments {
  Tensor mean;      // n
  Tensor variance;  // n, excludes observation noise
};

/// Whitened sparse variational GP with a deep Matern-5/2 kernel.
///
/// The inducing outputs are u = L v with L = chol(K_PP) and
/// q(v) = N(m, F F^T), so the prior over v is N(0, I). Inducing inputs live
/// in the embedding space of the deep kernel.
class Svgp {
 public:
  Svgp() = default;
  Svgp(const SvgpConfig& config, Rng& rng);

  const SvgpConfig& config() const { return config_; }
  std::size_t embed_dim() const;

  /// Places the inducing inputs at the embeddings of a random subset of
  /// `latents` (rows), with replacement and a small jitter when there are
  /// fewer rows than inducing points.
  void init_inducing(const Tensor& latents, Rng& rng);

  Tensor embed(const Tensor& z) const;
  SvgpMoments predict(const Tensor& z) const;

  /// Negative variational ELBO for a minibatch of (z, y) with the
  /// likelihood term rescaled by n_total / batch.
  Tensor neg_elbo(const Tensor& z, const Tensor& y, std::size_t n_total) const;
  /// KL(q(v) || N(0, I)).
  Tensor kl_divergence() const;

  double kernel_scale() const;
  double lengthscale() const;
  double noise_variance() const;
  /// Largest jitter used by the most recent factorization.
  double last_jitter() const { return last_jitter_; }

  std::vector<Tensor> parameters() const;
  /// Copy with every parameter turned into a constant.
  Svgp detached() const;

  const Tensor& inducing_inputs() const { return inducing_; }
  const Tensor& variational_mean() const { return var_mean_; }

 private:
  Tensor scale_t() const;
  Tensor lengthscale_t() const;
  Tensor noise_t() const;
  Tensor cov_factor() const;
  Tensor inducing_cholesky() const;

  SvgpConfig config_;
  Mlp kernel_net_;
  Tensor inducing_;      // P x d_e
  Tensor var_mean_;      // P x 1
  Tensor cov_lower_;     // P x P, strictly-lower part used
  Tensor cov_diag_raw_;  // P, softplus -> diagonal of F
  Tensor scale_raw_;
  Tensor lengthscale_raw_;
  Tensor noise_raw_;
  Tensor lower_mask_;    // constant strictly-lower mask
  mutable double last_jitter_ = 0.0;
};

}  // namespace mflal
