#pragma once

#include <optional>
#include <vector>

#include "mflal/model.hpp"
#include "mflal/sequence.hpp"

namespace mflal {

struct GenObjectiveConfig {
  double beta = 1.0;            // exploration weight while querying
  double inference_beta = 0.0;  // exploration weight for the final designs
  double lambda_lik = 1.0;
  double lambda_div = 1.0;
  std::size_t batch = 8;  // M
  std::size_t opt_steps = 100;
  double opt_lr = 0.1;
  /// Sampling temperature when decoding optimized points; 0 is argmax.
  double decode_temperature = 1.0;
};

/// Equally weighted diagonal Gaussians in one latent space; M x d_z each.
struct MixtureParams {
  Tensor mu;
  Tensor sigma;
};

/// UCB with an L2 pull toward the origin: m(z) + beta * var(z) - ||z||^2,
/// one value per row of z. Higher is better.
Tensor acquisition(const LatentSurrogate& surrogate, const Tensor& z, double beta);

/// log sum_j N(z; mu_j, diag(sigma_j^2)) for each row of z, in log space.
Tensor mixture_log_density(const Tensor& z, const MixtureParams& mixture);

/// (1/M^2) sum_i sum_j cos(z_i, z_j), self-pairs included. Pairs involving
/// a zero vector count as 0 and carry no gradient.
Tensor diversity_penalty(const Tensor& z);

/// Scalar objective maximized by the latent optimizer.
Tensor generation_objective(const LatentSurrogate& surrogate, const Tensor& z,
                            const GenObjectiveConfig& config, const MixtureParams* mixture);

struct LatentBatch {
  Tensor points;                     // rows that survived
  std::vector<double> acquisition;   // per surviving row
  std::size_t dropped = 0;           // rows still non-finite after one re-init
};

/// Starts M points at N(0, I) and runs Adam on the generation objective.
LatentBatch optimize_latent_batch(const LatentSurrogate& surrogate, std::size_t latent_dim,
                                  const GenObjectiveConfig& config, const MixtureParams* mixture,
                                  Rng& rng);

struct GenerationResult {
  std::vector<Sequence> sequences;
  LatentBatch latents;                // the fidelity-k points behind `sequences`
  std::size_t optimize_calls = 0;
};

/// Recursive generation: optimize at fidelity 1, push the optimized points
/// through each transition to build the next level's mixture, optimize
/// again, and decode the fidelity-k points. Returns all M decodes below
/// the top fidelity and `top_count` of them at the top.
GenerationResult generate_high_scoring(const MfModel& model, std::size_t k,
                                       const GenObjectiveConfig& config, Rng& rng,
                                       std::size_t top_count = 1);

}  // namespace mflal
