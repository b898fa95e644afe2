#pragma once

#include <memory>
#include <vector>

#include "mflal/hierarchy.hpp"
#include "mflal/svgp.hpp"

namespace mflal {

struct ModelConfig {
  HierarchyConfig hierarchy;
  SvgpConfig svgp;  // input_dim is taken from the hierarchy's latent_dim
};

/// Affine map between oracle utilities (negated scores) and the unit-scale
/// targets a surrogate is trained on.
struct Standardizer {
  double mean = 0.0;
  double stddev = 1.0;

  static Standardizer fit(std::span<const double> values);
  double forward(double u) const { return (u - mean) / stddev; }
  double inverse(double s) const { return s * stddev + mean; }
};

/// Surrogate prediction at one latent point, in utility units (negated
/// oracle score: higher is better).
struct SurrogatePosterior {
  double mean = 0.0;
  /// Predictive variance including observation noise.
  double variance = 0.0;
  /// Variance of the latent function only.
  double latent_variance = 0.0;
  /// latent variance as a fraction of the prior kernel variance.
  double standardized_variance = 0.0;
};

/// Moments of a differentiable surrogate over a batch of latent points.
struct SurrogateMoments {
  Tensor mean;      // n
  Tensor variance;  // n
};

/// Anything the latent optimizer can query. Implementations must be
/// differentiable with respect to `z` (n x d_z).
class LatentSurrogate {
 public:
  virtual ~LatentSurrogate() = default;
  virtual SurrogateMoments predict(const Tensor& z) const = 0;
};

/// Frozen fidelity-k GP with outputs mapped back to utility units.
class GpSurrogate final : public LatentSurrogate {
 public:
  GpSurrogate(Svgp gp, Standardizer standardizer)
      : gp_(std::move(gp)), standardizer_(standardizer) {}
  SurrogateMoments predict(const Tensor& z) const override;
  const Svgp& gp() const { return gp_; }

 private:
  Svgp gp_;
  Standardizer standardizer_;
};

/// Latent hierarchy plus one SVGP surrogate per fidelity.
class MfModel {
 public:
  MfModel() = default;
  MfModel(const ModelConfig& config, Rng& rng);

  const ModelConfig& config() const { return config_; }
  std::size_t fidelities() const { return hierarchy_.fidelities(); }

  const LatentHierarchy& hierarchy() const { return hierarchy_; }
  const Svgp& surrogate(std::size_t k) const;
  Svgp& surrogate(std::size_t k);
  const Standardizer& standardizer(std::size_t k) const;
  void set_standardizer(std::size_t k, Standardizer s);

  /// Frozen copy of surrogate k for optimization.
  GpSurrogate frozen_surrogate(std::size_t k) const;

  /// Posterior of surrogate k at a single latent point. Throws
  /// NumericalError naming k when the result is not finite.
  SurrogatePosterior posterior(std::span<const double> z, std::size_t k) const;

  std::vector<Tensor> parameters() const;

 private:
  ModelConfig config_;
  LatentHierarchy hierarchy_;
  std::vector<Svgp> surrogates_;
  std::vector<Standardizer> standardizers_;
};

}  // namespace mflal
