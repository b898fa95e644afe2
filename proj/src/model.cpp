#include "mflal/model.hpp"

#include <cmath>
#include <stdexcept>

#include "mflal/errors.hpp"
#include "mflal/ops.hpp"

namespace mflal {

Standardizer Standardizer::fit(std::span<const double> values) {
  Standardizer s;
  if (values.empty()) return s;
  double total = 0.0;
  for (double v : values) total += v;
  s.mean = total / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  const double sd = values.size() > 1 ? std::sqrt(ss / static_cast<double>(values.size() - 1)) : 0.0;
  s.stddev = sd > 1e-8 ? sd : 1.0;
  return s;
}

SurrogateMoments GpSurrogate::predict(const Tensor& z) const {
  const SvgpMoments m = gp_.predict(z);
  return {add_scalar(scale(m.mean, standardizer_.stddev), standardizer_.mean),
          scale(m.variance, standardizer_.stddev * standardizer_.stddev)};
}

MfModel::MfModel(const ModelConfig& config, Rng& rng) : config_(config) {
  config_.svgp.input_dim = config.hierarchy.latent_dim;
  hierarchy_ = LatentHierarchy(config_.hierarchy, rng);
  for (std::size_t k = 0; k < config_.hierarchy.fidelities; ++k) {
    surrogates_.emplace_back(config_.svgp, rng);
    standardizers_.emplace_back();
  }
}

const Svgp& MfModel::surrogate(std::size_t k) const {
  if (k < 1 || k > surrogates_.size()) throw std::out_of_range("surrogate: fidelity " + std::to_string(k));
  return surrogates_[k - 1];
}

Svgp& MfModel::surrogate(std::size_t k) {
  if (k < 1 || k > surrogates_.size()) throw std::out_of_range("surrogate: fidelity " + std::to_string(k));
  return surrogates_[k - 1];
}

const Standardizer& MfModel::standardizer(std::size_t k) const {
  if (k < 1 || k > standardizers_.size()) throw std::out_of_range("standardizer: fidelity " + std::to_string(k));
  return standardizers_[k - 1];
}

void MfModel::set_standardizer(std::size_t k, Standardizer s) {
  if (k < 1 || k > standardizers_.size()) throw std::out_of_range("standardizer: fidelity " + std::to_string(k));
  standardizers_[k - 1] = s;
}

GpSurrogate MfModel::frozen_surrogate(std::size_t k) const {
  return GpSurrogate(surrogate(k).detached(), standardizer(k));
}

SurrogatePosterior MfModel::posterior(std::span<const double> z, std::size_t k) const {
  const Svgp gp = surrogate(k).detached();
  const SvgpMoments m = gp.predict(Tensor::from({1, z.size()}, {z.begin(), z.end()}));
  const Standardizer& s = standardizer(k);
  SurrogatePosterior out;
  out.mean = s.inverse(m.mean[0]);
  out.latent_variance = std::max(m.variance[0], 0.0) * s.stddev * s.stddev;
  out.variance = out.latent_variance + gp.noise_variance() * s.stddev * s.stddev;
  out.standardized_variance = std::max(m.variance[0], 0.0) / gp.kernel_scale();
  if (!std::isfinite(out.mean) || !std::isfinite(out.variance)) {
    throw NumericalError("posterior: non-finite prediction from surrogate at fidelity " + std::to_string(k));
  }
  return out;
}

std::vector<Tensor> MfModel::parameters() const {
  std::vector<Tensor> out = hierarchy_.parameters();
  for (const Svgp& gp : surrogates_) {
    auto p = gp.parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

}  // namespace mflal
