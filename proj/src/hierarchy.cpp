#include "mflal/hierarchy.hpp"

#include <stdexcept>

#include "mflal/errors.hpp"
#include "mflal/ops.hpp"

namespace mflal {

Tensor reparameterize(const LatentGaussian& g, Rng& rng) {
  std::vector<double> eps(g.mu.size());
  for (double& e : eps) e = rng.normal();
  return reparameterize(g, Tensor::from(g.mu.shape(), std::move(eps)));
}

Tensor reparameterize(const LatentGaussian& g, const Tensor& eps) {
  return add(g.mu, mul(g.sigma, eps));
}

Tensor kl_to_standard_normal(const LatentGaussian& g) {
  // 0.5 * sum(mu^2 + sigma^2 - 1 - 2 log sigma)
  Tensor terms = sub(add(square(g.mu), square(g.sigma)), scale(log(g.sigma), 2.0));
  return scale(add_scalar(sum_last(terms), -static_cast<double>(g.mu.cols())), 0.5);
}

Tensor sequence_cross_entropy(const Tensor& logits, const Tensor& targets, std::size_t alphabet_size) {
  if (logits.shape() != targets.shape()) {
    throw ShapeError("sequence_cross_entropy: logits " + shape_string(logits.shape()) +
                     " vs targets " + shape_string(targets.shape()));
  }
  const std::size_t n = logits.rows();
  const std::size_t positions = logits.size() / alphabet_size;
  Tensor logp = log_softmax(reshape(logits, {positions, alphabet_size}));
  Tensor picked = mul(logp, reshape(targets, {positions, alphabet_size}));
  return neg(sum_last(reshape(picked, {n, logits.size() / n})));
}

LatentHierarchy::LatentHierarchy(const HierarchyConfig& config, Rng& rng) : config_(config) {
  if (config.fidelities < 1) throw std::invalid_argument("LatentHierarchy: need at least one fidelity");
  const std::size_t in = config.seq_len * config.alphabet_size;
  const std::size_t h = config.hidden_width;
  const std::size_t dz = config.latent_dim;
  encoder_ = Mlp({in, h, h, 2 * dz}, rng);
  for (std::size_t k = 1; k < config.fidelities; ++k) transitions_.emplace_back(std::vector<std::size_t>{dz, h, h, 2 * dz}, rng);
  for (std::size_t k = 1; k <= config.fidelities; ++k) decoders_.emplace_back(std::vector<std::size_t>{dz, h, h, in}, rng);
}

LatentGaussian LatentHierarchy::split_gaussian(const Tensor& raw) const {
  const std::size_t dz = config_.latent_dim;
  return {slice_cols(raw, 0, dz), add_scalar(softplus(slice_cols(raw, dz, 2 * dz)), config_.sigma_floor)};
}

void LatentHierarchy::check_level(const char* op, std::size_t k, std::size_t max) const {
  if (k < 1 || k > max) {
    throw std::out_of_range(std::string(op) + ": fidelity " + std::to_string(k) + " outside [1, " +
                            std::to_string(max) + "]");
  }
}

LatentGaussian LatentHierarchy::encode(const Tensor& one_hot) const {
  const Tensor x = one_hot.rank() == 1 ? reshape(one_hot, {1, one_hot.size()}) : one_hot;
  return split_gaussian(encoder_.forward(x));
}

LatentGaussian LatentHierarchy::transition(const Tensor& z, std::size_t k) const {
  check_level("transition", k, config_.fidelities - 1);
  const Tensor zz = z.rank() == 1 ? reshape(z, {1, z.size()}) : z;
  return split_gaussian(transitions_[k - 1].forward(zz));
}

Tensor LatentHierarchy::decode_logits(const Tensor& z, std::size_t k) const {
  check_level("decode_logits", k, config_.fidelities);
  const Tensor zz = z.rank() == 1 ? reshape(z, {1, z.size()}) : z;
  return decoders_[k - 1].forward(zz);
}

ElboTerms LatentHierarchy::elbo_loss(const Tensor& one_hot, std::size_t k, Rng& rng) const {
  check_level("elbo_loss", k, config_.fidelities);
  const Tensor x = one_hot.rank() == 1 ? reshape(one_hot, {1, one_hot.size()}) : one_hot;
  LatentGaussian g = encode(x);
  Tensor kl = kl_to_standard_normal(g);
  Tensor z = reparameterize(g, rng);
  for (std::size_t level = 1; level < k; ++level) {
    g = transition(z, level);
    kl = add(kl, kl_to_standard_normal(g));
    z = reparameterize(g, rng);
  }
  Tensor recon = mean(sequence_cross_entropy(decode_logits(z, k), x, config_.alphabet_size));
  Tensor kl_mean = mean(kl);
  return {add(recon, scale(kl_mean, config_.kl_weight)), recon, kl_mean, z};
}

Tensor LatentHierarchy::latent_mean(const Tensor& one_hot, std::size_t k) const {
  check_level("latent_mean", k, config_.fidelities);
  Tensor z = encode(one_hot).mu;
  for (std::size_t level = 1; level < k; ++level) z = transition(z, level).mu;
  return z;
}

std::vector<Tensor> LatentHierarchy::parameters() const {
  std::vector<Tensor> out = encoder_.parameters();
  for (const auto& t : transitions_) {
    auto p = t.parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  for (const auto& d : decoders_) {
    auto p = d.parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

const Mlp& LatentHierarchy::transition_net(std::size_t k) const {
  check_level("transition_net", k, config_.fidelities - 1);
  return transitions_[k - 1];
}

const Mlp& LatentHierarchy::decoder(std::size_t k) const {
  check_level("decoder", k, config_.fidelities);
  return decoders_[k - 1];
}

}  // namespace mflal
