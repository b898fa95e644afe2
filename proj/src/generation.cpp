#include "mflal/generation.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "mflal/adam.hpp"
#include "mflal/errors.hpp"
#include "mflal/ops.hpp"

namespace mflal {

Tensor acquisition(const LatentSurrogate& surrogate, const Tensor& z, double beta) {
  const Tensor zz = z.rank() == 1 ? reshape(z, {1, z.size()}) : z;
  const SurrogateMoments m = surrogate.predict(zz);
  return sub(add(m.mean, scale(m.variance, beta)), sum_last(square(zz)));
}

Tensor mixture_log_density(const Tensor& z, const MixtureParams& mixture) {
  const Tensor zz = z.rank() == 1 ? reshape(z, {1, z.size()}) : z;
  const std::size_t n = zz.rows(), d = zz.cols(), m = mixture.mu.rows();
  if (mixture.mu.cols() != d || mixture.sigma.shape() != mixture.mu.shape()) {
    throw ShapeError("mixture_log_density: point dimension " + std::to_string(d) +
                     " vs mixture " + shape_string(mixture.mu.shape()) + "/" +
                     shape_string(mixture.sigma.shape()));
  }
  const auto mu = mixture.mu.values();
  const auto sigma = mixture.sigma.values();
  for (double s : sigma) {
    if (!(s > 0.0)) throw std::invalid_argument("mixture_log_density: sigma must be positive");
  }
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  std::vector<double> comp(n * m);
  const auto zv = zz.values();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      double lp = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        const double s = sigma[j * d + c];
        const double r = (zv[i * d + c] - mu[j * d + c]) / s;
        lp -= half_log_2pi + std::log(s) + 0.5 * r * r;
      }
      comp[i * m + j] = lp;
    }
  }
  // Component log densities are constants of z except through this node.
  const Tensor mu_c = mixture.mu.detach();
  const Tensor sigma_c = mixture.sigma.detach();
  const Tensor components = Tensor::make_result(
      {n, m}, std::move(comp), {zz}, [n, m, d, mu_c, sigma_c](detail::Node& self) {
        auto& pz = *self.parents[0];
        auto& gz = pz.grad_buffer();
        const auto mu = mu_c.values();
        const auto sigma = sigma_c.values();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < m; ++j) {
            const double g = self.grad[i * m + j];
            for (std::size_t c = 0; c < d; ++c) {
              const double s = sigma[j * d + c];
              gz[i * d + c] -= g * (pz.value[i * d + c] - mu[j * d + c]) / (s * s);
            }
          }
      });
  return log_sum_exp(components);
}

Tensor diversity_penalty(const Tensor& z) {
  const Tensor zz = z.rank() == 1 ? reshape(z, {1, z.size()}) : z;
  const std::size_t m = zz.rows(), d = zz.cols();
  const auto zv = zz.values();
  std::vector<double> norms(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double ss = 0.0;
    for (std::size_t c = 0; c < d; ++c) ss += zv[i * d + c] * zv[i * d + c];
    norms[i] = std::sqrt(ss);
  }
  auto cosine = [&](std::size_t i, std::size_t j) {
    if (norms[i] == 0.0 || norms[j] == 0.0) return 0.0;
    double dot = 0.0;
    for (std::size_t c = 0; c < d; ++c) dot += zv[i * d + c] * zv[j * d + c];
    return dot / (norms[i] * norms[j]);
  };
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) total += cosine(i, j);
  const double inv = 1.0 / static_cast<double>(m * m);
  return Tensor::make_result({1}, {total * inv}, {zz}, [m, d, inv, norms](detail::Node& self) {
    auto& pz = *self.parents[0];
    auto& gz = pz.grad_buffer();
    const auto& v = pz.value;
    const double g = self.grad[0] * inv;
    for (std::size_t i = 0; i < m; ++i) {
      if (norms[i] == 0.0) continue;
      for (std::size_t j = 0; j < m; ++j) {
        if (j == i || norms[j] == 0.0) continue;
        double dot = 0.0;
        for (std::size_t c = 0; c < d; ++c) dot += v[i * d + c] * v[j * d + c];
        const double cs = dot / (norms[i] * norms[j]);
        // s(i,j) and s(j,i) both depend on z_i.
        for (std::size_t c = 0; c < d; ++c) {
          const double dz = v[j * d + c] / (norms[i] * norms[j]) - cs * v[i * d + c] / (norms[i] * norms[i]);
          gz[i * d + c] += 2.0 * g * dz;
        }
      }
    }
  });
}

Tensor generation_objective(const LatentSurrogate& surrogate, const Tensor& z,
                            const GenObjectiveConfig& config, const MixtureParams* mixture) {
  Tensor objective = sum(acquisition(surrogate, z, config.beta));
  if (mixture != nullptr && config.lambda_lik != 0.0) {
    objective = add(objective, scale(sum(mixture_log_density(z, *mixture)), config.lambda_lik));
  }
  if (config.lambda_div != 0.0) {
    objective = sub(objective, scale(diversity_penalty(z), config.lambda_div));
  }
  return objective;
}

namespace {

std::vector<double> gaussian_rows(std::size_t rows, std::size_t d, Rng& rng) {
  std::vector<double> v(rows * d);
  for (double& x : v) x = rng.normal();
  return v;
}

Tensor run_adam(const LatentSurrogate& surrogate, std::vector<double> init, std::size_t rows,
                std::size_t d, const GenObjectiveConfig& config, const MixtureParams* mixture) {
  Tensor z = Tensor::parameter({rows, d}, std::move(init));
  Adam opt({z}, config.opt_lr);
  for (std::size_t step = 0; step < config.opt_steps; ++step) {
    opt.zero_grad();
    const Tensor loss = neg(generation_objective(surrogate, z, config, mixture));
    if (!std::isfinite(loss.item())) break;
    loss.backward();
    opt.step();
  }
  return z.detach();
}

// Per-row objective without the batch-coupled diversity term.
std::vector<double> row_scores(const LatentSurrogate& surrogate, const Tensor& z,
                               const GenObjectiveConfig& config, const MixtureParams* mixture,
                               std::vector<double>* acq_out) {
  const Tensor acq = acquisition(surrogate, z, config.beta);
  std::vector<double> score(acq.values().begin(), acq.values().end());
  if (acq_out) *acq_out = score;
  if (mixture != nullptr && config.lambda_lik != 0.0) {
    const Tensor lp = mixture_log_density(z, *mixture);
    for (std::size_t i = 0; i < score.size(); ++i) score[i] += config.lambda_lik * lp[i];
  }
  for (std::size_t i = 0; i < score.size(); ++i) {
    for (std::size_t c = 0; c < z.cols(); ++c) {
      if (!std::isfinite(z[i * z.cols() + c])) score[i] = std::numeric_limits<double>::quiet_NaN();
    }
  }
  return score;
}

}  // namespace

LatentBatch optimize_latent_batch(const LatentSurrogate& surrogate, std::size_t latent_dim,
                                  const GenObjectiveConfig& config, const MixtureParams* mixture,
                                  Rng& rng) {
  const std::size_t m = config.batch;
  if (m == 0) throw std::invalid_argument("optimize_latent_batch: batch must be positive");
  Tensor z = run_adam(surrogate, gaussian_rows(m, latent_dim, rng), m, latent_dim, config, mixture);
  std::vector<double> acq;
  std::vector<double> score = row_scores(surrogate, z, config, mixture, &acq);

  std::vector<std::size_t> bad;
  for (std::size_t i = 0; i < m; ++i) {
    if (!std::isfinite(score[i])) bad.push_back(i);
  }
  std::vector<double> values(z.values().begin(), z.values().end());
  if (!bad.empty()) {
    GenObjectiveConfig retry = config;
    retry.batch = bad.size();
    const Tensor again = run_adam(surrogate, gaussian_rows(bad.size(), latent_dim, rng), bad.size(),
                                  latent_dim, retry, mixture);
    std::vector<double> acq2;
    const std::vector<double> score2 = row_scores(surrogate, again, retry, mixture, &acq2);
    for (std::size_t b = 0; b < bad.size(); ++b) {
      std::copy_n(again.values().begin() + static_cast<std::ptrdiff_t>(b * latent_dim), latent_dim,
                  values.begin() + static_cast<std::ptrdiff_t>(bad[b] * latent_dim));
      score[bad[b]] = score2[b];
      acq[bad[b]] = acq2[b];
    }
  }

  LatentBatch out;
  std::vector<double> kept;
  for (std::size_t i = 0; i < m; ++i) {
    if (!std::isfinite(score[i]) || !std::isfinite(acq[i])) {
      ++out.dropped;
      continue;
    }
    kept.insert(kept.end(), values.begin() + static_cast<std::ptrdiff_t>(i * latent_dim),
                values.begin() + static_cast<std::ptrdiff_t>((i + 1) * latent_dim));
    out.acquisition.push_back(acq[i]);
  }
  if (out.acquisition.empty()) {
    throw NumericalError("optimize_latent_batch: every point stayed non-finite after re-initialization");
  }
  out.points = Tensor::from({out.acquisition.size(), latent_dim}, std::move(kept));
  return out;
}

namespace {

LatentBatch top_latent_points(const MfModel& model, std::size_t k, const GenObjectiveConfig& config,
                              Rng& rng, std::size_t& calls) {
  const GpSurrogate surrogate = model.frozen_surrogate(k);
  const std::size_t d = model.hierarchy().latent_dim();
  if (k == 1) {
    ++calls;
    return optimize_latent_batch(surrogate, d, config, nullptr, rng);
  }
  const LatentBatch lower = top_latent_points(model, k - 1, config, rng, calls);
  const LatentGaussian g = model.hierarchy().transition(lower.points, k - 1);
  const MixtureParams mixture{g.mu.detach(), g.sigma.detach()};
  ++calls;
  return optimize_latent_batch(surrogate, d, config, &mixture, rng);
}

}  // namespace

GenerationResult generate_high_scoring(const MfModel& model, std::size_t k,
                                       const GenObjectiveConfig& config, Rng& rng,
                                       std::size_t top_count) {
  if (k < 1 || k > model.fidelities()) {
    throw std::out_of_range("generate_high_scoring: fidelity " + std::to_string(k));
  }
  GenerationResult result;
  result.latents = top_latent_points(model, k, config, rng, result.optimize_calls);
  const auto& hcfg = model.hierarchy().config();
  const Tensor logits = model.hierarchy().decode_logits(result.latents.points, k);
  const std::size_t width = hcfg.seq_len * hcfg.alphabet_size;
  std::size_t count = result.latents.acquisition.size();
  if (k == model.fidelities()) count = std::min(count, top_count);
  for (std::size_t i = 0; i < count; ++i) {
    const Tensor row = Tensor::from({width}, {logits.values().begin() + static_cast<std::ptrdiff_t>(i * width),
                                              logits.values().begin() + static_cast<std::ptrdiff_t>((i + 1) * width)});
    result.sequences.push_back(decode_sample(row, hcfg.seq_len, config.decode_temperature, rng));
  }
  return result;
}

}  // namespace mflal
