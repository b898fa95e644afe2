#include "mflal/svgp.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "mflal/errors.hpp"
#include "mflal/kernel_ops.hpp"
#include "mflal/ops.hpp"

namespace mflal {
namespace {

constexpr double kNoiseFloor = 1e-6;

Tensor raw_scalar(double positive_value) {
  return Tensor::parameter({1}, {softplus_inverse(positive_value)});
}

}  // namespace

Svgp::Svgp(const SvgpConfig& config, Rng& rng) : config_(config) {
  if (config.inducing < 1) throw std::invalid_argument("Svgp: need at least one inducing point");
  if (config.kernel_layers > 0) {
    std::vector<std::size_t> widths{config.input_dim};
    for (std::size_t l = 1; l < config.kernel_layers; ++l) widths.push_back(config.kernel_hidden);
    widths.push_back(config.embed_dim);
    kernel_net_ = Mlp(widths, rng);
  }
  const std::size_t p = config.inducing;
  const std::size_t de = embed_dim();
  std::vector<double> z(p * de);
  for (double& v : z) v = rng.normal();
  inducing_ = Tensor::parameter({p, de}, std::move(z));
  var_mean_ = Tensor::parameter({p, 1}, std::vector<double>(p, 0.0));
  cov_lower_ = Tensor::parameter({p, p}, std::vector<double>(p * p, 0.0));
  cov_diag_raw_ = Tensor::parameter({p}, std::vector<double>(p, softplus_inverse(1.0)));
  scale_raw_ = raw_scalar(config.init_scale);
  lengthscale_raw_ = raw_scalar(config.init_lengthscale);
  noise_raw_ = raw_scalar(config.init_noise);
  std::vector<double> mask(p * p, 0.0);
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < i; ++j) mask[i * p + j] = 1.0;
  lower_mask_ = Tensor::from({p, p}, std::move(mask));
}

std::size_t Svgp::embed_dim() const {
  return config_.kernel_layers > 0 ? config_.embed_dim : config_.input_dim;
}

Tensor Svgp::embed(const Tensor& z) const {
  const Tensor zz = z.rank() == 1 ? reshape(z, {1, z.size()}) : z;
  return kernel_net_.empty() ? zz : kernel_net_.forward(zz);
}

void Svgp::init_inducing(const Tensor& latents, Rng& rng) {
  const std::size_t n = latents.rows();
  const std::size_t p = config_.inducing;
  const std::size_t de = embed_dim();
  const Tensor emb = embed(latents.detach());
  // Sample without replacement while rows last.
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.uniform_int(i)]);
  auto values = inducing_.mutable_values();
  for (std::size_t j = 0; j < p; ++j) {
    const std::size_t row = j < n ? order[j] : order[rng.uniform_int(n)];
    for (std::size_t c = 0; c < de; ++c) {
      const double jitter = j < n ? 0.0 : 0.05 * rng.normal();
      values[j * de + c] = emb[row * de + c] + jitter;
    }
  }
}

Tensor Svgp::scale_t() const { return softplus(scale_raw_); }
Tensor Svgp::lengthscale_t() const { return softplus(lengthscale_raw_); }
Tensor Svgp::noise_t() const { return add_scalar(softplus(noise_raw_), kNoiseFloor); }

Tensor Svgp::cov_factor() const {
  return add(mul(cov_lower_, lower_mask_), diag_embed(softplus(cov_diag_raw_)));
}

Tensor Svgp::inducing_cholesky() const {
  const Tensor kpp = matern52_matrix(inducing_, inducing_, scale_t(), lengthscale_t());
  auto chol = cholesky_with_jitter(kpp);
  last_jitter_ = chol.jitter;
  return chol.factor;
}

SvgpMoments Svgp::predict(const Tensor& z) const {
  const Tensor e = embed(z);
  const Tensor scale = scale_t();
  const Tensor l = inducing_cholesky();
  const Tensor kpn = matern52_matrix(inducing_, e, scale, lengthscale_t());
  const Tensor a = tri_solve_lower(l, kpn);                       // P x n
  const Tensor mean_col = matmul(transpose(a), var_mean_);        // n x 1
  const Tensor fa = matmul(transpose(cov_factor()), a);           // P x n
  const Tensor explained = sum_last(transpose(square(a)));        // n
  const Tensor added = sum_last(transpose(square(fa)));           // n
  const Tensor variance = add(sub(added, explained), scale);
  return {reshape(mean_col, {e.rows()}), variance};
}

Tensor Svgp::kl_divergence() const {
  const Tensor f = cov_factor();
  const auto p = static_cast<double>(config_.inducing);
  const Tensor trace = sum(square(f));
  const Tensor mahal = sum(square(var_mean_));
  const Tensor logdet = scale(sum(log(softplus(cov_diag_raw_))), 2.0);
  return scale(add_scalar(sub(add(trace, mahal), logdet), -p), 0.5);
}

Tensor Svgp::neg_elbo(const Tensor& z, const Tensor& y, std::size_t n_total) const {
  const SvgpMoments m = predict(z);
  if (y.size() != m.mean.size()) {
    throw ShapeError("neg_elbo: " + std::to_string(y.size()) + " targets for " +
                     std::to_string(m.mean.size()) + " inputs");
  }
  const Tensor noise = noise_t();
  const Tensor yy = reshape(y, {y.size()});
  // E_q[-log N(y | f, noise)] = 0.5 log(2 pi noise) + ((y - mu)^2 + var) / (2 noise)
  const Tensor quad = div(add(square(sub(yy, m.mean)), m.variance), scale(noise, 2.0));
  const Tensor per_point = add(quad, scale(log(scale(noise, 2.0 * std::numbers::pi)), 0.5));
  const double rescale = static_cast<double>(n_total) / static_cast<double>(y.size());
  return add(scale(sum(per_point), rescale), kl_divergence());
}

double Svgp::kernel_scale() const { return softplus_value(scale_raw_.item()); }
double Svgp::lengthscale() const { return softplus_value(lengthscale_raw_.item()); }
double Svgp::noise_variance() const { return softplus_value(noise_raw_.item()) + kNoiseFloor; }

std::vector<Tensor> Svgp::parameters() const {
  std::vector<Tensor> out = kernel_net_.parameters();
  for (const Tensor& t : {inducing_, var_mean_, cov_lower_, cov_diag_raw_, scale_raw_,
                          lengthscale_raw_, noise_raw_}) {
    out.push_back(t);
  }
  return out;
}

Svgp Svgp::detached() const {
  Svgp out = *this;
  out.kernel_net_ = kernel_net_.detached();
  for (Tensor* t : {&out.inducing_, &out.var_mean_, &out.cov_lower_, &out.cov_diag_raw_,
                    &out.scale_raw_, &out.lengthscale_raw_, &out.noise_raw_}) {
    *t = t->detach();
  }
  return out;
}

}  // namespace mflal
