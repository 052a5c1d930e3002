#include "npvae/vae.hpp"

#include <algorithm>
#include <cmath>

#include "npvae/errors.hpp"

namespace npvae {

GaussianPosterior split_posterior(const Matrix& encoder_output) {
  if (encoder_output.cols() % 2 != 0 || encoder_output.cols() == 0) {
    throw DimensionError("split_posterior: encoder output " + shape_string(encoder_output) +
                         " does not have an even, non-zero column count");
  }
  const std::size_t z_dim = encoder_output.cols() / 2;
  return {slice_cols(encoder_output, 0, z_dim), slice_cols(encoder_output, z_dim, 2 * z_dim)};
}

GaussianPosterior encode(const MlpParams& z_encoder, const Matrix& y, const DropoutPlan& dropout) {
  return split_posterior(mlp_forward(z_encoder, y, dropout).output);
}

Matrix reparameterize(const GaussianPosterior& post, const Matrix& eps) {
  if (eps.rows() != post.mu.rows() || eps.cols() != post.mu.cols() ||
      post.logvar.rows() != post.mu.rows() || post.logvar.cols() != post.mu.cols()) {
    throw DimensionError("reparameterize: mu " + shape_string(post.mu) + ", logvar " +
                         shape_string(post.logvar) + ", eps " + shape_string(eps));
  }
  Matrix z(post.mu.rows(), post.mu.cols());
  auto zv = z.values();
  auto mu = post.mu.values();
  auto lv = post.logvar.values();
  auto e = eps.values();
  for (std::size_t i = 0; i < zv.size(); ++i) zv[i] = mu[i] + std::exp(0.5 * lv[i]) * e[i];
  return z;
}

Matrix reparameterize(const GaussianPosterior& post, Rng& rng) {
  return reparameterize(post, standard_normal(rng, post.mu.rows(), post.mu.cols()));
}

Matrix clamp_probabilities(const Matrix& p) {
  return map(p, [](double v) { return std::clamp(v, kProbClamp, 1.0 - kProbClamp); });
}

Matrix decode(const MlpParams& decoder, const Matrix& z, const DropoutPlan& dropout) {
  return clamp_probabilities(mlp_forward(decoder, z, dropout).output);
}

double bernoulli_nll(const Matrix& p, const Matrix& y) {
  if (p.rows() != y.rows() || p.cols() != y.cols()) {
    throw DimensionError("bernoulli_nll: p " + shape_string(p) + " vs y " + shape_string(y));
  }
  double total = 0.0;
  for (std::size_t i = 0; i < p.rows(); ++i) {
    auto pr = p.row(i);
    auto yr = y.row(i);
    double row = 0.0;
    for (std::size_t d = 0; d < pr.size(); ++d) {
      row += yr[d] * std::log(pr[d]) + (1.0 - yr[d]) * std::log(1.0 - pr[d]);
    }
    total -= row;
  }
  return total / static_cast<double>(p.rows());
}

double kl_unit_gaussian(const GaussianPosterior& post) {
  double total = 0.0;
  for (std::size_t i = 0; i < post.mu.rows(); ++i) {
    auto mu = post.mu.row(i);
    auto lv = post.logvar.row(i);
    double row = 0.0;
    for (std::size_t k = 0; k < mu.size(); ++k) {
      row += mu[k] * mu[k] + std::exp(lv[k]) - 1.0 - lv[k];
    }
    total += 0.5 * row;
  }
  return total / static_cast<double>(post.mu.rows());
}

VaeForward vae_forward(const MlpParams& z_encoder, const MlpParams& decoder, const Matrix& y,
                       Rng& eps_rng, const DropoutPlan& encoder_dropout,
                       const DropoutPlan& decoder_dropout) {
  if (y.rows() == 0) throw DimensionError("vae_forward: empty batch");
  VaeForward f;
  auto enc = mlp_forward(z_encoder, y, encoder_dropout);
  f.posterior = split_posterior(enc.output);
  f.encoder_cache = std::move(enc.cache);
  f.eps = standard_normal(eps_rng, f.posterior.mu.rows(), f.posterior.mu.cols());
  f.z = reparameterize(f.posterior, f.eps);
  auto dec = mlp_forward(decoder, f.z, decoder_dropout);
  f.p = clamp_probabilities(dec.output);
  f.decoder_cache = std::move(dec.cache);
  f.breakdown.neg_reconstruction = bernoulli_nll(f.p, y);
  f.breakdown.kl = kl_unit_gaussian(f.posterior);
  f.breakdown.elbo = -(f.breakdown.neg_reconstruction + f.breakdown.kl);
  return f;
}

VaeGrads vae_backward(const MlpParams& z_encoder, const MlpParams& decoder,
                      const VaeForward& forward, const Matrix& y, const Matrix* extra_grad_mu) {
  const double inv_batch = 1.0 / static_cast<double>(y.rows());

  // ∂(mean NLL)/∂p through the clamp (zero slope where it saturates).
  const Matrix& raw = forward.decoder_cache.output;
  Matrix grad_p(raw.rows(), raw.cols());
  {
    auto g = grad_p.values();
    auto p = forward.p.values();
    auto r = raw.values();
    auto t = y.values();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const bool clamped = r[i] < kProbClamp || r[i] > 1.0 - kProbClamp;
      g[i] = clamped ? 0.0 : inv_batch * ((1.0 - t[i]) / (1.0 - p[i]) - t[i] / p[i]);
    }
  }
  auto dec = mlp_backward(decoder, forward.decoder_cache, grad_p, true);
  const Matrix& grad_z = dec.input;

  const auto& mu = forward.posterior.mu;
  const auto& lv = forward.posterior.logvar;
  const std::size_t z_dim = mu.cols();
  Matrix grad_enc(mu.rows(), 2 * z_dim);
  for (std::size_t i = 0; i < mu.rows(); ++i) {
    for (std::size_t k = 0; k < z_dim; ++k) {
      const double sigma = std::exp(0.5 * lv(i, k));
      double g_mu = grad_z(i, k) + inv_batch * mu(i, k);
      if (extra_grad_mu != nullptr) g_mu += (*extra_grad_mu)(i, k);
      const double g_lv = grad_z(i, k) * forward.eps(i, k) * 0.5 * sigma +
                          inv_batch * 0.5 * (std::exp(lv(i, k)) - 1.0);
      grad_enc(i, k) = g_mu;
      grad_enc(i, z_dim + k) = g_lv;
    }
  }
  auto enc = mlp_backward(z_encoder, forward.encoder_cache, grad_enc, false);
  return {std::move(enc.params), std::move(dec.params)};
}

VaeLossResult vae_loss(const MlpParams& z_encoder, const MlpParams& decoder, const Matrix& y,
                       Rng& eps_rng, const DropoutPlan& encoder_dropout,
                       const DropoutPlan& decoder_dropout) {
  auto forward = vae_forward(z_encoder, decoder, y, eps_rng, encoder_dropout, decoder_dropout);
  const auto& b = forward.breakdown;
  if (!std::isfinite(b.neg_reconstruction) || !std::isfinite(b.kl)) {
    throw NonFiniteError("vae_loss: non-finite loss on batch of " + std::to_string(y.rows()) +
                         " (neg_reconstruction=" + std::to_string(b.neg_reconstruction) +
                         ", kl=" + std::to_string(b.kl) + ")");
  }
  return {b, vae_backward(z_encoder, decoder, forward, y)};
}

}  // namespace npvae
