#include "npvae/nonparametric.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>

#include "npvae/errors.hpp"

namespace npvae {

Matrix encode_x(const MlpParams& x_encoder, const Matrix& y, const DropoutPlan& dropout) {
  return mlp_forward(x_encoder, y, dropout).output;
}

Matrix kernel_weights(const Matrix& x, const KernelParams& kernel) {
  if (x.rows() < 2) {
    throw DegenerateBatchError("kernel_weights: need at least 2 points, got " +
                               std::to_string(x.rows()));
  }
  return row_softmax_masked(scale(pairwise_sqdist(x), -kernel.inverse_two_l2()));
}

Matrix predict_ztilde(const Matrix& weights, const Matrix& mu) {
  if (weights.rows() != weights.cols() || weights.cols() != mu.rows()) {
    throw DimensionError("predict_ztilde: W " + shape_string(weights) + " with mu " +
                         shape_string(mu));
  }
  return matmul(weights, mu);
}

double moment_penalty(const Matrix& mu, const Matrix& ztilde) {
  if (mu.rows() != ztilde.rows() || mu.cols() != ztilde.cols()) {
    throw DimensionError("moment_penalty: mu " + shape_string(mu) + " vs ztilde " +
                         shape_string(ztilde));
  }
  double total = 0.0;
  for (std::size_t i = 0; i < mu.rows(); ++i) {
    auto a = mu.row(i);
    auto b = ztilde.row(i);
    double row = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
      const double d = a[k] - b[k];
      row += d * d;
    }
    total += row;
  }
  return total / static_cast<double>(mu.rows());
}

PenaltyForward penalty_forward(const Matrix& x, const KernelParams& kernel, const Matrix& mu) {
  if (x.rows() != mu.rows()) {
    throw DimensionError("penalty_forward: x " + shape_string(x) + " with mu " + shape_string(mu));
  }
  if (x.rows() < 2) {
    throw DegenerateBatchError("penalty_forward: need at least 2 points, got " +
                               std::to_string(x.rows()));
  }
  PenaltyForward f;
  f.sqdist = pairwise_sqdist(x);
  f.weights = row_softmax_masked(scale(f.sqdist, -kernel.inverse_two_l2()));
  f.ztilde = predict_ztilde(f.weights, mu);
  f.penalty = moment_penalty(mu, f.ztilde);
  return f;
}

PenaltyGrads penalty_backward(const PenaltyForward& forward, const Matrix& x,
                              const KernelParams& kernel, const Matrix& mu) {
  const std::size_t n = mu.rows();
  const auto& w = forward.weights;
  const auto& d2 = forward.sqdist;

  // Residual gradient, then both paths into mu.
  Matrix grad_r = scale(sub(mu, forward.ztilde), 2.0 / static_cast<double>(n));
  PenaltyGrads g;
  g.mu = sub(grad_r, matmul_at(w, grad_r));

  // ∂P/∂W_ij = -<grad_r_i, mu_j>; the diagonal is never used.
  Matrix grad_w = scale(matmul_bt(grad_r, mu), -1.0);

  // Softmax backward restricted to off-diagonal entries.
  Matrix grad_logit(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    double dot = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) dot += w(i, j) * grad_w(i, j);
    }
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) grad_logit(i, j) = w(i, j) * (grad_w(i, j) - dot);
    }
  }

  // logit = -c·D with c = exp(-2s)/2, so ∂logit/∂s = 2c·D.
  const double c = kernel.inverse_two_l2();
  double grad_s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) grad_s += grad_logit(i, j) * d2(i, j);
  }
  g.log_lengthscale = 2.0 * c * grad_s;

  g.x = Matrix(x.rows(), x.cols());
  for (std::size_t i = 0; i < n; ++i) {
    auto gi = g.x.row(i);
    auto xi = x.row(i);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double gd = -c * (grad_logit(i, j) + grad_logit(j, i));
      auto xj = x.row(j);
      for (std::size_t k = 0; k < gi.size(); ++k) gi[k] += 2.0 * gd * (xi[k] - xj[k]);
    }
  }
  return g;
}

NpVaeLossResult npvae_loss(const MlpParams& z_encoder, const MlpParams& x_encoder,
                           const MlpParams& decoder, const KernelParams& kernel, const Matrix& y,
                           Rng& eps_rng, const NpVaeDropout& dropout, double lambda) {
  if (y.rows() < 2) {
    throw DegenerateBatchError("npvae_loss: batch of " + std::to_string(y.rows()) +
                               " is too small for leave-one-out weights");
  }
  auto vae = vae_forward(z_encoder, decoder, y, eps_rng, dropout.z_encoder, dropout.decoder);
  auto x_fwd = mlp_forward(x_encoder, y, dropout.x_encoder);
  const Matrix& mu = vae.posterior.mu;
  auto pen = penalty_forward(x_fwd.output, kernel, mu);

  NpVaeLossResult result;
  auto& b = result.breakdown;
  b.neg_reconstruction = vae.breakdown.neg_reconstruction;
  b.kl = vae.breakdown.kl;
  b.penalty = pen.penalty;
  b.total = b.neg_reconstruction + b.kl + lambda * b.penalty;
  if (!std::isfinite(b.total) || !std::isfinite(b.penalty)) {
    throw NonFiniteError("npvae_loss: non-finite loss on batch of " + std::to_string(y.rows()) +
                         " (neg_reconstruction=" + std::to_string(b.neg_reconstruction) +
                         ", kl=" + std::to_string(b.kl) + ", penalty=" + std::to_string(b.penalty) +
                         ", log_lengthscale=" + std::to_string(kernel.log_lengthscale) + ")");
  }

  if (lambda == 0.0) {
    auto grads = vae_backward(z_encoder, decoder, vae, y);
    result.grads.z_encoder = std::move(grads.z_encoder);
    result.grads.decoder = std::move(grads.decoder);
    result.grads.x_encoder = zeros_like(x_encoder);
    result.grads.log_lengthscale = 0.0;
    return result;
  }

  auto pg = penalty_backward(pen, x_fwd.output, kernel, mu);
  Matrix extra_mu = scale(pg.mu, lambda);
  auto grads = vae_backward(z_encoder, decoder, vae, y, &extra_mu);
  result.grads.z_encoder = std::move(grads.z_encoder);
  result.grads.decoder = std::move(grads.decoder);
  result.grads.x_encoder =
      mlp_backward(x_encoder, x_fwd.cache, scale(pg.x, lambda), false).params;
  result.grads.log_lengthscale = lambda * pg.log_lengthscale;
  return result;
}

ReferenceSet build_reference_set(const MlpParams& z_encoder, const MlpParams& x_encoder,
                                 const DataSplit& data, std::size_t m, std::uint64_t seed) {
  if (data.size() == 0) throw ValidationError("build_reference_set: empty dataset");
  if (m == 0) throw ValidationError("build_reference_set: reference size must be positive");
  if (m > data.size()) {
    std::cerr << "warning: reference size " << m << " exceeds dataset size " << data.size()
              << "; using " << data.size() << "\n";
    m = data.size();
  }
  auto order = seeded_permutation(data.size(), seed);
  order.resize(m);
  Matrix y = gather_rows(data.y, order);
  ReferenceSet ref;
  ref.x_ref = encode_x(x_encoder, y);
  ref.z_ref = encode(z_encoder, y, DropoutPlan::off()).mu;
  ref.labels.reserve(m);
  for (auto idx : order) ref.labels.push_back(data.labels[idx]);
  return ref;
}

Matrix ancestral_latents(const ReferenceSet& ref, const KernelParams& kernel,
                         const Matrix& x_query) {
  if (ref.size() == 0) throw ValidationError("ancestral_sample: empty reference set");
  if (x_query.cols() != ref.x_ref.cols()) {
    throw DimensionError("ancestral_sample: query " + shape_string(x_query) +
                         " against anchors " + shape_string(ref.x_ref));
  }
  const std::size_t m = ref.size();
  const double c = kernel.inverse_two_l2();
  Matrix z(x_query.rows(), ref.z_ref.cols());
  std::vector<double> logits(m);
  for (std::size_t q = 0; q < x_query.rows(); ++q) {
    auto xq = x_query.row(q);
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < m; ++j) {
      auto xr = ref.x_ref.row(j);
      double d2 = 0.0;
      for (std::size_t k = 0; k < xq.size(); ++k) {
        const double d = xq[k] - xr[k];
        d2 += d * d;
      }
      logits[j] = -c * d2;
      best = std::max(best, logits[j]);
    }
    double total = 0.0;
    for (auto& l : logits) {
      l = std::exp(l - best);
      total += l;
    }
    auto zq = z.row(q);
    for (std::size_t j = 0; j < m; ++j) {
      const double wj = logits[j] / total;
      auto zr = ref.z_ref.row(j);
      for (std::size_t k = 0; k < zq.size(); ++k) zq[k] += wj * zr[k];
    }
  }
  return z;
}

Matrix ancestral_sample(const ReferenceSet& ref, const MlpParams& decoder,
                        const KernelParams& kernel, const Matrix& x_query) {
  return decode(decoder, ancestral_latents(ref, kernel, x_query));
}

}  // namespace npvae
