#pragma once

#include "npvae/matrix.hpp"
#include "npvae/nn.hpp"
#include "npvae/rng.hpp"

namespace npvae {

/// Decoder probabilities are clamped to [kProbClamp, 1 - kProbClamp].
inline constexpr double kProbClamp = 1e-7;

struct GaussianPosterior {
  Matrix mu;      // batch×z_dim
  Matrix logvar;  // batch×z_dim
};

/// Mean per-datapoint terms, in nats.
struct VaeLossBreakdown {
  double neg_reconstruction = 0.0;
  double kl = 0.0;
  double elbo = 0.0;  // -(neg_reconstruction + kl)
};

/// The Z encoder emits 2·z_dim columns: means first, then log-variances.
GaussianPosterior split_posterior(const Matrix& encoder_output);
GaussianPosterior encode(const MlpParams& z_encoder, const Matrix& y, const DropoutPlan& dropout);

Matrix reparameterize(const GaussianPosterior& post, const Matrix& eps);
Matrix reparameterize(const GaussianPosterior& post, Rng& rng);

Matrix clamp_probabilities(const Matrix& p);
Matrix decode(const MlpParams& decoder, const Matrix& z, const DropoutPlan& dropout = {});

/// Mean over rows of -Σ_d [y ln p + (1 - y) ln(1 - p)].
double bernoulli_nll(const Matrix& p, const Matrix& y);

/// Mean over rows of 0.5·Σ_k (mu² + exp(logvar) - 1 - logvar).
double kl_unit_gaussian(const GaussianPosterior& post);

struct VaeGrads {
  MlpGrads z_encoder;
  MlpGrads decoder;
};

/// Everything the backward pass needs from one forward evaluation of L_g.
struct VaeForward {
  GaussianPosterior posterior;
  Matrix eps;
  Matrix z;
  Matrix p;  // clamped decoder output
  ForwardCache encoder_cache;
  ForwardCache decoder_cache;
  VaeLossBreakdown breakdown;
};

/// Draws ε from `eps_rng` after the encoder pass and before the decoder pass.
VaeForward vae_forward(const MlpParams& z_encoder, const MlpParams& decoder, const Matrix& y,
                       Rng& eps_rng, const DropoutPlan& encoder_dropout,
                       const DropoutPlan& decoder_dropout);

/// Gradients of neg_reconstruction + kl. `extra_grad_mu`, when non-null, is
/// added to ∂loss/∂mu before backpropagating through the encoder.
VaeGrads vae_backward(const MlpParams& z_encoder, const MlpParams& decoder,
                      const VaeForward& forward, const Matrix& y,
                      const Matrix* extra_grad_mu = nullptr);

struct VaeLossResult {
  VaeLossBreakdown breakdown;
  VaeGrads grads;
};

/// Single-sample reparameterized estimate of -L_g and its gradients.
/// Throws NonFiniteError if the loss is not finite.
VaeLossResult vae_loss(const MlpParams& z_encoder, const MlpParams& decoder, const Matrix& y,
                       Rng& eps_rng, const DropoutPlan& encoder_dropout = {},
                       const DropoutPlan& decoder_dropout = {});

}  // namespace npvae
