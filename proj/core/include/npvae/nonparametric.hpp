#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "npvae/data.hpp"
#include "npvae/matrix.hpp"
#include "npvae/nn.hpp"
#include "npvae/rng.hpp"
#include "npvae/vae.hpp"

namespace npvae {

/// Squared-exponential kernel over X. Only the lengthscale is stored: the
/// amplitude σ² multiplies every entry of a row and cancels in the row
/// normalization, so it has no effect on W.
struct KernelParams {
  double log_lengthscale = 0.0;

  double lengthscale() const { return std::exp(log_lengthscale); }
  /// 1 / (2 l²), the factor applied to squared distances.
  double inverse_two_l2() const { return 0.5 * std::exp(-2.0 * log_lengthscale); }

  bool operator==(const KernelParams&) const = default;
};

/// Stored (x, E[z]) anchors that map X locations to Z after training.
struct ReferenceSet {
  Matrix x_ref;  // m×x_dim
  Matrix z_ref;  // m×z_dim, posterior means
  std::vector<int> labels;

  std::size_t size() const { return x_ref.rows(); }
  bool operator==(const ReferenceSet&) const = default;
};

/// Deterministic map Y → X through the back-constraint MLP.
Matrix encode_x(const MlpParams& x_encoder, const Matrix& y, const DropoutPlan& dropout = {});

/// Leave-one-out weights: W = masked row softmax of -‖x_i - x_j‖²/(2l²).
/// Zero diagonal, non-negative, rows sum to one. Needs n >= 2.
Matrix kernel_weights(const Matrix& x, const KernelParams& kernel);

/// z̃ = W·mu. Row i ignores mu row i because W has a zero diagonal.
Matrix predict_ztilde(const Matrix& weights, const Matrix& mu);

/// Mean over rows of ‖mu_i - z̃_i‖².
double moment_penalty(const Matrix& mu, const Matrix& ztilde);

/// Intermediate values of the penalty, kept for the backward pass.
struct PenaltyForward {
  Matrix sqdist;
  Matrix weights;
  Matrix ztilde;
  double penalty = 0.0;
};

struct PenaltyGrads {
  Matrix mu;  // through both sides of the residual
  Matrix x;
  double log_lengthscale = 0.0;
};

PenaltyForward penalty_forward(const Matrix& x, const KernelParams& kernel, const Matrix& mu);
PenaltyGrads penalty_backward(const PenaltyForward& forward, const Matrix& x,
                              const KernelParams& kernel, const Matrix& mu);

struct NpVaeLossBreakdown {
  double neg_reconstruction = 0.0;
  double kl = 0.0;
  double penalty = 0.0;
  double total = 0.0;  // neg_reconstruction + kl + lambda·penalty
};

struct NpVaeGrads {
  MlpGrads z_encoder;
  MlpGrads x_encoder;
  MlpGrads decoder;
  double log_lengthscale = 0.0;
};

struct NpVaeLossResult {
  NpVaeLossBreakdown breakdown;
  NpVaeGrads grads;
};

struct NpVaeDropout {
  DropoutPlan z_encoder;
  DropoutPlan x_encoder;
  DropoutPlan decoder;
};

/// -L_g plus lambda times the moment penalty, with W built from this batch
/// alone. With lambda == 0 the Z-encoder and decoder gradients are exactly
/// those of vae_loss and the X-side gradients are zero.
NpVaeLossResult npvae_loss(const MlpParams& z_encoder, const MlpParams& x_encoder,
                           const MlpParams& decoder, const KernelParams& kernel, const Matrix& y,
                           Rng& eps_rng, const NpVaeDropout& dropout, double lambda);

/// Encodes the first m points of a seeded shuffle of `data` with dropout
/// off. m is clamped to the dataset size with a warning on stderr.
ReferenceSet build_reference_set(const MlpParams& z_encoder, const MlpParams& x_encoder,
                                 const DataSplit& data, std::size_t m, std::uint64_t seed);

/// Maps X queries to Z through kernel weights over every anchor, then
/// decodes with dropout off.
Matrix ancestral_latents(const ReferenceSet& ref, const KernelParams& kernel,
                         const Matrix& x_query);
Matrix ancestral_sample(const ReferenceSet& ref, const MlpParams& decoder,
                        const KernelParams& kernel, const Matrix& x_query);

}  // namespace npvae
