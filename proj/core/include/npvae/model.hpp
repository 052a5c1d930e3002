#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "npvae/matrix.hpp"
#include "npvae/nn.hpp"
#include "npvae/nonparametric.hpp"

namespace npvae {

enum class ModelKind { vae, npvae };

std::string_view to_string(ModelKind kind);
ModelKind parse_model_kind(std::string_view text);

enum class LatentSpace { x, z };

LatentSpace parse_latent_space(std::string_view text);

/// Independent random streams carved out of the master seed. Each network's
/// initialisation and dropout draw from their own stream, so adding or
/// removing the X encoder leaves every other stream untouched.
enum class Stream : std::uint64_t {
  init_z_encoder = 1,
  init_x_encoder = 2,
  init_decoder = 3,
  dropout_z_encoder = 4,
  dropout_x_encoder = 5,
  dropout_decoder = 6,
  eps = 7,
  shuffle = 8,
  reference = 9,
  eval_eps = 10,
};

std::uint64_t stream_seed(std::uint64_t master, Stream stream, std::uint64_t epoch = 0);

struct RunConfig {
  ModelKind model = ModelKind::npvae;
  std::size_t obs_dim = 784;
  std::size_t z_dim = 2;
  std::size_t x_dim = 2;
  std::vector<std::size_t> hidden{500, 500};
  std::size_t batch_size = 128;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  double keep_prob = 0.9;
  double lambda = 1.0;
  bool binarize = false;
  std::size_t reference_size = 1024;
  /// Number of leading training images used; 0 means the whole split.
  std::size_t subset = 0;

  /// Throws ValidationError for unusable settings.
  void validate() const;

  bool operator==(const RunConfig&) const = default;
};

struct Model {
  ModelKind kind = ModelKind::npvae;
  MlpParams z_encoder;
  MlpParams decoder;
  std::optional<MlpParams> x_encoder;
  std::optional<KernelParams> kernel;
  std::optional<ReferenceSet> reference;

  std::size_t z_dim() const { return z_encoder.output_dim() / 2; }
  std::size_t obs_dim() const { return z_encoder.input_dim(); }
  std::size_t x_dim() const { return x_encoder ? x_encoder->output_dim() : 0; }

  bool operator==(const Model&) const = default;
};

/// Glorot-initialised networks, each from its own stream; log lengthscale 0.
Model init_model(const RunConfig& config);

/// Decodes `steps` evenly spaced points between the latents of y_a and y_b.
/// space z interpolates encoder means and decodes directly; space x
/// interpolates X locations and maps each through ancestral sampling.
Matrix interpolate(const Model& model, const Matrix& y_a, const Matrix& y_b, std::size_t steps,
                   LatentSpace space);

}  // namespace npvae
