#include "npvae/model.hpp"

#include "npvae/errors.hpp"
#include "npvae/vae.hpp"

namespace npvae {

std::string_view to_string(ModelKind kind) { return kind == ModelKind::vae ? "vae" : "npvae"; }

ModelKind parse_model_kind(std::string_view text) {
  if (text == "vae") return ModelKind::vae;
  if (text == "npvae") return ModelKind::npvae;
  throw ValidationError("unknown model kind '" + std::string(text) + "' (expected vae|npvae)");
}

LatentSpace parse_latent_space(std::string_view text) {
  if (text == "x") return LatentSpace::x;
  if (text == "z") return LatentSpace::z;
  throw ValidationError("unknown latent space '" + std::string(text) + "' (expected x|z)");
}

std::uint64_t stream_seed(std::uint64_t master, Stream stream, std::uint64_t epoch) {
  return derive_seed(master, static_cast<std::uint64_t>(stream), epoch);
}

void RunConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ValidationError("config: " + msg); };
  if (obs_dim == 0 || z_dim == 0) fail("obs_dim and z_dim must be positive");
  if (model == ModelKind::npvae && x_dim == 0) fail("x_dim must be positive");
  if (batch_size == 0) fail("batch_size must be positive");
  if (model == ModelKind::npvae && batch_size < 2) {
    fail("npvae needs batch_size >= 2 for leave-one-out kernel weights, got " +
         std::to_string(batch_size));
  }
  if (!(lr > 0.0)) fail("lr must be positive");
  if (!(keep_prob > 0.0 && keep_prob <= 1.0)) fail("keep_prob must lie in (0, 1]");
  if (!(lambda >= 0.0)) fail("lambda must be non-negative");
  for (auto h : hidden) {
    if (h == 0) fail("hidden layer widths must be positive");
  }
  if (model == ModelKind::npvae && reference_size == 0) fail("reference_size must be positive");
}

namespace {

std::vector<std::size_t> dims(std::size_t in, const std::vector<std::size_t>& hidden,
                              std::size_t out) {
  std::vector<std::size_t> d{in};
  d.insert(d.end(), hidden.begin(), hidden.end());
  d.push_back(out);
  return d;
}

}  // namespace

Model init_model(const RunConfig& config) {
  config.validate();
  Model model;
  model.kind = config.model;
  {
    Rng rng(stream_seed(config.seed, Stream::init_z_encoder));
    model.z_encoder = glorot_init(rng, dims(config.obs_dim, config.hidden, 2 * config.z_dim),
                                  Activation::identity);
  }
  {
    Rng rng(stream_seed(config.seed, Stream::init_decoder));
    model.decoder = glorot_init(rng, dims(config.z_dim, config.hidden, config.obs_dim),
                                Activation::sigmoid);
  }
  if (config.model == ModelKind::npvae) {
    Rng rng(stream_seed(config.seed, Stream::init_x_encoder));
    model.x_encoder = glorot_init(rng, dims(config.obs_dim, config.hidden, config.x_dim),
                                  Activation::identity);
    model.kernel = KernelParams{};
  }
  return model;
}

Matrix interpolate(const Model& model, const Matrix& y_a, const Matrix& y_b, std::size_t steps,
                   LatentSpace space) {
  if (steps < 2) throw ValidationError("interpolate: need at least 2 steps");
  if (y_a.rows() != 1 || y_b.rows() != 1) {
    throw DimensionError("interpolate: endpoints must be single rows, got " + shape_string(y_a) +
                         " and " + shape_string(y_b));
  }
  Matrix a;
  Matrix b;
  if (space == LatentSpace::z) {
    a = encode(model.z_encoder, y_a, DropoutPlan::off()).mu;
    b = encode(model.z_encoder, y_b, DropoutPlan::off()).mu;
  } else {
    if (model.kind != ModelKind::npvae || !model.x_encoder || !model.kernel) {
      throw ValidationError("interpolate: space x needs an npvae model");
    }
    if (!model.reference) throw ValidationError("interpolate: model has no reference set");
    a = encode_x(*model.x_encoder, y_a);
    b = encode_x(*model.x_encoder, y_b);
  }
  Matrix path(steps, a.cols());
  for (std::size_t s = 0; s < steps; ++s) {
    const double alpha = static_cast<double>(s) / static_cast<double>(steps - 1);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      path(s, k) = (1.0 - alpha) * a(0, k) + alpha * b(0, k);
    }
  }
  if (space == LatentSpace::z) return decode(model.decoder, path);
  return ancestral_sample(*model.reference, model.decoder, *model.kernel, path);
}

}  // namespace npvae
