#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "npvae/matrix.hpp"
#include "npvae/rng.hpp"

namespace npvae {

enum class Activation { identity, sigmoid };

struct DenseLayer {
  Matrix weight;  // in×out
  Matrix bias;    // 1×out

  bool operator==(const DenseLayer&) const = default;
};

/// Hidden layers use tanh; the last layer uses `output_activation`.
struct MlpParams {
  std::vector<DenseLayer> layers;
  Activation output_activation = Activation::identity;

  std::size_t input_dim() const { return layers.front().weight.rows(); }
  std::size_t output_dim() const { return layers.back().weight.cols(); }
  /// Throws DimensionError unless consecutive layers chain.
  void validate() const;

  bool operator==(const MlpParams&) const = default;
};

/// Same layout as MlpParams, holding gradients.
struct MlpGrads {
  std::vector<DenseLayer> layers;
};

MlpGrads zeros_like(const MlpParams& params);

/// Inverted dropout applied after each hidden activation. Kept units are
/// scaled by 1/keep_prob so inference runs the raw network. Masks are drawn
/// from `rng` unless `frozen_masks` is non-empty.
struct DropoutPlan {
  double keep_prob = 1.0;
  bool enabled = false;
  Rng* rng = nullptr;
  std::vector<Matrix> frozen_masks;

  static DropoutPlan off() { return {}; }
  static DropoutPlan train(double keep_prob, Rng& rng);

  bool active() const { return enabled && keep_prob < 1.0; }
};

struct ForwardCache {
  std::vector<Matrix> layer_inputs;    // what each affine layer consumed
  std::vector<Matrix> hidden_outputs;  // tanh outputs before the mask
  std::vector<Matrix> masks;           // one per hidden layer when dropout ran
  Matrix output;                       // after the output activation
  std::vector<std::size_t> dims;       // layer widths, checked by backward
};

struct MlpForward {
  Matrix output;
  ForwardCache cache;
};

struct MlpBackward {
  MlpGrads params;
  Matrix input;  // empty unless requested
};

MlpParams glorot_init(Rng& rng, std::span<const std::size_t> layer_dims,
                      Activation output_activation);

MlpForward mlp_forward(const MlpParams& params, const Matrix& input, const DropoutPlan& dropout);

/// Reverse-mode gradients of the forward map. `grad_output` is taken with
/// respect to the post-activation output.
MlpBackward mlp_backward(const MlpParams& params, const ForwardCache& cache,
                         const Matrix& grad_output, bool want_input_grad = true);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Moment estimates for an ordered list of parameter blocks.
struct AdamState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  std::uint64_t t = 0;

  bool operator==(const AdamState&) const = default;
};

AdamState adam_init(const MlpParams& params);
AdamState adam_init(std::span<const Matrix> blocks);

/// One bias-corrected Adam descent step over `params[i]` using `grads[i]`.
/// Throws NonFiniteError naming `names[i]` if a gradient is not finite;
/// nothing is modified in that case.
void adam_step(AdamState& state, const AdamConfig& config, std::span<Matrix* const> params,
               std::span<const Matrix* const> grads, std::span<const std::string> names);

void adam_step(AdamState& state, const AdamConfig& config, MlpParams& params,
               const MlpGrads& grads, const std::string& block_name);

/// A named parameter tensor the checker may perturb in place.
struct ParamGroup {
  std::string name;
  Matrix* value = nullptr;
  Matrix analytic;  // gradient claimed by the implementation
};

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  bool passed = false;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double tolerance = 0.0;

  bool passed() const;
};

/// Relative error |a - n| / max(|a|, |n|, floor). The floor keeps
/// near-zero gradients from amplifying finite-difference round-off.
double relative_error(double analytic, double numeric, double floor = 1e-6);

/// Central finite differences with step `h` for every entry of every
/// group. `loss` must be deterministic and read the live parameter values.
GradCheckReport grad_check(const std::function<double()>& loss, std::span<ParamGroup> groups,
                           double tolerance, double h = 1e-5);

/// Named views onto an MLP's blocks ("<prefix>/layer<k>/W" and ".../b").
std::vector<ParamGroup> param_groups(const std::string& prefix, MlpParams& params,
                                     const MlpGrads& grads);

}  // namespace npvae
