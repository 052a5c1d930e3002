#include "npvae/nn.hpp"

#include <algorithm>
#include <cmath>

#include "npvae/errors.hpp"

namespace npvae {

void MlpParams::validate() const {
  if (layers.empty()) throw DimensionError("MlpParams: no layers");
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const auto& layer = layers[k];
    if (layer.bias.rows() != 1 || layer.bias.cols() != layer.weight.cols()) {
      throw DimensionError("MlpParams: layer " + std::to_string(k) + " bias " +
                           shape_string(layer.bias) + " does not match weight " +
                           shape_string(layer.weight));
    }
    if (k > 0 && layers[k - 1].weight.cols() != layer.weight.rows()) {
      throw DimensionError("MlpParams: layer " + std::to_string(k - 1) + " outputs " +
                           std::to_string(layers[k - 1].weight.cols()) + " but layer " +
                           std::to_string(k) + " expects " + std::to_string(layer.weight.rows()));
    }
  }
}

MlpGrads zeros_like(const MlpParams& params) {
  MlpGrads g;
  for (const auto& layer : params.layers) {
    g.layers.push_back({Matrix(layer.weight.rows(), layer.weight.cols()),
                        Matrix(layer.bias.rows(), layer.bias.cols())});
  }
  return g;
}

DropoutPlan DropoutPlan::train(double keep_prob, Rng& rng) {
  if (!(keep_prob > 0.0 && keep_prob <= 1.0)) {
    throw ValidationError("dropout keep probability must lie in (0, 1], got " +
                          std::to_string(keep_prob));
  }
  DropoutPlan plan;
  plan.keep_prob = keep_prob;
  plan.enabled = true;
  plan.rng = &rng;
  return plan;
}

MlpParams glorot_init(Rng& rng, std::span<const std::size_t> layer_dims,
                      Activation output_activation) {
  if (layer_dims.size() < 2) throw DimensionError("glorot_init: need at least 2 layer dims");
  MlpParams params;
  params.output_activation = output_activation;
  for (std::size_t k = 0; k + 1 < layer_dims.size(); ++k) {
    const std::size_t fan_in = layer_dims[k];
    const std::size_t fan_out = layer_dims[k + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    params.layers.push_back({uniform_matrix(rng, fan_in, fan_out, -bound, bound),
                             Matrix(1, fan_out)});
  }
  return params;
}

MlpForward mlp_forward(const MlpParams& params, const Matrix& input, const DropoutPlan& dropout) {
  if (params.layers.empty()) throw DimensionError("mlp_forward: no layers");
  if (input.cols() != params.input_dim()) {
    throw DimensionError("mlp_forward: input " + shape_string(input) + " but first layer is " +
                         shape_string(params.layers.front().weight));
  }
  const std::size_t hidden_count = params.layers.size() - 1;
  const bool use_frozen = dropout.enabled && !dropout.frozen_masks.empty();
  if (use_frozen && dropout.frozen_masks.size() != hidden_count) {
    throw DimensionError("mlp_forward: " + std::to_string(dropout.frozen_masks.size()) +
                         " frozen masks for " + std::to_string(hidden_count) + " hidden layers");
  }
  const bool draw_masks = !use_frozen && dropout.active();
  if (draw_masks && dropout.rng == nullptr) {
    throw ValidationError("mlp_forward: dropout enabled without a random source");
  }

  MlpForward result;
  auto& cache = result.cache;
  cache.dims.push_back(params.input_dim());
  Matrix h = input;
  for (std::size_t k = 0; k < params.layers.size(); ++k) {
    const auto& layer = params.layers[k];
    cache.dims.push_back(layer.weight.cols());
    Matrix a = add_row_broadcast(matmul(h, layer.weight), layer.bias);
    cache.layer_inputs.push_back(std::move(h));
    if (k + 1 < params.layers.size()) {
      Matrix act = tanh(a);
      cache.hidden_outputs.push_back(act);
      if (use_frozen) {
        const Matrix& mask = dropout.frozen_masks[k];
        act = hadamard(act, mask);
        cache.masks.push_back(mask);
      } else if (draw_masks) {
        Matrix mask(act.rows(), act.cols());
        const double kept = 1.0 / dropout.keep_prob;
        for (double& m : mask.values()) m = dropout.rng->uniform() < dropout.keep_prob ? kept : 0.0;
        act = hadamard(act, mask);
        cache.masks.push_back(std::move(mask));
      }
      h = std::move(act);
    } else {
      h = params.output_activation == Activation::sigmoid ? sigmoid(a) : std::move(a);
    }
  }
  cache.output = h;
  result.output = std::move(h);
  return result;
}

MlpBackward mlp_backward(const MlpParams& params, const ForwardCache& cache,
                         const Matrix& grad_output, bool want_input_grad) {
  const std::size_t layer_count = params.layers.size();
  bool matches = cache.layer_inputs.size() == layer_count && cache.dims.size() == layer_count + 1 &&
                 cache.hidden_outputs.size() + 1 == layer_count &&
                 (cache.masks.empty() || cache.masks.size() + 1 == layer_count);
  for (std::size_t k = 0; matches && k < layer_count; ++k) {
    matches = cache.dims[k] == params.layers[k].weight.rows() &&
              cache.dims[k + 1] == params.layers[k].weight.cols();
  }
  if (!matches) throw DimensionError("mlp_backward: cache does not belong to these parameters");
  if (grad_output.rows() != cache.output.rows() || grad_output.cols() != cache.output.cols()) {
    throw DimensionError("mlp_backward: grad_output " + shape_string(grad_output) +
                         " vs output " + shape_string(cache.output));
  }

  MlpBackward result;
  result.params.layers.resize(layer_count);

  Matrix grad_a = grad_output;
  if (params.output_activation == Activation::sigmoid) {
    auto g = grad_a.values();
    auto s = cache.output.values();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= s[i] * (1.0 - s[i]);
  }

  for (std::size_t k = layer_count; k-- > 0;) {
    const auto& layer = params.layers[k];
    auto& grads = result.params.layers[k];
    grads.weight = matmul_at(cache.layer_inputs[k], grad_a);
    grads.bias = col_sums(grad_a);
    if (k == 0 && !want_input_grad) break;
    Matrix grad_h = matmul_bt(grad_a, layer.weight);
    if (k == 0) {
      result.input = std::move(grad_h);
      break;
    }
    if (!cache.masks.empty()) grad_h = hadamard(grad_h, cache.masks[k - 1]);
    const auto& t = cache.hidden_outputs[k - 1];
    auto g = grad_h.values();
    auto tv = t.values();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= 1.0 - tv[i] * tv[i];
    grad_a = std::move(grad_h);
  }
  return result;
}

AdamState adam_init(const MlpParams& params) {
  std::vector<Matrix> blocks;
  for (const auto& layer : params.layers) {
    blocks.push_back(layer.weight);
    blocks.push_back(layer.bias);
  }
  return adam_init(blocks);
}

AdamState adam_init(std::span<const Matrix> blocks) {
  AdamState state;
  for (const auto& b : blocks) {
    state.m.emplace_back(b.rows(), b.cols());
    state.v.emplace_back(b.rows(), b.cols());
  }
  return state;
}

void adam_step(AdamState& state, const AdamConfig& config, std::span<Matrix* const> params,
               std::span<const Matrix* const> grads, std::span<const std::string> names) {
  if (params.size() != grads.size() || params.size() != state.m.size() ||
      names.size() != params.size()) {
    throw DimensionError("adam_step: " + std::to_string(params.size()) + " parameter blocks, " +
                         std::to_string(grads.size()) + " gradients, " +
                         std::to_string(state.m.size()) + " moment slots");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Matrix& g = *grads[i];
    if (g.rows() != params[i]->rows() || g.cols() != params[i]->cols() ||
        state.m[i].rows() != g.rows() || state.m[i].cols() != g.cols()) {
      throw DimensionError("adam_step: shape mismatch in " + names[i] + ": param " +
                           shape_string(*params[i]) + ", grad " + shape_string(g));
    }
    if (!all_finite(g)) throw NonFiniteError("adam_step: non-finite gradient in " + names[i]);
  }

  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i]->values();
    auto g = grads[i]->values();
    auto m = state.m[i].values();
    auto v = state.v[i].values();
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * g[j];
      v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * g[j] * g[j];
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      p[j] -= config.lr * m_hat / (std::sqrt(v_hat) + config.eps);
    }
  }
}

void adam_step(AdamState& state, const AdamConfig& config, MlpParams& params,
               const MlpGrads& grads, const std::string& block_name) {
  if (grads.layers.size() != params.layers.size()) {
    throw DimensionError("adam_step: " + block_name + " has " +
                         std::to_string(params.layers.size()) + " layers but " +
                         std::to_string(grads.layers.size()) + " gradient layers");
  }
  std::vector<Matrix*> p;
  std::vector<const Matrix*> g;
  std::vector<std::string> names;
  for (std::size_t k = 0; k < params.layers.size(); ++k) {
    p.push_back(&params.layers[k].weight);
    g.push_back(&grads.layers[k].weight);
    names.push_back(block_name + "/layer" + std::to_string(k) + "/W");
    p.push_back(&params.layers[k].bias);
    g.push_back(&grads.layers[k].bias);
    names.push_back(block_name + "/layer" + std::to_string(k) + "/b");
  }
  adam_step(state, config, p, g, names);
}

bool GradCheckReport::passed() const {
  return std::all_of(entries.begin(), entries.end(), [](const auto& e) { return e.passed; });
}

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport grad_check(const std::function<double()>& loss, std::span<ParamGroup> groups,
                           double tolerance, double h) {
  GradCheckReport report;
  report.tolerance = tolerance;
  for (auto& group : groups) {
    if (group.value == nullptr || group.analytic.rows() != group.value->rows() ||
        group.analytic.cols() != group.value->cols()) {
      throw DimensionError("grad_check: analytic gradient shape does not match " + group.name);
    }
    GradCheckEntry entry;
    entry.name = group.name;
    auto values = group.value->values();
    auto analytic = group.analytic.values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double original = values[i];
      values[i] = original + h;
      const double plus = loss();
      values[i] = original - h;
      const double minus = loss();
      values[i] = original;
      const double numeric = (plus - minus) / (2.0 * h);
      const double err = relative_error(analytic[i], numeric);
      if (i == 0 || err > entry.max_rel_error) {
        entry.max_rel_error = err;
        entry.worst_index = i;
        entry.analytic = analytic[i];
        entry.numeric = numeric;
      }
    }
    entry.passed = entry.max_rel_error < tolerance;
    report.entries.push_back(std::move(entry));
  }
  return report;
}

std::vector<ParamGroup> param_groups(const std::string& prefix, MlpParams& params,
                                     const MlpGrads& grads) {
  std::vector<ParamGroup> groups;
  for (std::size_t k = 0; k < params.layers.size(); ++k) {
    const std::string base = prefix + "/layer" + std::to_string(k);
    groups.push_back({base + "/W", &params.layers[k].weight, grads.layers.at(k).weight});
    groups.push_back({base + "/b", &params.layers[k].bias, grads.layers.at(k).bias});
  }
  return groups;
}

}  // namespace npvae
