#include "npvae/training.hpp"

#include <string>

#include "npvae/errors.hpp"
#include "npvae/vae.hpp"

namespace npvae {

namespace {

struct MetricSums {
  double recon = 0.0;
  double kl = 0.0;
  double penalty = 0.0;
  double total = 0.0;
  double count = 0.0;

  void add(const NpVaeLossBreakdown& b, std::size_t n) {
    const double w = static_cast<double>(n);
    recon += w * b.neg_reconstruction;
    kl += w * b.kl;
    penalty += w * b.penalty;
    total += w * b.total;
    count += w;
  }

  EpochMetrics mean() const {
    if (count == 0.0) return {};
    return {recon / count, kl / count, penalty / count, total / count};
  }
};

void kernel_step(Checkpoint& ckpt, const AdamConfig& adam, double grad) {
  Matrix value(1, 1, ckpt.model.kernel->log_lengthscale);
  const Matrix g(1, 1, grad);
  Matrix* params[] = {&value};
  const Matrix* grads[] = {&g};
  const std::string names[] = {"kernel/log_lengthscale"};
  adam_step(*ckpt.optimizer.kernel, adam, params, grads, names);
  ckpt.model.kernel->log_lengthscale = value(0, 0);
}

}  // namespace

EpochMetrics train_epoch(Checkpoint& ckpt, const DataSplit& data, const StepObserver& observer,
                         std::optional<std::size_t> max_steps) {
  const auto& cfg = ckpt.config;
  cfg.validate();
  auto& model = ckpt.model;
  const bool np = model.kind == ModelKind::npvae;
  const std::uint64_t epoch = ckpt.epoch;

  BatchIter iter(data.size(), cfg.batch_size, stream_seed(cfg.seed, Stream::shuffle));
  iter.begin_epoch(epoch);
  Rng eps(stream_seed(cfg.seed, Stream::eps, epoch));
  Rng drop_z(stream_seed(cfg.seed, Stream::dropout_z_encoder, epoch));
  Rng drop_x(stream_seed(cfg.seed, Stream::dropout_x_encoder, epoch));
  Rng drop_dec(stream_seed(cfg.seed, Stream::dropout_decoder, epoch));
  NpVaeDropout dropout{DropoutPlan::train(cfg.keep_prob, drop_z),
                       DropoutPlan::train(cfg.keep_prob, drop_x),
                       DropoutPlan::train(cfg.keep_prob, drop_dec)};
  const AdamConfig adam{.lr = cfg.lr};

  MetricSums sums;
  std::size_t batch_index = 0;
  while (auto batch = next_batch(iter, data)) {
    if (max_steps && batch_index >= *max_steps) break;
    StepRecord record{epoch, batch_index, batch->y.rows(), {}};
    try {
      if (np) {
        auto result = npvae_loss(model.z_encoder, *model.x_encoder, model.decoder, *model.kernel,
                                 batch->y, eps, dropout, cfg.lambda);
        record.loss = result.breakdown;
        adam_step(ckpt.optimizer.z_encoder, adam, model.z_encoder, result.grads.z_encoder,
                  "z_encoder");
        adam_step(*ckpt.optimizer.x_encoder, adam, *model.x_encoder, result.grads.x_encoder,
                  "x_encoder");
        adam_step(ckpt.optimizer.decoder, adam, model.decoder, result.grads.decoder, "decoder");
        kernel_step(ckpt, adam, result.grads.log_lengthscale);
      } else {
        auto result = vae_loss(model.z_encoder, model.decoder, batch->y, eps, dropout.z_encoder,
                               dropout.decoder);
        const auto& b = result.breakdown;
        record.loss = {b.neg_reconstruction, b.kl, 0.0, b.neg_reconstruction + b.kl};
        adam_step(ckpt.optimizer.z_encoder, adam, model.z_encoder, result.grads.z_encoder,
                  "z_encoder");
        adam_step(ckpt.optimizer.decoder, adam, model.decoder, result.grads.decoder, "decoder");
      }
    } catch (const NonFiniteError& e) {
      throw NonFiniteError("epoch " + std::to_string(epoch) + " batch " +
                           std::to_string(batch_index) + ": " + e.what());
    }
    sums.add(record.loss, record.batch_size);
    if (observer) observer(record);
    ++batch_index;
  }
  ckpt.epoch = epoch + 1;
  ckpt.final_metrics = sums.mean();
  return sums.mean();
}

std::vector<EpochMetrics> train_epochs(Checkpoint& ckpt, const DataSplit& data, std::size_t epochs,
                                       const StepObserver& observer) {
  std::vector<EpochMetrics> out;
  out.reserve(epochs);
  for (std::size_t e = 0; e < epochs; ++e) out.push_back(train_epoch(ckpt, data, observer));
  return out;
}

EpochMetrics evaluate(const Model& model, double lambda, const DataSplit& data,
                      const EvalOptions& options) {
  if (options.batch_size == 0) throw ValidationError("evaluate: batch size must be positive");
  std::vector<std::size_t> order = options.order;
  if (order.empty()) {
    order.resize(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  }
  const bool np = model.kind == ModelKind::npvae;
  Rng eps(options.eps_seed);
  MetricSums sums;
  for (std::size_t start = 0; order.size() - start >= 2; start += options.batch_size) {
    const std::size_t take = std::min(options.batch_size, order.size() - start);
    std::span<const std::size_t> idx(order.data() + start, take);
    const Matrix y = gather_rows(data.y, idx);
    auto f = vae_forward(model.z_encoder, model.decoder, y, eps, DropoutPlan::off(),
                         DropoutPlan::off());
    NpVaeLossBreakdown b{f.breakdown.neg_reconstruction, f.breakdown.kl, 0.0, 0.0};
    if (np) {
      const Matrix x = encode_x(*model.x_encoder, y);
      b.penalty = penalty_forward(x, *model.kernel, f.posterior.mu).penalty;
      b.total = b.neg_reconstruction + b.kl + lambda * b.penalty;
    } else {
      b.total = b.neg_reconstruction + b.kl;
    }
    sums.add(b, take);
    if (take < options.batch_size) break;
  }
  return sums.mean();
}

}  // namespace npvae
