#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "npvae/checkpoint.hpp"
#include "npvae/data.hpp"
#include "npvae/nonparametric.hpp"

namespace npvae {

struct StepRecord {
  std::uint64_t epoch = 0;
  std::size_t batch = 0;
  std::size_t batch_size = 0;
  NpVaeLossBreakdown loss;  // penalty is 0 for the plain VAE
};

using StepObserver = std::function<void(const StepRecord&)>;

/// One epoch of Adam over `data`, continuing from ckpt.epoch. Shuffling,
/// ε and every dropout mask come from streams derived from (seed, epoch),
/// so resuming from a saved checkpoint replays an unbroken run exactly.
/// Returns per-datapoint means over the epoch.
EpochMetrics train_epoch(Checkpoint& ckpt, const DataSplit& data, const StepObserver& observer = {},
                         std::optional<std::size_t> max_steps = std::nullopt);

std::vector<EpochMetrics> train_epochs(Checkpoint& ckpt, const DataSplit& data, std::size_t epochs,
                                       const StepObserver& observer = {});

struct EvalOptions {
  std::size_t batch_size = 128;
  /// Row order to batch in; identity order when empty.
  std::vector<std::size_t> order;
  std::uint64_t eps_seed = 0;
};

/// Loss terms with dropout off and ε drawn from Rng(eps_seed). Batches
/// follow the training rule: a trailing batch below 2 rows is skipped.
EpochMetrics evaluate(const Model& model, double lambda, const DataSplit& data,
                      const EvalOptions& options);

}  // namespace npvae
