#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "npvae/model.hpp"
#include "npvae/nn.hpp"

namespace npvae {

/// Per-datapoint means over one epoch (or one evaluation pass), in nats.
struct EpochMetrics {
  double neg_reconstruction = 0.0;
  double kl = 0.0;
  double penalty = 0.0;
  double total = 0.0;

  bool operator==(const EpochMetrics&) const = default;
};

struct OptimizerState {
  AdamState z_encoder;
  AdamState decoder;
  std::optional<AdamState> x_encoder;
  std::optional<AdamState> kernel;

  bool operator==(const OptimizerState&) const = default;
};

struct Checkpoint {
  RunConfig config;
  Model model;
  OptimizerState optimizer;
  std::uint64_t epoch = 0;
  std::optional<EpochMetrics> final_metrics;

  bool operator==(const Checkpoint&) const = default;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Fresh model plus zeroed optimizer state for `config`.
Checkpoint init_checkpoint(const RunConfig& config);

/// Layout: "NPVAE\0", u32 LE version, then named sections
///   u16 name length | name | u8 dtype | u8 rank | u32 dims[rank] |
///   little-endian payload | u32 CRC32 of everything before it
/// dtype tags: 1 = f64, 2 = i64, 3 = u64, 4 = raw bytes.
std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);

/// Rejects bad magic, other versions, truncated or unknown sections,
/// checksum mismatches and shapes that do not fit together, each with its
/// own FormatError subclass.
Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace npvae
