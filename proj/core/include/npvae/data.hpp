#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "npvae/matrix.hpp"
#include "npvae/rng.hpp"

namespace npvae {

inline constexpr std::size_t kMnistSide = 28;
inline constexpr std::size_t kMnistPixels = kMnistSide * kMnistSide;
inline constexpr std::size_t kMnistTrainCount = 55000;
inline constexpr std::size_t kMnistValCount = 5000;
inline constexpr std::size_t kMnistTestCount = 10000;

/// Observations in [0,1] with one integer label per row.
struct DataSplit {
  std::string name;
  Matrix y;
  std::vector<int> labels;

  std::size_t size() const { return y.rows(); }
};

struct MnistSplits {
  DataSplit train;  // first 55000 of the canonical training file
  DataSplit val;    // remaining 5000
  DataSplit test;   // 10000
};

/// Loads train-/t10k- images and labels (optionally .gz) from `dir` and
/// scales pixels by 1/255.
MnistSplits load_mnist(const std::filesystem::path& dir);

/// Pixel bytes to [0,1] rows, exactly v/255.
Matrix normalize_pixels(std::span<const std::uint8_t> bytes, std::size_t rows, std::size_t cols);

DataSplit binarize(const DataSplit& split, double threshold = 0.5);
DataSplit head(const DataSplit& split, std::size_t n);
DataSplit subset(const DataSplit& split, std::span<const std::size_t> indices, std::string name);

/// k unit-variance Gaussian clusters in a 2-D latent, centres on a circle
/// with neighbouring centres `separation` apart, pushed through a fixed
/// random linear map to obs_dim and a sigmoid. Labels are assigned
/// round-robin: point i belongs to cluster i mod k.
DataSplit synthetic_clusters(Rng& rng, std::size_t n, std::size_t obs_dim, std::size_t k,
                             double separation);

/// Fisher-Yates shuffle of 0..n-1 driven by Rng(seed).
std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed);

/// Seeded minibatch schedule. Each epoch is a fresh permutation derived
/// from (seed, epoch); a trailing batch with fewer than 2 rows is dropped.
class BatchIter {
 public:
  BatchIter(std::size_t n, std::size_t batch_size, std::uint64_t seed);

  void begin_epoch(std::uint64_t epoch);
  /// Indices of the next batch, or nullopt once the epoch is exhausted.
  std::optional<std::vector<std::size_t>> next();

  std::uint64_t epoch() const { return epoch_; }
  const std::vector<std::size_t>& permutation() const { return permutation_; }
  std::size_t batches_per_epoch() const;

 private:
  std::size_t n_;
  std::size_t batch_size_;
  std::uint64_t seed_;
  std::uint64_t epoch_ = 0;
  std::size_t cursor_ = 0;
  std::vector<std::size_t> permutation_;
};

struct Batch {
  Matrix y;
  std::vector<int> labels;
  std::vector<std::size_t> indices;
};

std::optional<Batch> next_batch(BatchIter& iter, const DataSplit& split);

}  // namespace npvae
