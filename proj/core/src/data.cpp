#include "npvae/data.hpp"

#include <cmath>
#include <numbers>
#include <numeric>

#include "npvae/errors.hpp"
#include "npvae/idx.hpp"

namespace npvae {

namespace {

std::filesystem::path find_file(const std::filesystem::path& dir, const std::string& stem) {
  for (const auto& candidate : {dir / stem, dir / (stem + ".gz")}) {
    if (std::filesystem::exists(candidate)) return candidate;
  }
  throw IoError("missing MNIST file " + (dir / stem).string() + "[.gz]");
}

DataSplit load_pair(const std::filesystem::path& dir, const std::string& prefix,
                    std::size_t expected) {
  const auto images = parse_idx(find_file(dir, prefix + "-images-idx3-ubyte"));
  const auto labels = parse_idx(find_file(dir, prefix + "-labels-idx1-ubyte"));
  if (images.magic != kIdxImageMagic || labels.magic != kIdxLabelMagic) {
    throw FormatError("MNIST " + prefix + ": image/label files swapped");
  }
  if (images.dims[1] != kMnistSide || images.dims[2] != kMnistSide) {
    throw FormatError("MNIST " + prefix + ": expected 28x28 images, got " +
                      std::to_string(images.dims[1]) + "x" + std::to_string(images.dims[2]));
  }
  if (images.dims[0] != expected || labels.dims[0] != expected) {
    throw FormatError("MNIST " + prefix + ": count mismatch, " + std::to_string(images.dims[0]) +
                      " images and " + std::to_string(labels.dims[0]) + " labels, expected " +
                      std::to_string(expected));
  }
  DataSplit split;
  split.name = prefix;
  split.y = normalize_pixels(images.bytes, expected, kMnistPixels);
  split.labels.assign(labels.bytes.begin(), labels.bytes.end());
  return split;
}

}  // namespace

Matrix normalize_pixels(std::span<const std::uint8_t> bytes, std::size_t rows, std::size_t cols) {
  if (bytes.size() != rows * cols) {
    throw DimensionError("normalize_pixels: " + std::to_string(bytes.size()) + " bytes for " +
                         std::to_string(rows) + "x" + std::to_string(cols));
  }
  Matrix m(rows, cols);
  auto v = m.values();
  for (std::size_t i = 0; i < bytes.size(); ++i) v[i] = static_cast<double>(bytes[i]) / 255.0;
  return m;
}

MnistSplits load_mnist(const std::filesystem::path& dir) {
  auto full = load_pair(dir, "train", kMnistTrainCount + kMnistValCount);
  MnistSplits out;
  out.train.name = "train";
  out.train.y = slice_rows(full.y, 0, kMnistTrainCount);
  out.train.labels.assign(full.labels.begin(), full.labels.begin() + kMnistTrainCount);
  out.val.name = "val";
  out.val.y = slice_rows(full.y, kMnistTrainCount, kMnistTrainCount + kMnistValCount);
  out.val.labels.assign(full.labels.begin() + kMnistTrainCount, full.labels.end());
  out.test = load_pair(dir, "t10k", kMnistTestCount);
  out.test.name = "test";
  return out;
}

DataSplit binarize(const DataSplit& split, double threshold) {
  DataSplit out = split;
  for (double& v : out.y.values()) v = v >= threshold ? 1.0 : 0.0;
  return out;
}

DataSplit head(const DataSplit& split, std::size_t n) {
  if (n > split.size()) {
    throw ValidationError("head: requested " + std::to_string(n) + " rows from a split of " +
                          std::to_string(split.size()));
  }
  DataSplit out;
  out.name = split.name;
  out.y = slice_rows(split.y, 0, n);
  out.labels.assign(split.labels.begin(), split.labels.begin() + static_cast<std::ptrdiff_t>(n));
  return out;
}

DataSplit subset(const DataSplit& split, std::span<const std::size_t> indices, std::string name) {
  DataSplit out;
  out.name = std::move(name);
  out.y = gather_rows(split.y, indices);
  for (auto i : indices) out.labels.push_back(split.labels.at(i));
  return out;
}

DataSplit synthetic_clusters(Rng& rng, std::size_t n, std::size_t obs_dim, std::size_t k,
                             double separation) {
  if (k < 2) throw ValidationError("synthetic_clusters: need k >= 2, got " + std::to_string(k));
  // Adjacent vertices of a regular k-gon with circumradius r are 2r·sin(π/k) apart.
  const double radius = separation / (2.0 * std::sin(std::numbers::pi / static_cast<double>(k)));
  Matrix centres(k, 2);
  for (std::size_t c = 0; c < k; ++c) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(c) / static_cast<double>(k);
    centres(c, 0) = radius * std::cos(angle);
    centres(c, 1) = radius * std::sin(angle);
  }
  const Matrix projection = scale(standard_normal(rng, 2, obs_dim), 1.0 / std::sqrt(2.0));

  Matrix latent(n, 2);
  DataSplit out;
  out.name = "synthetic";
  out.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = i % k;
    out.labels[i] = static_cast<int>(c);
    latent(i, 0) = centres(c, 0) + rng.normal();
    latent(i, 1) = centres(c, 1) + rng.normal();
  }
  out.y = sigmoid(matmul(latent, projection));
  return out;
}

std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(perm[i - 1], perm[j]);
  }
  return perm;
}

BatchIter::BatchIter(std::size_t n, std::size_t batch_size, std::uint64_t seed)
    : n_(n), batch_size_(batch_size), seed_(seed) {
  if (batch_size == 0) throw ValidationError("BatchIter: batch size must be positive");
  begin_epoch(0);
}

void BatchIter::begin_epoch(std::uint64_t epoch) {
  epoch_ = epoch;
  cursor_ = 0;
  permutation_ = seeded_permutation(n_, derive_seed(seed_, 0, epoch));
}

std::optional<std::vector<std::size_t>> BatchIter::next() {
  const std::size_t remaining = n_ - cursor_;
  if (remaining < 2) return std::nullopt;
  const std::size_t take = std::min(batch_size_, remaining);
  std::vector<std::size_t> idx(permutation_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                               permutation_.begin() + static_cast<std::ptrdiff_t>(cursor_ + take));
  cursor_ += take;
  return idx;
}

std::size_t BatchIter::batches_per_epoch() const {
  const std::size_t full = n_ / batch_size_;
  const std::size_t tail = n_ % batch_size_;
  return full + (tail >= 2 ? 1 : 0);
}

std::optional<Batch> next_batch(BatchIter& iter, const DataSplit& split) {
  auto idx = iter.next();
  if (!idx) return std::nullopt;
  Batch b;
  b.y = gather_rows(split.y, *idx);
  b.labels.reserve(idx->size());
  for (auto i : *idx) b.labels.push_back(split.labels.at(i));
  b.indices = std::move(*idx);
  return b;
}

}  // namespace npvae
