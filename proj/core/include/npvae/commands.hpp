#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "npvae/checkpoint.hpp"
#include "npvae/data.hpp"
#include "npvae/nn.hpp"

namespace npvae::cli {

/// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitIo = 2;

/// `flag` when non-empty, else $NPVAE_DATA_DIR; throws ValidationError if
/// neither is set.
std::filesystem::path resolve_data_dir(const std::filesystem::path& flag);

/// Loads `split` (train|val|test) as the checkpoint's config sees it:
/// binarized if requested and, for train, cut to the configured subset.
DataSplit load_split(const RunConfig& config, const std::filesystem::path& data_dir,
                     const std::string& split);

struct TrainOptions {
  RunConfig config;
  std::size_t epochs = 0;
  std::filesystem::path data_dir;
  std::filesystem::path out = "model.ckpt";
  std::filesystem::path metrics_log;  // default: <out>.metrics.csv
  std::optional<std::filesystem::path> resume;
};

inline constexpr const char* kMetricsHeader = "epoch,neg_recon,kl,penalty,total";

/// Trains (or resumes), builds the reference set for npvae, writes the
/// checkpoint and appends one metrics line per epoch.
Checkpoint cmd_train(const TrainOptions& options, std::ostream& log);

/// Training loop over an in-memory split; used by cmd_train and tests.
Checkpoint train_on(Checkpoint ckpt, const DataSplit& data, std::size_t epochs,
                    const std::filesystem::path& metrics_log, std::ostream& log);

/// Grid lattice coordinate i of n over [-range, range].
double lattice_coordinate(std::size_t i, std::size_t n, double range);

/// Query points for an n×n grid, tile-major: tile (r, c) sits at
/// (lattice(c), lattice(n-1-r)) so the top row has the largest second
/// coordinate.
Matrix grid_queries(std::size_t n, double range);

struct SampleOptions {
  std::filesystem::path checkpoint;
  std::optional<std::vector<double>> point;
  std::optional<std::size_t> grid;
  double range = 3.0;
  std::filesystem::path out = "samples.pgm";
};

/// Decoded images for the requested point or grid, plus their layout.
struct SampleResult {
  Matrix images;
  std::size_t rows = 1;
  std::size_t cols = 1;
};

SampleResult sample_images(const Checkpoint& ckpt, const SampleOptions& options);
void cmd_sample(const SampleOptions& options, std::ostream& log);

struct InterpolateOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path data_dir;
  std::size_t a = 0;
  std::size_t b = 1;
  std::size_t steps = 11;
  std::string space = "x";
  std::filesystem::path out = "interpolation.pgm";
};

void cmd_interpolate(const InterpolateOptions& options, std::ostream& log);

struct EmbedOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path data_dir;
  std::string split = "test";
  std::filesystem::path out = "embedding.csv";
};

void cmd_embed(const EmbedOptions& options, std::ostream& log);

struct EvalCommandOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path data_dir;
  std::string split = "test";
};

/// Prints "neg_recon=…", "kl=…", "penalty=…", "total=…" on separate lines.
EpochMetrics cmd_eval(const EvalCommandOptions& options, std::ostream& out);

struct GradcheckOptions {
  double tolerance = 1e-4;
  /// Test hook: negate the analytic gradient of this group before comparing.
  std::optional<std::string> inject_sign_flip;
};

/// Finite-difference check of vae_loss and npvae_loss on toy dimensions
/// (12→8→8, z_dim 2, x_dim 2, batch 4, dropout off, frozen ε).
GradCheckReport run_gradcheck(const GradcheckOptions& options);
int cmd_gradcheck(const GradcheckOptions& options, std::ostream& out);

}  // namespace npvae::cli
