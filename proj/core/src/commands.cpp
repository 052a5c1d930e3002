#include "npvae/commands.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>

#include "npvae/errors.hpp"
#include "npvae/image_io.hpp"
#include "npvae/model.hpp"
#include "npvae/training.hpp"
#include "npvae/vae.hpp"

namespace npvae::cli {

namespace {

constexpr std::size_t kEncodeChunk = 1024;
constexpr double kToyLogLengthscale = -1.5;

template <typename F>
Matrix encode_in_chunks(const Matrix& y, F&& encode_chunk) {
  Matrix out;
  for (std::size_t start = 0; start < y.rows(); start += kEncodeChunk) {
    const std::size_t end = std::min(y.rows(), start + kEncodeChunk);
    Matrix part = encode_chunk(slice_rows(y, start, end));
    out = out.empty() ? std::move(part) : vstack(out, part);
  }
  return out;
}

void append_metrics_line(const std::filesystem::path& path, std::uint64_t epoch,
                         const EpochMetrics& m) {
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw IoError("cannot open metrics log " + path.string());
  out << epoch << ',' << format_real(m.neg_reconstruction) << ',' << format_real(m.kl) << ','
      << format_real(m.penalty) << ',' << format_real(m.total) << '\n';
  if (!out) throw IoError("write failed for metrics log " + path.string());
}

}  // namespace

std::filesystem::path resolve_data_dir(const std::filesystem::path& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("NPVAE_DATA_DIR"); env != nullptr && *env != '\0') return env;
  throw ValidationError("no data directory: pass --data-dir or set NPVAE_DATA_DIR");
}

DataSplit load_split(const RunConfig& config, const std::filesystem::path& data_dir,
                     const std::string& split) {
  if (split != "train" && split != "val" && split != "test") {
    throw ValidationError("unknown split '" + split + "' (expected train|val|test)");
  }
  if (config.obs_dim != kMnistPixels) {
    throw ValidationError("checkpoint expects " + std::to_string(config.obs_dim) +
                          "-dimensional data; MNIST has 784");
  }
  auto splits = load_mnist(data_dir);
  DataSplit out = split == "train" ? std::move(splits.train)
                  : split == "val" ? std::move(splits.val)
                                   : std::move(splits.test);
  if (split == "train" && config.subset != 0) out = head(out, config.subset);
  if (config.binarize) out = binarize(out);
  return out;
}

Checkpoint train_on(Checkpoint ckpt, const DataSplit& data, std::size_t epochs,
                    const std::filesystem::path& metrics_log, std::ostream& log) {
  for (std::size_t e = 0; e < epochs; ++e) {
    const auto m = train_epoch(ckpt, data);
    if (!metrics_log.empty()) append_metrics_line(metrics_log, ckpt.epoch, m);
    log << "epoch " << ckpt.epoch << ": neg_recon=" << m.neg_reconstruction << " kl=" << m.kl
        << " penalty=" << m.penalty << " total=" << m.total << '\n';
  }
  if (ckpt.model.kind == ModelKind::npvae) {
    ckpt.model.reference =
        build_reference_set(ckpt.model.z_encoder, *ckpt.model.x_encoder, data,
                            ckpt.config.reference_size,
                            stream_seed(ckpt.config.seed, Stream::reference));
  }
  return ckpt;
}

Checkpoint cmd_train(const TrainOptions& options, std::ostream& log) {
  Checkpoint ckpt;
  if (options.resume) {
    ckpt = load_checkpoint(*options.resume);
    log << "resuming from " << options.resume->string() << " at epoch " << ckpt.epoch << '\n';
  } else {
    options.config.validate();
    ckpt = init_checkpoint(options.config);
  }
  const auto data = load_split(ckpt.config, resolve_data_dir(options.data_dir), "train");

  std::filesystem::path metrics = options.metrics_log;
  if (metrics.empty()) metrics = options.out.string() + ".metrics.csv";
  if (!options.resume || !std::filesystem::exists(metrics)) {
    write_text_file(metrics, std::string(kMetricsHeader) + "\n");
  }

  ckpt = train_on(std::move(ckpt), data, options.epochs, metrics, log);
  save_checkpoint(ckpt, options.out);
  log << "wrote " << options.out.string() << '\n';
  return ckpt;
}

double lattice_coordinate(std::size_t i, std::size_t n, double range) {
  if (n <= 1) return 0.0;
  return -range + 2.0 * range * static_cast<double>(i) / static_cast<double>(n - 1);
}

Matrix grid_queries(std::size_t n, double range) {
  Matrix q(n * n, 2);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      q(r * n + c, 0) = lattice_coordinate(c, n, range);
      q(r * n + c, 1) = lattice_coordinate(n - 1 - r, n, range);
    }
  }
  return q;
}

SampleResult sample_images(const Checkpoint& ckpt, const SampleOptions& options) {
  if (options.point.has_value() == options.grid.has_value()) {
    throw ValidationError("sample: give exactly one of --x or --grid");
  }
  const auto& model = ckpt.model;
  const bool np = model.kind == ModelKind::npvae;
  const std::size_t space_dim = np ? model.x_dim() : model.z_dim();
  if (np && !model.reference) throw ValidationError("sample: checkpoint has no reference set");

  SampleResult result;
  Matrix queries;
  if (options.point) {
    if (options.point->size() != space_dim) {
      throw ValidationError("sample: --x has " + std::to_string(options.point->size()) +
                            " coordinates but the " + (np ? "X" : "Z") + " space has " +
                            std::to_string(space_dim));
    }
    queries = Matrix(1, space_dim, *options.point);
  } else {
    if (*options.grid == 0) throw ValidationError("sample: --grid must be positive");
    if (space_dim != 2) {
      throw ValidationError(std::string("sample: --grid needs a 2-D ") + (np ? "X" : "Z") +
                            " space, this checkpoint has " + std::to_string(space_dim));
    }
    queries = grid_queries(*options.grid, options.range);
    result.rows = result.cols = *options.grid;
  }
  result.images = np ? ancestral_sample(*model.reference, model.decoder, *model.kernel, queries)
                     : decode(model.decoder, queries);
  return result;
}

void cmd_sample(const SampleOptions& options, std::ostream& log) {
  const auto ckpt = load_checkpoint(options.checkpoint);
  const auto result = sample_images(ckpt, options);
  write_pgm(result.images, result.rows, result.cols, options.out);
  log << "wrote " << result.images.rows() << " sample(s) to " << options.out.string() << '\n';
}

void cmd_interpolate(const InterpolateOptions& options, std::ostream& log) {
  const auto ckpt = load_checkpoint(options.checkpoint);
  const auto space = parse_latent_space(options.space);
  if (space == LatentSpace::x && ckpt.model.kind != ModelKind::npvae) {
    throw ValidationError("interpolate: --space x is unsupported for a vae checkpoint");
  }
  const auto data = load_split(ckpt.config, resolve_data_dir(options.data_dir), "train");
  if (options.a >= data.size() || options.b >= data.size()) {
    throw ValidationError("interpolate: indices must be below " + std::to_string(data.size()));
  }
  const Matrix y_a = slice_rows(data.y, options.a, options.a + 1);
  const Matrix y_b = slice_rows(data.y, options.b, options.b + 1);
  const Matrix strip = interpolate(ckpt.model, y_a, y_b, options.steps, space);
  write_pgm(strip, 1, options.steps, options.out);
  log << "wrote " << options.steps << "-step interpolation to " << options.out.string() << '\n';
}

void cmd_embed(const EmbedOptions& options, std::ostream& log) {
  const auto ckpt = load_checkpoint(options.checkpoint);
  const auto& model = ckpt.model;
  if (model.kind == ModelKind::vae && model.z_dim() != 2) {
    throw ValidationError("embed: vae checkpoint with z_dim " + std::to_string(model.z_dim()) +
                          " has no 2-D embedding to export");
  }
  const auto data = load_split(ckpt.config, resolve_data_dir(options.data_dir), options.split);
  if (model.kind == ModelKind::npvae) {
    const Matrix x = encode_in_chunks(data.y, [&](const Matrix& y) { return encode_x(*model.x_encoder, y); });
    write_embedding_csv(x, data.labels, options.out, "x");
  } else {
    const Matrix z = encode_in_chunks(
        data.y, [&](const Matrix& y) { return encode(model.z_encoder, y, DropoutPlan::off()).mu; });
    write_embedding_csv(z, data.labels, options.out, "z");
  }
  log << "wrote " << data.size() << " points to " << options.out.string() << '\n';
}

EpochMetrics cmd_eval(const EvalCommandOptions& options, std::ostream& out) {
  const auto ckpt = load_checkpoint(options.checkpoint);
  const auto data = load_split(ckpt.config, resolve_data_dir(options.data_dir), options.split);
  EvalOptions eval;
  eval.batch_size = ckpt.config.batch_size;
  eval.eps_seed = stream_seed(ckpt.config.seed, Stream::eval_eps);
  const auto m = evaluate(ckpt.model, ckpt.config.lambda, data, eval);
  out << "split=" << options.split << '\n'
      << "neg_recon=" << format_real(m.neg_reconstruction) << '\n'
      << "kl=" << format_real(m.kl) << '\n'
      << "penalty=" << format_real(m.penalty) << '\n'
      << "total=" << format_real(m.total) << '\n';
  return m;
}

GradCheckReport run_gradcheck(const GradcheckOptions& options) {
  RunConfig cfg;
  cfg.obs_dim = 12;
  cfg.hidden = {8, 8};
  cfg.z_dim = 2;
  cfg.x_dim = 2;
  cfg.batch_size = 4;
  cfg.seed = 20170101;
  cfg.keep_prob = 1.0;

  Rng data_rng(cfg.seed);
  const Matrix y = synthetic_clusters(data_rng, 4, cfg.obs_dim, 2, 6.0).y;
  const std::uint64_t eps_seed = stream_seed(cfg.seed, Stream::eps);

  GradCheckReport report;
  report.tolerance = options.tolerance;
  bool injected = false;
  auto run = [&](std::vector<ParamGroup> groups, const std::function<double()>& loss) {
    if (options.inject_sign_flip) {
      for (auto& g : groups) {
        if (g.name != *options.inject_sign_flip) continue;
        g.analytic = scale(g.analytic, -1.0);
        injected = true;
      }
    }
    auto part = grad_check(loss, groups, options.tolerance);
    report.entries.insert(report.entries.end(), part.entries.begin(), part.entries.end());
  };

  {
    cfg.model = ModelKind::vae;
    Model model = init_model(cfg);
    Rng eps(eps_seed);
    const auto result = vae_loss(model.z_encoder, model.decoder, y, eps);
    auto groups = param_groups("vae/z_encoder", model.z_encoder, result.grads.z_encoder);
    auto dec = param_groups("vae/decoder", model.decoder, result.grads.decoder);
    groups.insert(groups.end(), dec.begin(), dec.end());
    run(std::move(groups), [&] {
      Rng e(eps_seed);
      const auto f = vae_forward(model.z_encoder, model.decoder, y, e, {}, {});
      return f.breakdown.neg_reconstruction + f.breakdown.kl;
    });
  }
  {
    cfg.model = ModelKind::npvae;
    Model model = init_model(cfg);
    model.kernel->log_lengthscale = kToyLogLengthscale;
    Matrix log_ls(1, 1, model.kernel->log_lengthscale);
    Rng eps(eps_seed);
    const auto result = npvae_loss(model.z_encoder, *model.x_encoder, model.decoder,
                                   *model.kernel, y, eps, {}, cfg.lambda);
    auto groups = param_groups("npvae/z_encoder", model.z_encoder, result.grads.z_encoder);
    for (auto&& extra : {param_groups("npvae/x_encoder", *model.x_encoder, result.grads.x_encoder),
                         param_groups("npvae/decoder", model.decoder, result.grads.decoder)}) {
      groups.insert(groups.end(), extra.begin(), extra.end());
    }
    groups.push_back({"npvae/kernel/log_lengthscale", &log_ls,
                      Matrix(1, 1, result.grads.log_lengthscale)});
    run(std::move(groups), [&] {
      Rng e(eps_seed);
      const auto f = vae_forward(model.z_encoder, model.decoder, y, e, {}, {});
      const Matrix x = encode_x(*model.x_encoder, y);
      const double penalty = penalty_forward(x, KernelParams{log_ls(0, 0)}, f.posterior.mu).penalty;
      return f.breakdown.neg_reconstruction + f.breakdown.kl + cfg.lambda * penalty;
    });
  }
  if (options.inject_sign_flip && !injected) {
    throw ValidationError("gradcheck: no parameter group named " + *options.inject_sign_flip);
  }
  return report;
}

int cmd_gradcheck(const GradcheckOptions& options, std::ostream& out) {
  const auto report = run_gradcheck(options);
  for (const auto& e : report.entries) {
    char line[256];
    std::snprintf(line, sizeof(line), "%-34s max_rel_err=%.3e  %s\n", e.name.c_str(),
                  e.max_rel_error, e.passed ? "ok" : "FAIL");
    out << line;
  }
  for (const auto& e : report.entries) {
    if (!e.passed) {
      out << "failed: " << e.name << " (index " << e.worst_index << ", analytic "
          << format_real(e.analytic) << ", numeric " << format_real(e.numeric) << ")\n";
    }
  }
  out << "gradcheck: " << (report.passed() ? "PASS" : "FAIL") << " at tolerance "
      << report.tolerance << '\n';
  return report.passed() ? kExitOk : kExitCheckFailed;
}

}  // namespace npvae::cli
