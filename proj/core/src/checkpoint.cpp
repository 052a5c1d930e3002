#include "npvae/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <regex>
#include <set>
#include <string>

#include "npvae/errors.hpp"

namespace npvae {

namespace {

constexpr char kMagic[6] = {'N', 'P', 'V', 'A', 'E', '\0'};

enum class DType : std::uint8_t { f64 = 1, i64 = 2, u64 = 3, bytes = 4 };

std::size_t element_size(DType t) { return t == DType::bytes ? 1 : 8; }

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  return static_cast<std::uint32_t>(
      crc32(crc, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
}

class SectionWriter {
 public:
  SectionWriter() { out_.insert(out_.end(), std::begin(kMagic), std::end(kMagic)); put_u32(kCheckpointVersion); }

  void matrix(const std::string& name, const Matrix& m) {
    std::vector<std::uint8_t> payload;
    for (double v : m.values()) put_le(payload, std::bit_cast<std::uint64_t>(v), 8);
    section(name, DType::f64, {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())}, payload);
  }

  void real(const std::string& name, double v) {
    std::vector<std::uint8_t> payload;
    put_le(payload, std::bit_cast<std::uint64_t>(v), 8);
    section(name, DType::f64, {}, payload);
  }

  void reals(const std::string& name, const std::vector<double>& values) {
    std::vector<std::uint8_t> payload;
    for (double v : values) put_le(payload, std::bit_cast<std::uint64_t>(v), 8);
    section(name, DType::f64, {static_cast<std::uint32_t>(values.size())}, payload);
  }

  void count(const std::string& name, std::uint64_t v) {
    std::vector<std::uint8_t> payload;
    put_le(payload, v, 8);
    section(name, DType::u64, {}, payload);
  }

  void counts(const std::string& name, const std::vector<std::size_t>& values) {
    std::vector<std::uint8_t> payload;
    for (auto v : values) put_le(payload, v, 8);
    section(name, DType::u64, {static_cast<std::uint32_t>(values.size())}, payload);
  }

  void ints(const std::string& name, const std::vector<int>& values) {
    std::vector<std::uint8_t> payload;
    for (int v : values) put_le(payload, static_cast<std::uint64_t>(static_cast<std::int64_t>(v)), 8);
    section(name, DType::i64, {static_cast<std::uint32_t>(values.size())}, payload);
  }

  void text(const std::string& name, std::string_view s) {
    std::vector<std::uint8_t> payload(s.begin(), s.end());
    section(name, DType::bytes, {static_cast<std::uint32_t>(payload.size())}, payload);
  }

  std::vector<std::uint8_t> finish() { return std::move(out_); }

 private:
  static void put_le(std::vector<std::uint8_t>& buf, std::uint64_t v, int width) {
    for (int i = 0; i < width; ++i) buf.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }

  void put_u32(std::uint32_t v) { put_le(out_, v, 4); }

  void section(const std::string& name, DType dtype, std::vector<std::uint32_t> dims,
               const std::vector<std::uint8_t>& payload) {
    std::vector<std::uint8_t> s;
    put_le(s, name.size(), 2);
    s.insert(s.end(), name.begin(), name.end());
    s.push_back(static_cast<std::uint8_t>(dtype));
    s.push_back(static_cast<std::uint8_t>(dims.size()));
    for (auto d : dims) put_le(s, d, 4);
    s.insert(s.end(), payload.begin(), payload.end());
    const std::uint32_t crc = crc32_of(s);
    put_le(s, crc, 4);
    out_.insert(out_.end(), s.begin(), s.end());
  }

  std::vector<std::uint8_t> out_;
};

struct Section {
  DType dtype{};
  std::vector<std::uint32_t> dims;
  std::span<const std::uint8_t> payload;

  std::uint64_t element_count() const {
    std::uint64_t n = 1;
    for (auto d : dims) n *= d;
    return n;
  }
};

std::uint64_t get_le(std::span<const std::uint8_t> b, std::size_t offset, int width) {
  std::uint64_t v = 0;
  for (int i = 0; i < width; ++i) v |= std::uint64_t{b[offset + static_cast<std::size_t>(i)]} << (8 * i);
  return v;
}

bool known_section(const std::string& name) {
  static const std::regex pattern(
      R"(config/(model|obs_dim|z_dim|x_dim|hidden|batch_size|lr|seed|keep_prob|lambda|binarize|reference_size|subset))"
      R"(|state/epoch|metrics/final|kernel/log_lengthscale)"
      R"(|(z_encoder|x_encoder|decoder)/layer\d+/(W|b))"
      R"(|adam/(z_encoder|x_encoder|decoder|kernel)/(t|m\d+|v\d+))"
      R"(|reference/(x|z|labels))");
  return std::regex_match(name, pattern);
}

class SectionReader {
 public:
  explicit SectionReader(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
      throw BadMagicError("checkpoint: bad magic at offset 0");
    }
    if (bytes.size() < sizeof(kMagic) + 4) throw TruncatedError("checkpoint: truncated version field at offset 6");
    const auto version = static_cast<std::uint32_t>(get_le(bytes, 6, 4));
    if (version != kCheckpointVersion) {
      throw VersionMismatchError("checkpoint: version " + std::to_string(version) +
                                 ", this build reads version " +
                                 std::to_string(kCheckpointVersion));
    }
    std::size_t pos = sizeof(kMagic) + 4;
    while (pos < bytes.size()) pos = read_section(bytes, pos);
  }

  bool has(const std::string& name) const { return sections_.count(name) != 0; }

  const Section& get(const std::string& name, DType dtype, std::size_t rank) const {
    auto it = sections_.find(name);
    if (it == sections_.end()) throw ShapeInconsistencyError("checkpoint: missing section " + name);
    if (it->second.dtype != dtype || it->second.dims.size() != rank) {
      throw ShapeInconsistencyError("checkpoint: section " + name + " has unexpected dtype/rank");
    }
    used_.insert(name);
    return it->second;
  }

  Matrix matrix(const std::string& name) const {
    const auto& s = get(name, DType::f64, 2);
    std::vector<double> values(s.element_count());
    for (std::size_t i = 0; i < values.size(); ++i) {
      values[i] = std::bit_cast<double>(get_le(s.payload, 8 * i, 8));
    }
    return Matrix(s.dims[0], s.dims[1], std::move(values));
  }

  double real(const std::string& name) const {
    return std::bit_cast<double>(get_le(get(name, DType::f64, 0).payload, 0, 8));
  }

  std::vector<double> reals(const std::string& name) const {
    const auto& s = get(name, DType::f64, 1);
    std::vector<double> v(s.dims[0]);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::bit_cast<double>(get_le(s.payload, 8 * i, 8));
    return v;
  }

  std::uint64_t count(const std::string& name) const {
    return get_le(get(name, DType::u64, 0).payload, 0, 8);
  }

  std::vector<std::size_t> counts(const std::string& name) const {
    const auto& s = get(name, DType::u64, 1);
    std::vector<std::size_t> v(s.dims[0]);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<std::size_t>(get_le(s.payload, 8 * i, 8));
    return v;
  }

  std::vector<int> ints(const std::string& name) const {
    const auto& s = get(name, DType::i64, 1);
    std::vector<int> v(s.dims[0]);
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] = static_cast<int>(static_cast<std::int64_t>(get_le(s.payload, 8 * i, 8)));
    }
    return v;
  }

  std::string text(const std::string& name) const {
    const auto& s = get(name, DType::bytes, 1);
    return std::string(s.payload.begin(), s.payload.end());
  }

  /// Every stored section must have been consumed by the schema.
  void require_all_used() const {
    for (const auto& [name, _] : sections_) {
      if (!used_.count(name)) {
        throw ShapeInconsistencyError("checkpoint: section " + name +
                                      " does not belong to this model");
      }
    }
  }

 private:
  std::size_t read_section(std::span<const std::uint8_t> b, std::size_t start) {
    auto need = [&](std::size_t pos, std::size_t n, const std::string& what) {
      if (b.size() - pos < n) {
        throw TruncatedError("checkpoint: truncated " + what + " at offset " + std::to_string(pos));
      }
    };
    std::size_t pos = start;
    need(pos, 2, "section header");
    const auto name_len = static_cast<std::size_t>(get_le(b, pos, 2));
    pos += 2;
    need(pos, name_len + 2, "section name");
    std::string name(b.begin() + static_cast<std::ptrdiff_t>(pos),
                     b.begin() + static_cast<std::ptrdiff_t>(pos + name_len));
    pos += name_len;
    const auto dtype_raw = b[pos];
    const auto rank = b[pos + 1];
    pos += 2;
    if (dtype_raw < 1 || dtype_raw > 4) {
      throw ShapeInconsistencyError("checkpoint: section " + name + " has unknown dtype tag " +
                                    std::to_string(dtype_raw));
    }
    const auto dtype = static_cast<DType>(dtype_raw);
    need(pos, 4u * rank, "dimensions of section " + name);
    Section s;
    s.dtype = dtype;
    std::uint64_t elements = 1;
    for (std::size_t d = 0; d < rank; ++d) {
      s.dims.push_back(static_cast<std::uint32_t>(get_le(b, pos, 4)));
      elements *= s.dims.back();
      pos += 4;
      if (elements > b.size()) {
        throw TruncatedError("checkpoint: section " + name + " declares more data than the file holds (offset " + std::to_string(pos) + ")");
      }
    }
    const std::size_t payload_size = static_cast<std::size_t>(elements) * element_size(dtype);
    need(pos, payload_size, "payload of section " + name);
    s.payload = b.subspan(pos, payload_size);
    pos += payload_size;
    need(pos, 4, "checksum of section " + name);
    const auto stored = static_cast<std::uint32_t>(get_le(b, pos, 4));
    if (stored != crc32_of(b.subspan(start, pos - start))) {
      throw ChecksumError("checkpoint: CRC32 mismatch in section " + name);
    }
    pos += 4;
    if (!known_section(name)) throw UnknownSectionError("checkpoint: unknown section " + name);
    if (!sections_.emplace(name, std::move(s)).second) {
      throw ShapeInconsistencyError("checkpoint: duplicate section " + name);
    }
    return pos;
  }

  std::map<std::string, Section> sections_;
  mutable std::set<std::string> used_;
};

void write_mlp(SectionWriter& w, const std::string& prefix, const MlpParams& p) {
  for (std::size_t k = 0; k < p.layers.size(); ++k) {
    w.matrix(prefix + "/layer" + std::to_string(k) + "/W", p.layers[k].weight);
    w.matrix(prefix + "/layer" + std::to_string(k) + "/b", p.layers[k].bias);
  }
}

MlpParams read_mlp(const SectionReader& r, const std::string& prefix, std::size_t layers,
                   Activation output) {
  MlpParams p;
  p.output_activation = output;
  for (std::size_t k = 0; k < layers; ++k) {
    p.layers.push_back({r.matrix(prefix + "/layer" + std::to_string(k) + "/W"),
                        r.matrix(prefix + "/layer" + std::to_string(k) + "/b")});
  }
  try {
    p.validate();
  } catch (const DimensionError& e) {
    throw ShapeInconsistencyError("checkpoint: " + prefix + ": " + e.what());
  }
  return p;
}

void write_adam(SectionWriter& w, const std::string& prefix, const AdamState& s) {
  w.count(prefix + "/t", s.t);
  for (std::size_t i = 0; i < s.m.size(); ++i) {
    w.matrix(prefix + "/m" + std::to_string(i), s.m[i]);
    w.matrix(prefix + "/v" + std::to_string(i), s.v[i]);
  }
}

AdamState read_adam(const SectionReader& r, const std::string& prefix,
                    const std::vector<const Matrix*>& params) {
  AdamState s;
  s.t = r.count(prefix + "/t");
  for (std::size_t i = 0; i < params.size(); ++i) {
    s.m.push_back(r.matrix(prefix + "/m" + std::to_string(i)));
    s.v.push_back(r.matrix(prefix + "/v" + std::to_string(i)));
    for (const auto* moment : {&s.m.back(), &s.v.back()}) {
      if (moment->rows() != params[i]->rows() || moment->cols() != params[i]->cols()) {
        throw ShapeInconsistencyError("checkpoint: " + prefix + " moment " + std::to_string(i) +
                                      " " + shape_string(*moment) + " does not match parameter " +
                                      shape_string(*params[i]));
      }
    }
  }
  return s;
}

std::vector<const Matrix*> blocks_of(const MlpParams& p) {
  std::vector<const Matrix*> out;
  for (const auto& l : p.layers) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

void expect(bool ok, const std::string& what) {
  if (!ok) throw ShapeInconsistencyError("checkpoint: " + what);
}

}  // namespace

Checkpoint init_checkpoint(const RunConfig& config) {
  Checkpoint c;
  c.config = config;
  c.model = init_model(config);
  c.optimizer.z_encoder = adam_init(c.model.z_encoder);
  c.optimizer.decoder = adam_init(c.model.decoder);
  if (c.model.kind == ModelKind::npvae) {
    c.optimizer.x_encoder = adam_init(*c.model.x_encoder);
    const Matrix scalar(1, 1);
    c.optimizer.kernel = adam_init(std::span<const Matrix>(&scalar, 1));
  }
  return c;
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
  const auto& cfg = ckpt.config;
  const auto& model = ckpt.model;
  const bool np = model.kind == ModelKind::npvae;
  if (cfg.model != model.kind) throw ValidationError("checkpoint: config and model kinds differ");
  if (np && (!model.x_encoder || !model.kernel || !ckpt.optimizer.x_encoder ||
             !ckpt.optimizer.kernel)) {
    throw ValidationError("checkpoint: npvae model is missing X-side state");
  }
  if (!np && (model.x_encoder || model.kernel || model.reference)) {
    throw ValidationError("checkpoint: vae model carries X-side state");
  }

  SectionWriter w;
  w.text("config/model", to_string(cfg.model));
  w.count("config/obs_dim", cfg.obs_dim);
  w.count("config/z_dim", cfg.z_dim);
  w.count("config/x_dim", cfg.x_dim);
  w.counts("config/hidden", cfg.hidden);
  w.count("config/batch_size", cfg.batch_size);
  w.real("config/lr", cfg.lr);
  w.count("config/seed", cfg.seed);
  w.real("config/keep_prob", cfg.keep_prob);
  w.real("config/lambda", cfg.lambda);
  w.count("config/binarize", cfg.binarize ? 1 : 0);
  w.count("config/reference_size", cfg.reference_size);
  w.count("config/subset", cfg.subset);
  w.count("state/epoch", ckpt.epoch);

  write_mlp(w, "z_encoder", model.z_encoder);
  write_mlp(w, "decoder", model.decoder);
  write_adam(w, "adam/z_encoder", ckpt.optimizer.z_encoder);
  write_adam(w, "adam/decoder", ckpt.optimizer.decoder);
  if (np) {
    write_mlp(w, "x_encoder", *model.x_encoder);
    w.real("kernel/log_lengthscale", model.kernel->log_lengthscale);
    write_adam(w, "adam/x_encoder", *ckpt.optimizer.x_encoder);
    write_adam(w, "adam/kernel", *ckpt.optimizer.kernel);
    if (model.reference) {
      w.matrix("reference/x", model.reference->x_ref);
      w.matrix("reference/z", model.reference->z_ref);
      w.ints("reference/labels", model.reference->labels);
    }
  }
  if (ckpt.final_metrics) {
    const auto& m = *ckpt.final_metrics;
    w.reals("metrics/final", {m.neg_reconstruction, m.kl, m.penalty, m.total});
  }
  return w.finish();
}

Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  SectionReader r(bytes);
  Checkpoint c;
  auto& cfg = c.config;
  try {
    cfg.model = parse_model_kind(r.text("config/model"));
  } catch (const ValidationError& e) {
    throw ShapeInconsistencyError(std::string("checkpoint: ") + e.what());
  }
  cfg.obs_dim = r.count("config/obs_dim");
  cfg.z_dim = r.count("config/z_dim");
  cfg.x_dim = r.count("config/x_dim");
  cfg.hidden = r.counts("config/hidden");
  cfg.batch_size = r.count("config/batch_size");
  cfg.lr = r.real("config/lr");
  cfg.seed = r.count("config/seed");
  cfg.keep_prob = r.real("config/keep_prob");
  cfg.lambda = r.real("config/lambda");
  cfg.binarize = r.count("config/binarize") != 0;
  cfg.reference_size = r.count("config/reference_size");
  cfg.subset = r.count("config/subset");
  c.epoch = r.count("state/epoch");

  const std::size_t layers = cfg.hidden.size() + 1;
  auto& model = c.model;
  model.kind = cfg.model;
  model.z_encoder = read_mlp(r, "z_encoder", layers, Activation::identity);
  model.decoder = read_mlp(r, "decoder", layers, Activation::sigmoid);
  expect(model.z_encoder.input_dim() == cfg.obs_dim &&
             model.z_encoder.output_dim() == 2 * cfg.z_dim,
         "z_encoder shape does not match config");
  expect(model.decoder.input_dim() == cfg.z_dim && model.decoder.output_dim() == cfg.obs_dim,
         "decoder shape does not match config");
  for (std::size_t k = 0; k + 1 < layers; ++k) {
    expect(model.z_encoder.layers[k].weight.cols() == cfg.hidden[k] &&
               model.decoder.layers[k].weight.cols() == cfg.hidden[k],
           "hidden widths do not match config");
  }
  c.optimizer.z_encoder = read_adam(r, "adam/z_encoder", blocks_of(model.z_encoder));
  c.optimizer.decoder = read_adam(r, "adam/decoder", blocks_of(model.decoder));

  if (cfg.model == ModelKind::npvae) {
    model.x_encoder = read_mlp(r, "x_encoder", layers, Activation::identity);
    expect(model.x_encoder->input_dim() == cfg.obs_dim &&
               model.x_encoder->output_dim() == cfg.x_dim,
           "x_encoder shape does not match config");
    model.kernel = KernelParams{r.real("kernel/log_lengthscale")};
    c.optimizer.x_encoder = read_adam(r, "adam/x_encoder", blocks_of(*model.x_encoder));
    const Matrix scalar(1, 1);
    c.optimizer.kernel = read_adam(r, "adam/kernel", {&scalar});
    if (r.has("reference/x")) {
      ReferenceSet ref;
      ref.x_ref = r.matrix("reference/x");
      ref.z_ref = r.matrix("reference/z");
      ref.labels = r.ints("reference/labels");
      expect(ref.x_ref.rows() >= 1 && ref.x_ref.rows() == ref.z_ref.rows() &&
                 ref.labels.size() == ref.x_ref.rows() && ref.x_ref.cols() == cfg.x_dim &&
                 ref.z_ref.cols() == cfg.z_dim,
             "reference set rows or widths do not line up");
      model.reference = std::move(ref);
    }
  }
  if (r.has("metrics/final")) {
    const auto v = r.reals("metrics/final");
    expect(v.size() == 4, "metrics/final must hold 4 values");
    c.final_metrics = EpochMetrics{v[0], v[1], v[2], v[3]};
  }
  r.require_all_used();
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace npvae
