#include "npvae/idx.hpp"

#include <zlib.h>

#include <cstdio>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>

#include "npvae/errors.hpp"

namespace npvae {

namespace {

std::uint32_t read_be32(std::span<const std::uint8_t> raw, std::size_t offset) {
  return (std::uint32_t{raw[offset]} << 24) | (std::uint32_t{raw[offset + 1]} << 16) |
         (std::uint32_t{raw[offset + 2]} << 8) | std::uint32_t{raw[offset + 3]};
}

void write_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

std::vector<std::uint8_t> gunzip(const std::vector<std::uint8_t>& compressed,
                                 const std::filesystem::path& path) {
  z_stream stream{};
  if (inflateInit2(&stream, 16 + MAX_WBITS) != Z_OK) {
    throw FormatError("gzip: cannot initialize inflater for " + path.string());
  }
  stream.next_in = const_cast<Bytef*>(compressed.data());
  stream.avail_in = static_cast<uInt>(compressed.size());
  std::vector<std::uint8_t> out;
  std::uint8_t chunk[1 << 16];
  int status = Z_OK;
  while (status != Z_STREAM_END) {
    stream.next_out = chunk;
    stream.avail_out = sizeof(chunk);
    status = inflate(&stream, Z_NO_FLUSH);
    if (status != Z_OK && status != Z_STREAM_END) {
      const auto consumed = stream.total_in;
      inflateEnd(&stream);
      throw TruncatedError("gzip: corrupt or truncated stream in " + path.string() +
                           " at compressed offset " + std::to_string(consumed));
    }
    out.insert(out.end(), chunk, chunk + (sizeof(chunk) - stream.avail_out));
  }
  inflateEnd(&stream);
  return out;
}

}  // namespace

std::uint64_t IdxTensor::element_count() const {
  std::uint64_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

std::vector<std::uint8_t> read_maybe_gzip(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> raw((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed for " + path.string());
  if (raw.size() >= 2 && raw[0] == 0x1f && raw[1] == 0x8b) return gunzip(raw, path);
  return raw;
}

IdxTensor parse_idx(std::span<const std::uint8_t> raw) {
  if (raw.size() < 4) {
    throw TruncatedError("idx: header truncated at offset " + std::to_string(raw.size()) +
                         " (need 4 magic bytes)");
  }
  IdxTensor t;
  t.magic = read_be32(raw, 0);
  std::size_t rank = 0;
  if (t.magic == kIdxImageMagic) {
    rank = 3;
  } else if (t.magic == kIdxLabelMagic) {
    rank = 1;
  } else {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "0x%08x", t.magic);
    throw BadMagicError(std::string("idx: bad magic ") + buf + " at offset 0");
  }
  const std::size_t header = 4 + 4 * rank;
  if (raw.size() < header) {
    throw TruncatedError("idx: dimension header truncated at offset " +
                         std::to_string(raw.size()) + " (need " + std::to_string(header) +
                         " bytes)");
  }
  std::uint64_t count = 1;
  for (std::size_t d = 0; d < rank; ++d) {
    const std::size_t offset = 4 + 4 * d;
    const std::uint32_t dim = read_be32(raw, offset);
    t.dims.push_back(dim);
    if (dim != 0 && count > std::numeric_limits<std::uint64_t>::max() / dim) {
      throw DimensionOverflowError("idx: element count overflows at dimension field offset " +
                                   std::to_string(offset));
    }
    count *= dim;
  }
  if (count > std::numeric_limits<std::size_t>::max() - header) {
    throw DimensionOverflowError("idx: payload of " + std::to_string(count) +
                                 " bytes is not addressable (offset " + std::to_string(header) + ")");
  }
  const std::size_t available = raw.size() - header;
  if (available < count) {
    throw TruncatedError("idx: payload truncated: expected " + std::to_string(count) +
                         " bytes from offset " + std::to_string(header) + ", file ends at offset " +
                         std::to_string(raw.size()));
  }
  if (available > count) {
    throw FormatError("idx: " + std::to_string(available - count) +
                      " trailing bytes after payload end at offset " +
                      std::to_string(header + count));
  }
  t.bytes.assign(raw.begin() + static_cast<std::ptrdiff_t>(header), raw.end());
  return t;
}

IdxTensor parse_idx(const std::filesystem::path& path) {
  const auto raw = read_maybe_gzip(path);
  try {
    return parse_idx(std::span<const std::uint8_t>(raw));
  } catch (const BadMagicError& e) {
    throw BadMagicError(path.string() + ": " + e.what());
  } catch (const TruncatedError& e) {
    throw TruncatedError(path.string() + ": " + e.what());
  } catch (const DimensionOverflowError& e) {
    throw DimensionOverflowError(path.string() + ": " + e.what());
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> encode_idx(const IdxTensor& tensor) {
  std::vector<std::uint8_t> out;
  write_be32(out, tensor.magic);
  for (auto d : tensor.dims) write_be32(out, d);
  out.insert(out.end(), tensor.bytes.begin(), tensor.bytes.end());
  return out;
}

}  // namespace npvae
