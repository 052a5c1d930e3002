#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace npvae {

inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;
inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;

/// Raw contents of an IDX file of unsigned bytes.
struct IdxTensor {
  std::uint32_t magic = 0;
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> bytes;

  std::uint64_t element_count() const;
};

/// Reads a whole file, inflating it first when it starts with the gzip
/// signature 0x1f 0x8b.
std::vector<std::uint8_t> read_maybe_gzip(const std::filesystem::path& path);

/// Parses an in-memory IDX buffer. Only the ubyte image (rank 3) and label
/// (rank 1) containers are accepted. Throws BadMagicError, TruncatedError or
/// DimensionOverflowError, each naming the byte offset involved.
IdxTensor parse_idx(std::span<const std::uint8_t> raw);
IdxTensor parse_idx(const std::filesystem::path& path);

/// Serializes an IDX container (uncompressed).
std::vector<std::uint8_t> encode_idx(const IdxTensor& tensor);

}  // namespace npvae
