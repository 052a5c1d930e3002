#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>

#include "npvae/matrix.hpp"

namespace npvae {

/// White gap between tiles, in pixels.
inline constexpr std::size_t kTileGap = 2;

/// Binary PGM ("P5") mosaic of square greyscale tiles laid out row-major on
/// a rows×cols grid. Each image row holds side² values in [0,1]; pixels are
/// round(v·255). Throws ValidationError for out-of-range values.
std::string encode_pgm(const Matrix& images, std::size_t rows, std::size_t cols);
void write_pgm(const Matrix& images, std::size_t rows, std::size_t cols,
               const std::filesystem::path& path);

/// Header "x0,...,x{d-1},label" then one line per point, reals printed
/// with 17 significant digits.
std::string encode_embedding_csv(const Matrix& x, std::span<const int> labels,
                                 const std::string& column_prefix = "x");
void write_embedding_csv(const Matrix& x, std::span<const int> labels,
                         const std::filesystem::path& path,
                         const std::string& column_prefix = "x");

/// Shortest text that parses back to `v` exactly (%.17g).
std::string format_real(double v);

void write_text_file(const std::filesystem::path& path, const std::string& contents);

}  // namespace npvae
