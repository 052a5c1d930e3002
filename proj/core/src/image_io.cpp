#include "npvae/image_io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "npvae/errors.hpp"

namespace npvae {

std::string encode_pgm(const Matrix& images, std::size_t rows, std::size_t cols) {
  if (rows == 0 || cols == 0 || images.rows() != rows * cols) {
    throw DimensionError("write_pgm: " + std::to_string(images.rows()) +
                         " images do not fill a " + std::to_string(rows) + "x" +
                         std::to_string(cols) + " layout");
  }
  const auto side = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(images.cols()))));
  if (side == 0 || side * side != images.cols()) {
    throw DimensionError("write_pgm: image length " + std::to_string(images.cols()) +
                         " is not a square");
  }
  const std::size_t width = cols * side + (cols - 1) * kTileGap;
  const std::size_t height = rows * side + (rows - 1) * kTileGap;

  std::string header = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  std::string out = header;
  out.resize(header.size() + width * height, static_cast<char>(255));
  auto* pixels = reinterpret_cast<unsigned char*>(out.data() + header.size());

  for (std::size_t t = 0; t < images.rows(); ++t) {
    const std::size_t top = (t / cols) * (side + kTileGap);
    const std::size_t left = (t % cols) * (side + kTileGap);
    auto img = images.row(t);
    for (std::size_t p = 0; p < img.size(); ++p) {
      const double v = img[p];
      if (!(v >= 0.0 && v <= 1.0)) {
        throw ValidationError("write_pgm: value " + std::to_string(v) + " in image " +
                              std::to_string(t) + " is outside [0, 1]");
      }
      pixels[(top + p / side) * width + left + p % side] =
          static_cast<unsigned char>(std::lround(v * 255.0));
    }
  }
  return out;
}

void write_pgm(const Matrix& images, std::size_t rows, std::size_t cols,
               const std::filesystem::path& path) {
  write_text_file(path, encode_pgm(images, rows, cols));
}

std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string encode_embedding_csv(const Matrix& x, std::span<const int> labels,
                                 const std::string& column_prefix) {
  if (labels.size() != x.rows()) {
    throw DimensionError("write_embedding_csv: " + std::to_string(x.rows()) + " points but " +
                         std::to_string(labels.size()) + " labels");
  }
  std::string out;
  for (std::size_t k = 0; k < x.cols(); ++k) out += column_prefix + std::to_string(k) + ",";
  out += "label\n";
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (double v : x.row(i)) out += format_real(v) + ",";
    out += std::to_string(labels[i]) + "\n";
  }
  return out;
}

void write_embedding_csv(const Matrix& x, std::span<const int> labels,
                         const std::filesystem::path& path, const std::string& column_prefix) {
  write_text_file(path, encode_embedding_csv(x, labels, column_prefix));
}

void write_text_file(const std::filesystem::path& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace npvae
