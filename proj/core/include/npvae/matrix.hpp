#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace npvae {

/// Dense row-major matrix of doubles. The buffer always holds rows*cols
/// values.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  void fill(double v);

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

std::string shape_string(const Matrix& m);

// Products. Every reduction runs left to right over the shared index.
Matrix matmul(const Matrix& a, const Matrix& b);
/// aᵀ·b without materializing the transpose.
Matrix matmul_at(const Matrix& a, const Matrix& b);
/// a·bᵀ.
Matrix matmul_bt(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);

// Elementwise.
Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double s);
Matrix add_scalar(const Matrix& a, double s);
void add_inplace(Matrix& a, const Matrix& b);
void axpy_inplace(Matrix& a, double s, const Matrix& b);
/// Adds a 1×cols row to every row of `a`.
Matrix add_row_broadcast(const Matrix& a, const Matrix& row);
Matrix map(const Matrix& a, const std::function<double(double)>& f);
Matrix exp(const Matrix& a);
Matrix log(const Matrix& a);
Matrix tanh(const Matrix& a);
Matrix sigmoid(const Matrix& a);

// Reductions.
Matrix row_sums(const Matrix& a);  // rows×1
Matrix col_sums(const Matrix& a);  // 1×cols
double sum(const Matrix& a);
double max_abs_diff(const Matrix& a, const Matrix& b);
bool all_finite(const Matrix& a);

// Slicing and stacking.
Matrix slice_rows(const Matrix& a, std::size_t begin, std::size_t end);
Matrix slice_cols(const Matrix& a, std::size_t begin, std::size_t end);
Matrix gather_rows(const Matrix& a, std::span<const std::size_t> indices);
Matrix vstack(const Matrix& top, const Matrix& bottom);
Matrix hstack(const Matrix& left, const Matrix& right);

/// Squared Euclidean distances between all row pairs, by direct
/// subtraction so every entry is non-negative and the diagonal is exactly 0.
Matrix pairwise_sqdist(const Matrix& x);

/// Row-wise softmax that excludes the diagonal. Output diagonal is 0 and
/// each row is a convex combination of the off-diagonal entries, stabilized
/// by subtracting the off-diagonal row maximum. Needs n >= 2.
Matrix row_softmax_masked(const Matrix& logits);

}  // namespace npvae
