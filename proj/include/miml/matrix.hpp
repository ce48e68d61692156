#pragma once

#include <cassert>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <vector>

namespace miml {

using Vector = std::vector<double>;

// Dense row-major matrix of doubles. Double precision throughout: the
// gradient checks resolve relative errors at the 1e-5 level.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;  // rows * cols, row-major

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rs);

  double& operator()(std::size_t r, std::size_t c) {
    assert(r < rows && c < cols);
    return data[r * cols + c];
  }
  double operator()(std::size_t r, std::size_t c) const {
    assert(r < rows && c < cols);
    return data[r * cols + c];
  }

  const double* row(std::size_t r) const { return data.data() + r * cols; }
  double* row(std::size_t r) { return data.data() + r * cols; }

  std::size_t size() const { return data.size(); }
  bool all_finite() const;

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows == b.rows && a.cols == b.cols && a.data == b.data;
  }
};

// Contiguous depth x rows x cols tensor; houses the k x m x d graph input.
struct Tensor3 {
  std::size_t depth = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Tensor3() = default;
  Tensor3(std::size_t d, std::size_t r, std::size_t c, double fill = 0.0)
      : depth(d), rows(r), cols(c), data(d * r * c, fill) {}

  double& operator()(std::size_t s, std::size_t r, std::size_t c) {
    assert(s < depth && r < rows && c < cols);
    return data[(s * rows + r) * cols + c];
  }
  double operator()(std::size_t s, std::size_t r, std::size_t c) const {
    assert(s < depth && r < rows && c < cols);
    return data[(s * rows + r) * cols + c];
  }

  const double* row(std::size_t s, std::size_t r) const {
    return data.data() + (s * rows + r) * cols;
  }
  double* row(std::size_t s, std::size_t r) { return data.data() + (s * rows + r) * cols; }

  friend bool operator==(const Tensor3& a, const Tensor3& b) {
    return a.depth == b.depth && a.rows == b.rows && a.cols == b.cols && a.data == b.data;
  }
};

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& m);

// Elementwise max(0, x). The mask records strictly positive entries, so the
// subgradient at exactly 0 is 0.
struct ReluResult {
  Matrix value;
  std::vector<std::uint8_t> mask;  // 1 where x > 0
};
ReluResult relu(const Matrix& x);

// Per-column max over rows with the achieving row index; ties go to the
// lowest row index so backward routing is deterministic.
struct RowMaxResult {
  Vector values;                    // length cols
  std::vector<std::size_t> indices; // length cols
};
RowMaxResult row_max_argmax(const Matrix& x);

// Central differences (f(x+h*e) - f(x-h*e)) / (2h) per entry. With
// relative_step the per-entry step is h*(1+|x_e|).
Matrix finite_diff_grad(const std::function<double(const Matrix&)>& f, const Matrix& x, double h,
                        bool relative_step = false);

}  // namespace miml
