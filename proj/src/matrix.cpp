#include "miml/matrix.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "miml/errors.hpp"

namespace miml {

namespace {
std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows) + "x" + std::to_string(m.cols);
}
}  // namespace

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rs) {
  Matrix m;
  m.rows = rs.size();
  m.cols = rs.size() ? rs.begin()->size() : 0;
  m.data.reserve(m.rows * m.cols);
  for (const auto& r : rs) {
    if (r.size() != m.cols) throw std::invalid_argument("Matrix::from_rows: ragged rows");
    m.data.insert(m.data.end(), r.begin(), r.end());
  }
  return m;
}

bool Matrix::all_finite() const {
  for (double v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows)
    throw std::invalid_argument("matmul: incompatible shapes " + shape_str(a) + " * " +
                                shape_str(b));
  Matrix out(a.rows, b.cols, 0.0);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* arow = a.row(i);
    double* orow = out.row(i);
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double aik = arow[k];
      const double* brow = b.row(k);
      for (std::size_t j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

Matrix transpose(const Matrix& m) {
  Matrix out(m.cols, m.rows);
  for (std::size_t i = 0; i < m.rows; ++i)
    for (std::size_t j = 0; j < m.cols; ++j) out(j, i) = m(i, j);
  return out;
}

ReluResult relu(const Matrix& x) {
  ReluResult r;
  r.value = x;
  r.mask.assign(x.size(), 0);
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    if (x.data[i] > 0.0) {
      r.mask[i] = 1;
    } else {
      r.value.data[i] = 0.0;
    }
  }
  return r;
}

RowMaxResult row_max_argmax(const Matrix& x) {
  if (x.rows == 0 || x.cols == 0)
    throw std::invalid_argument("row_max_argmax: empty input " + shape_str(x));
  RowMaxResult r;
  r.values.assign(x.cols, 0.0);
  r.indices.assign(x.cols, 0);
  for (std::size_t c = 0; c < x.cols; ++c) {
    double best = x(0, c);
    std::size_t best_row = 0;
    for (std::size_t i = 1; i < x.rows; ++i) {
      if (x(i, c) > best) {
        best = x(i, c);
        best_row = i;
      }
    }
    r.values[c] = best;
    r.indices[c] = best_row;
  }
  return r;
}

Matrix finite_diff_grad(const std::function<double(const Matrix&)>& f, const Matrix& x, double h,
                        bool relative_step) {
  if (h <= 0.0) throw std::invalid_argument("finite_diff_grad: step must be positive");
  Matrix grad(x.rows, x.cols);
  Matrix probe = x;
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    const double step = relative_step ? h * (1.0 + std::fabs(x.data[i])) : h;
    const double orig = probe.data[i];
    probe.data[i] = orig + step;
    const double fp = f(probe);
    probe.data[i] = orig - step;
    const double fm = f(probe);
    probe.data[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw NumericError("finite_diff_grad: non-finite evaluation at entry " + std::to_string(i));
    grad.data[i] = (fp - fm) / (2.0 * step);
  }
  return grad;
}

}  // namespace miml
