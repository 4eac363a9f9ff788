#include "aptkit/matrix.hpp"

#include <cmath>
#include <stdexcept>

namespace aptkit {

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> init) {
  rows = init.size();
  cols = rows == 0 ? 0 : init.begin()->size();
  data.reserve(rows * cols);
  for (const auto& row : init) {
    if (row.size() != cols) throw std::invalid_argument("Matrix: ragged initializer");
    data.insert(data.end(), row.begin(), row.end());
  }
}

bool Matrix::all_finite() const {
  for (double v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

std::string Matrix::shape() const {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

Matrix zeros(std::size_t r, std::size_t c) { return Matrix(r, c); }

Matrix identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

bool same_shape(const Matrix& a, const Matrix& b) {
  return a.rows == b.rows && a.cols == b.cols;
}

bool bitwise_equal(const Matrix& a, const Matrix& b) {
  return same_shape(a, b) && a.data == b.data;
}

double max_abs(const Matrix& m) {
  double r = 0.0;
  for (double v : m.data) r = std::max(r, std::fabs(v));
  return r;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (!same_shape(a, b))
    throw std::invalid_argument("max_abs_diff: shape mismatch " + a.shape() + " vs " + b.shape());
  double r = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i)
    r = std::max(r, std::fabs(a.data[i] - b.data[i]));
  return r;
}

}  // namespace aptkit
