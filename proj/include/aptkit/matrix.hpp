#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

namespace aptkit {

// Dense row-major matrix of doubles; the only value type in the toolkit.
// A matrix may have zero rows (empty prompt banks), never a cols/data mismatch.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
  Matrix(std::initializer_list<std::initializer_list<double>> init);

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }
  bool all_finite() const;
  std::string shape() const;
};

Matrix zeros(std::size_t r, std::size_t c);
Matrix identity(std::size_t n);

bool same_shape(const Matrix& a, const Matrix& b);
bool bitwise_equal(const Matrix& a, const Matrix& b);
double max_abs(const Matrix& m);
double max_abs_diff(const Matrix& a, const Matrix& b);

}  // namespace aptkit
