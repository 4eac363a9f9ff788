#include "aptkit/numkit.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "aptkit/flops.hpp"

namespace aptkit {

namespace {

[[noreturn]] void shape_error(const char* op, const Matrix& a, const Matrix& b) {
  throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape() + " vs " +
                              b.shape());
}

void require_nonempty(const char* op, const Matrix& m) {
  if (m.rows == 0 || m.cols == 0)
    throw std::invalid_argument(std::string(op) + ": empty matrix " + m.shape());
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows) shape_error("matmul", a, b);
  Matrix c(a.rows, b.cols);
  matmul_accumulate(a, b, c);
  return c;
}

void matmul_accumulate(const Matrix& a, const Matrix& b, Matrix& c) {
  if (a.cols != b.rows) shape_error("matmul", a, b);
  if (c.rows != a.rows || c.cols != b.cols) shape_error("matmul_accumulate", a, c);
  record_macs(static_cast<std::uint64_t>(a.rows) * a.cols * b.cols);
  const std::size_t n = a.rows, k = a.cols, m = b.cols;
  for (std::size_t i = 0; i < n; ++i) {
    const double* arow = a.data.data() + i * k;
    double* crow = c.data.data() + i * m;
    for (std::size_t l = 0; l < k; ++l) {
      const double av = arow[l];
      if (av == 0.0) continue;
      const double* brow = b.data.data() + l * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
}

Matrix transpose(const Matrix& m) {
  Matrix t(m.cols, m.rows);
  for (std::size_t i = 0; i < m.rows; ++i)
    for (std::size_t j = 0; j < m.cols; ++j) t(j, i) = m(i, j);
  return t;
}

Matrix add(const Matrix& a, const Matrix& b) {
  if (!same_shape(a, b)) shape_error("add", a, b);
  record_adds(a.size());
  Matrix c(a.rows, a.cols);
  for (std::size_t i = 0; i < a.data.size(); ++i) c.data[i] = a.data[i] + b.data[i];
  return c;
}

Matrix sub(const Matrix& a, const Matrix& b) {
  if (!same_shape(a, b)) shape_error("sub", a, b);
  record_adds(a.size());
  Matrix c(a.rows, a.cols);
  for (std::size_t i = 0; i < a.data.size(); ++i) c.data[i] = a.data[i] - b.data[i];
  return c;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  if (!same_shape(a, b)) shape_error("hadamard", a, b);
  record_macs(a.size());
  Matrix c(a.rows, a.cols);
  for (std::size_t i = 0; i < a.data.size(); ++i) c.data[i] = a.data[i] * b.data[i];
  return c;
}

Matrix scale(const Matrix& m, double c) {
  record_macs(m.size());
  Matrix r(m.rows, m.cols);
  for (std::size_t i = 0; i < m.data.size(); ++i) r.data[i] = m.data[i] * c;
  return r;
}

Matrix softmax_rows(const Matrix& m) {
  std::vector<double> mx, sm;
  return softmax_rows_stats(m, mx, sm);
}

Matrix softmax_rows_stats(const Matrix& m, std::vector<double>& out_row_max,
                          std::vector<double>& out_row_sum) {
  require_nonempty("softmax_rows", m);
  record_exps(m.size());
  record_divs(m.rows);
  out_row_max.assign(m.rows, 0.0);
  out_row_sum.assign(m.rows, 0.0);
  Matrix r(m.rows, m.cols);
  for (std::size_t i = 0; i < m.rows; ++i) {
    double mx = m(i, 0);
    for (std::size_t j = 1; j < m.cols; ++j) mx = std::max(mx, m(i, j));
    double s = 0.0;
    for (std::size_t j = 0; j < m.cols; ++j) {
      const double e = std::exp(m(i, j) - mx);
      r(i, j) = e;
      s += e;
    }
    const double inv = 1.0 / s;
    for (std::size_t j = 0; j < m.cols; ++j) r(i, j) *= inv;
    out_row_max[i] = mx;
    out_row_sum[i] = s;
  }
  return r;
}

Matrix relu(const Matrix& m) {
  record_cmps(m.size());
  Matrix r(m.rows, m.cols);
  for (std::size_t i = 0; i < m.data.size(); ++i) r.data[i] = m.data[i] > 0.0 ? m.data[i] : 0.0;
  return r;
}

double global_max(const Matrix& m) {
  require_nonempty("global_max", m);
  record_cmps(m.size());
  double r = m.data[0];
  for (double v : m.data) r = std::max(r, v);
  return r;
}

std::pair<std::size_t, std::size_t> global_argmax(const Matrix& m) {
  require_nonempty("global_argmax", m);
  std::size_t best = 0;
  for (std::size_t i = 1; i < m.data.size(); ++i)
    if (m.data[i] > m.data[best]) best = i;
  return {best / m.cols, best % m.cols};
}

std::vector<double> row_max(const Matrix& m) {
  require_nonempty("row_max", m);
  std::vector<double> r(m.rows);
  for (std::size_t i = 0; i < m.rows; ++i) {
    double mx = m(i, 0);
    for (std::size_t j = 1; j < m.cols; ++j) mx = std::max(mx, m(i, j));
    r[i] = mx;
  }
  return r;
}

double sum(const Matrix& m) {
  double s = 0.0;
  for (double v : m.data) s += v;
  return s;
}

double frobenius_norm(const Matrix& m) {
  double s = 0.0;
  for (double v : m.data) s += v * v;
  return std::sqrt(s);
}

Matrix concat_rows(const Matrix& a, const Matrix& b) {
  if (a.rows == 0) return b;
  if (b.rows == 0) return a;
  if (a.cols != b.cols) shape_error("concat_rows", a, b);
  Matrix c(a.rows + b.rows, a.cols);
  std::copy(a.data.begin(), a.data.end(), c.data.begin());
  std::copy(b.data.begin(), b.data.end(), c.data.begin() + a.data.size());
  return c;
}

Matrix slice_rows(const Matrix& m, std::size_t begin, std::size_t end) {
  if (begin > end || end > m.rows)
    throw std::invalid_argument("slice_rows: [" + std::to_string(begin) + ", " +
                                std::to_string(end) + ") out of range for " + m.shape());
  Matrix r(end - begin, m.cols);
  std::copy(m.data.begin() + begin * m.cols, m.data.begin() + end * m.cols, r.data.begin());
  return r;
}

Matrix slice_cols(const Matrix& m, std::size_t begin, std::size_t end) {
  if (begin > end || end > m.cols)
    throw std::invalid_argument("slice_cols: [" + std::to_string(begin) + ", " +
                                std::to_string(end) + ") out of range for " + m.shape());
  Matrix r(m.rows, end - begin);
  for (std::size_t i = 0; i < m.rows; ++i)
    std::copy(m.data.begin() + i * m.cols + begin, m.data.begin() + i * m.cols + end,
              r.data.begin() + i * r.cols);
  return r;
}

void paste_cols(Matrix& dst, const Matrix& src, std::size_t col_begin) {
  if (src.rows != dst.rows || col_begin + src.cols > dst.cols)
    shape_error("paste_cols", dst, src);
  for (std::size_t i = 0; i < src.rows; ++i)
    std::copy(src.data.begin() + i * src.cols, src.data.begin() + (i + 1) * src.cols,
              dst.data.begin() + i * dst.cols + col_begin);
}

Matrix scale_rows(const Matrix& m, const std::vector<double>& factors) {
  if (factors.size() != m.rows)
    throw std::invalid_argument("scale_rows: " + std::to_string(factors.size()) +
                                " factors for " + m.shape());
  Matrix r(m.rows, m.cols);
  for (std::size_t i = 0; i < m.rows; ++i)
    for (std::size_t j = 0; j < m.cols; ++j) r(i, j) = m(i, j) * factors[i];
  return r;
}

}  // namespace aptkit
