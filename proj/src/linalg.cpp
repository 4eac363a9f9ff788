#include "aptkit/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "aptkit/numkit.hpp"

namespace aptkit {

namespace {

// One-sided Jacobi on a tall-or-square working copy: rotate column pairs of w
// until all pairs are orthogonal, accumulating the rotations into v. Column
// norms of w are then the singular values and normalized columns give u.
Svd jacobi_svd_tall(const Matrix& a) {
  const std::size_t m = a.rows, n = a.cols;
  Matrix w = a;
  Matrix v = identity(n);

  const double eps = 1e-14;
  const int max_sweeps = 60;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double app = 0.0, aqq = 0.0, apq = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
          const double wp = w(i, p), wq = w(i, q);
          app += wp * wp;
          aqq += wq * wq;
          apq += wp * wq;
        }
        if (std::fabs(apq) <= eps * std::sqrt(app * aqq) || apq == 0.0) continue;
        rotated = true;
        const double tau = (aqq - app) / (2.0 * apq);
        const double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::fabs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < m; ++i) {
          const double wp = w(i, p), wq = w(i, q);
          w(i, p) = c * wp - s * wq;
          w(i, q) = s * wp + c * wq;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double vp = v(i, p), vq = v(i, q);
          v(i, p) = c * vp - s * vq;
          v(i, q) = s * vp + c * vq;
        }
      }
    }
    if (!rotated) break;
  }

  std::vector<double> sing(n);
  for (std::size_t j = 0; j < n; ++j) {
    double norm = 0.0;
    for (std::size_t i = 0; i < m; ++i) norm += w(i, j) * w(i, j);
    sing[j] = std::sqrt(norm);
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return sing[x] > sing[y];
  });

  Svd out;
  out.u = Matrix(m, n);
  out.v = Matrix(n, n);
  out.s.resize(n);
  for (std::size_t jj = 0; jj < n; ++jj) {
    const std::size_t j = order[jj];
    out.s[jj] = sing[j];
    const double inv = sing[j] > 0.0 ? 1.0 / sing[j] : 0.0;
    for (std::size_t i = 0; i < m; ++i) out.u(i, jj) = w(i, j) * inv;
    for (std::size_t i = 0; i < n; ++i) out.v(i, jj) = v(i, j);
  }
  return out;
}

void require_finite(const char* op, const Matrix& a) {
  if (!a.all_finite())
    throw std::invalid_argument(std::string(op) + ": non-finite entries in " + a.shape());
}

}  // namespace

Svd svd(const Matrix& a) {
  require_finite("svd", a);
  if (a.rows == 0 || a.cols == 0) throw std::invalid_argument("svd: empty matrix " + a.shape());
  if (a.rows >= a.cols) return jacobi_svd_tall(a);
  Svd t = jacobi_svd_tall(transpose(a));
  return Svd{std::move(t.v), std::move(t.s), std::move(t.u)};
}

std::vector<double> singular_values(const Matrix& a) { return svd(a).s; }

std::size_t numerical_rank(const Matrix& a, double tol) {
  if (tol <= 0.0) throw std::invalid_argument("numerical_rank: tol must be positive");
  require_finite("numerical_rank", a);
  const std::vector<double> s = singular_values(a);
  if (s.empty() || s.front() == 0.0) return 0;
  const double cut = tol * s.front();
  std::size_t r = 0;
  for (double v : s)
    if (v > cut) ++r;
  return r;
}

double condition_number(const Matrix& a) {
  const std::vector<double> s = singular_values(a);
  if (s.empty() || s.back() == 0.0) return std::numeric_limits<double>::infinity();
  return s.front() / s.back();
}

Matrix invert(const Matrix& a) {
  if (a.rows != a.cols) throw std::invalid_argument("invert: non-square " + a.shape());
  require_finite("invert", a);
  const std::size_t n = a.rows;
  Matrix w = a;
  Matrix inv = identity(n);
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t i = col + 1; i < n; ++i)
      if (std::fabs(w(i, col)) > std::fabs(w(piv, col))) piv = i;
    if (w(piv, col) == 0.0) throw std::domain_error("invert: singular matrix");
    if (piv != col) {
      for (std::size_t j = 0; j < n; ++j) {
        std::swap(w(piv, j), w(col, j));
        std::swap(inv(piv, j), inv(col, j));
      }
    }
    const double d = 1.0 / w(col, col);
    for (std::size_t j = 0; j < n; ++j) {
      w(col, j) *= d;
      inv(col, j) *= d;
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (i == col) continue;
      const double f = w(i, col);
      if (f == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) {
        w(i, j) -= f * w(col, j);
        inv(i, j) -= f * inv(col, j);
      }
    }
  }
  return inv;
}

LowRankFactor low_rank_factor(const Matrix& a, std::size_t r) {
  const std::size_t k = std::min(a.rows, a.cols);
  if (r == 0 || r > k)
    throw std::invalid_argument("low_rank_factor: rank " + std::to_string(r) +
                                " out of range for " + a.shape());
  Svd d = svd(a);
  LowRankFactor f;
  f.w1 = Matrix(a.rows, r);
  f.w2 = Matrix(r, a.cols);
  for (std::size_t j = 0; j < r; ++j) {
    for (std::size_t i = 0; i < a.rows; ++i) f.w1(i, j) = d.u(i, j) * d.s[j];
    for (std::size_t i = 0; i < a.cols; ++i) f.w2(j, i) = d.v(i, j);
  }
  double res = 0.0;
  for (std::size_t j = r; j < k; ++j) res += d.s[j] * d.s[j];
  f.residual = std::sqrt(res);
  return f;
}

Matrix lstsq(const Matrix& a, const Matrix& b) {
  if (a.rows != b.rows) throw std::invalid_argument("lstsq: " + a.shape() + " vs " + b.shape());
  Svd d = svd(a);
  const double cut = 1e-12 * (d.s.empty() ? 0.0 : d.s.front());
  // x = v * diag(1/s) * u^T * b, dropping tiny singular directions.
  Matrix utb = matmul(transpose(d.u), b);
  for (std::size_t i = 0; i < d.s.size(); ++i) {
    const double inv = d.s[i] > cut ? 1.0 / d.s[i] : 0.0;
    for (std::size_t j = 0; j < utb.cols; ++j) utb(i, j) *= inv;
  }
  return matmul(d.v, utb);
}

}  // namespace aptkit
