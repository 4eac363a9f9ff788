#pragma once

#include <cstddef>
#include <vector>

#include "aptkit/matrix.hpp"

namespace aptkit {

// Full SVD a = u * diag(s) * v^T with u: m x k, s descending, v: n x k,
// k = min(m, n). One-sided Jacobi; adequate and robust at desk scale.
struct Svd {
  Matrix u;
  std::vector<double> s;
  Matrix v;
};

Svd svd(const Matrix& a);
std::vector<double> singular_values(const Matrix& a);

// Count of singular values above tol * s_max (relative threshold).
// Throws if a has non-finite entries or tol <= 0. Zero matrix has rank 0.
std::size_t numerical_rank(const Matrix& a, double tol = 1e-8);

// s_max / s_min; infinity for exactly singular input.
double condition_number(const Matrix& a);

// Gauss-Jordan with partial pivoting; throws std::domain_error on singular.
Matrix invert(const Matrix& a);

// Best rank-r factorization a ~= w1 * w2 (truncated SVD, w1: m x r, w2: r x n)
// plus the Frobenius norm of the discarded part.
struct LowRankFactor {
  Matrix w1;
  Matrix w2;
  double residual;
};

LowRankFactor low_rank_factor(const Matrix& a, std::size_t r);

// Least squares solve of a * x = b via SVD pseudoinverse.
Matrix lstsq(const Matrix& a, const Matrix& b);

}  // namespace aptkit
