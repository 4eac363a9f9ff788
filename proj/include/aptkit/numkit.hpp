#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "aptkit/matrix.hpp"

namespace aptkit {

// Dense kernels. All throw std::invalid_argument on shape mismatch, naming
// both shapes. Counting behavior is documented in flops.hpp.

Matrix matmul(const Matrix& a, const Matrix& b);
// c += a*b in place; same MAC count as matmul (the add is the accumulate).
void matmul_accumulate(const Matrix& a, const Matrix& b, Matrix& c);
Matrix transpose(const Matrix& m);
Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& m, double c);

// Numerically stable row-wise softmax (max-subtracted). Empty input throws.
Matrix softmax_rows(const Matrix& m);
// Softmax that also reports the per-row max and per-row sum of shifted
// exponentials; identical counting to softmax_rows. Used by the
// prompt-extension path, which needs the partition pieces.
Matrix softmax_rows_stats(const Matrix& m, std::vector<double>& out_row_max,
                          std::vector<double>& out_row_sum);

Matrix relu(const Matrix& m);

double global_max(const Matrix& m);
// Row-major index of the maximum entry; ties resolve to the lowest index.
std::pair<std::size_t, std::size_t> global_argmax(const Matrix& m);
std::vector<double> row_max(const Matrix& m);

double sum(const Matrix& m);
double frobenius_norm(const Matrix& m);

Matrix concat_rows(const Matrix& a, const Matrix& b);
Matrix slice_rows(const Matrix& m, std::size_t begin, std::size_t end);
Matrix slice_cols(const Matrix& m, std::size_t begin, std::size_t end);
void paste_cols(Matrix& dst, const Matrix& src, std::size_t col_begin);

// Multiply row i by factors[i]. Uncounted: only used to distribute softmax
// renormalizations, which the convention folds into the per-row divide.
Matrix scale_rows(const Matrix& m, const std::vector<double>& factors);

}  // namespace aptkit
