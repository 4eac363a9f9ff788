#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "aptkit/attention.hpp"
#include "aptkit/matrix.hpp"
#include "aptkit/rng.hpp"

namespace aptkit {

// Trainable state of one approximated-prompt module. The module never
// projects its prompts: `p_v` already lives in value space, and the low-rank
// pair `w1 * w2` reconstructs the key table from it. `log_scale` gates the
// whole output through exp(log_scale), so the gate is positive by
// construction and starts at exactly 1.
struct AptParams {
  Matrix p_v;        // p x d
  Matrix w1;         // d x r
  Matrix w2;         // r x d
  double log_scale = 0.0;

  std::size_t prompt_len() const { return p_v.rows; }
  std::size_t dim() const { return p_v.cols; }
  std::size_t rank() const { return w1.cols; }
};

// How the scalar gate on the ReLU scores is chosen. `global` uses the largest
// entry of the reconstructed key table, a single input-independent number.
// `per_row` instead gates each query row by its own largest raw score; it is
// input-dependent and costs one comparison per score plus one multiply per
// output entry.
enum class AlphaMode { global, per_row };

// Reconstructed key table p_v * w1 * w2 + p_v, shape p x d.
Matrix approx_keys(const AptParams& params);

// The additive update alpha * relu(x * keys^T) * p_v. No 1/sqrt(d) factor
// anywhere: the ReLU path replaces the softmax, not the scores feeding one.
// An empty prompt table contributes nothing and costs nothing.
Matrix apt_delta(const Matrix& x, const AptParams& params,
                 AlphaMode mode = AlphaMode::global);

// exp(log_scale) * (self_attention(x) + apt_delta(x)).
Matrix apt_attention(const Matrix& x, const AttentionParams& attn,
                     const AptParams& params, AlphaMode mode = AlphaMode::global);

// Per-row factor gamma_prompt / (gamma_input + gamma_prompt): the share of
// attention mass the prompts captured from each x query row.
std::vector<double> diffusion_scale(const AttentionBlocks& blocks);

// What prompting adds to each attended input row before the output
// projection, computed directly: the prompt-mass share times the
// prompt-restricted softmax times the projected prompt values. Adding this to
// (1 - share) * self-attention rows reproduces the joint pass exactly.
// Empty prompt: zero matrix of shape n x d.
Matrix exact_diffusion(const Matrix& x, const Matrix& prompt, const AttentionParams& params);

// The diffusion term with its per-row mass share dropped and the query/key
// projections collapsed into one matrix: softmax(x * w_q * w_k^T * prompt^T)
// applied to the projected prompt values. This is the quantity the low-rank
// module approximates. Empty prompt: zero matrix of shape n x d.
Matrix aggregate_softmax(const Matrix& x, const Matrix& prompt, const AttentionParams& params);

// prompt * (w_k * w_q^T - w_v): the gap between the key table the aggregated
// softmax needs and the value table the module stores. Its rank is at most
// rank(w_k * w_q^T) + rank(w_v) regardless of p.
Matrix vk_transform_gap(const Matrix& prompt, const AttentionParams& params);

// Result of trying to represent the aggregated softmax with a rank-r module
// on one concrete instance.
struct RepresentationCheck {
  AptParams params;        // constructed module, gate left at 1
  double factor_residual;  // max abs error of the rank-r factorization itself
  double max_abs_error;    // max abs deviation of the module's table product
  bool passed;             // max_abs_error <= tol
};

// Builds the module whose key table reproduces the aggregated-softmax keys:
// factors w_v^{-1} * (w_k * w_q^T - w_v) at rank r and sets p_v = prompt *
// w_v. With r = d the factorization is exact and the module reproduces
// softmax-weighted prompt values to roundoff; below d the residuals measure
// what the rank budget loses on this instance. Throws if w_v is singular,
// reporting its condition number.
RepresentationCheck exact_representation_check(const Matrix& x, const Matrix& prompt,
                                               const AttentionParams& attn, std::size_t r,
                                               double tol);

// Fresh module of shape (p, d, r). With identity_start (the default), p_v is
// zero, so the update and all its gradients vanish: the module is an exact
// no-op on the attention output, but it cannot train. With identity_start
// false, p_v gets the same small-noise init as w1 and only w2 = 0 keeps the
// key table at p_v; the update is small but alive. log_scale starts at 0
// either way.
AptParams init_apt(std::size_t p, std::size_t d, std::size_t r, Rng& rng,
                   bool identity_start = true, double stddev = 0.02);

void save_apt(const std::filesystem::path& path, const AptParams& params);
AptParams load_apt(const std::filesystem::path& path);

}  // namespace aptkit
