#pragma once

#include <cstddef>
#include <vector>

#include "aptkit/matrix.hpp"
#include "aptkit/rng.hpp"

namespace aptkit {

// Projection weights for one self-attention block. All four matrices are
// d x d; `heads` must divide d. Weights are frozen: nothing in this module
// mutates them. Queries are scaled by 1/sqrt(d/heads) once, right after
// projection, so score matrices never carry a separate scale.
struct AttentionParams {
  Matrix w_q, w_k, w_v, w_o;
  std::size_t heads = 1;

  std::size_t dim() const { return w_q.rows; }
  std::size_t head_dim() const { return w_q.rows / heads; }
};

AttentionParams random_attention_params(std::size_t d, std::size_t heads, Rng& rng,
                                        double stddev = 0.02);

// Standard multi-head self-attention, output projection included.
Matrix self_attention(const Matrix& x, const AttentionParams& params);

// Intermediate state of a single-head self-attention pass, kept so prompts
// can later be merged into the same softmax without recomputing it.
// `ctx` is the attention-weighted value sum before the output projection.
// `row_max` / `row_sum` are the shift and the shifted-exponential sum of each
// softmax row.
struct SelfAttentionCache {
  Matrix q_scaled;  // n x d
  Matrix k, v;      // key/value rows, one per attended position
  Matrix probs;     // n x keys
  Matrix ctx;       // n x d
  std::vector<double> row_max, row_sum;
};

// Single-head only (throws otherwise).
SelfAttentionCache self_attention_cached(const Matrix& x, const AttentionParams& params);
Matrix finish_attention(const SelfAttentionCache& cache, const AttentionParams& params);

// Merges p prompt rows into a cached attention pass without touching the
// existing scores: projects the prompts to keys/values, exponentiates their
// scores under the cache's existing row shift and renormalizes. Exactly
//   2*p*d*d + 2*n*p*d MACs, n*p exps, n divs
// on top of the cached pass; an empty prompt returns the cache unchanged at
// zero cost. Prompt columns come first in the returned probability matrix,
// matching the prepend order used everywhere else. Note the returned row_max
// is inherited from the cache rather than recomputed over the joint row;
// softmax is shift-invariant, so the probabilities agree with a joint pass up
// to roundoff, but extreme prompt scores that exceed the cached shift lose
// overflow protection.
SelfAttentionCache apply_prompt_extension(const SelfAttentionCache& cache,
                                          const Matrix& prompt,
                                          const AttentionParams& params);

// Joint attention over the concatenated sequence [prompt; x], returned as the
// split output rows. Single-head only. Every query row is computed
// independently from the same key/value rows, so x_out never depends on
// whether the prompt rows were materialized.
struct PromptExtendedOutput {
  Matrix x_out;  // n x d
  Matrix p_out;  // p x d
};

PromptExtendedOutput prompt_extended_attention(const Matrix& x, const Matrix& prompt,
                                               const AttentionParams& params);

// Joint softmax split into its four query/key blocks. Rows of the joint
// score matrix are ordered [prompt; x]. For each x query row i, gamma_input
// and gamma_prompt hold the sums of shifted score exponentials over the input
// and prompt key columns, computed under the shared joint row shift; their
// ratio against the total is how much attention mass the prompts drew from
// that row.
struct AttentionBlocks {
  Matrix input_input;    // n x n
  Matrix input_prompt;   // n x p
  Matrix prompt_input;   // p x n
  Matrix prompt_prompt;  // p x p
  std::vector<double> gamma_input, gamma_prompt;  // one per x query row
};

// Single-head only: the block decomposition is a statement about one
// attention map. Multi-head callers slice their projections and invoke this
// once per head.
AttentionBlocks decompose_attention(const Matrix& x, const Matrix& prompt,
                                    const AttentionParams& params);

// One encoder layer: residual attention followed by a residual two-layer
// ReLU feed-forward. No normalization; the toolkit operates at scales where
// it is unnecessary and it would only blur the operation counts.
struct TransformerLayer {
  AttentionParams attn;
  Matrix w_ff1;  // d x (ffn_mult * d)
  Matrix w_ff2;  // (ffn_mult * d) x d
};

TransformerLayer random_layer(std::size_t d, std::size_t heads, std::size_t ffn_mult,
                              Rng& rng, double stddev = 0.02);

Matrix ffn_forward(const Matrix& x, const TransformerLayer& layer);
Matrix layer_forward(const Matrix& x, const TransformerLayer& layer);

// Prompt tokens to inject into a stack. Shallow banks hold exactly one block,
// prepended before layer 0, after which the prompt rows travel the stack as
// ordinary tokens. Deep banks hold one block per layer; each layer gets its
// fresh block and the prompt output rows never survive into the next layer.
struct PromptBank {
  enum class Mode { shallow, deep };
  Mode mode = Mode::deep;
  std::vector<Matrix> prompts;
};

PromptBank make_shallow_bank(Matrix prompt);
PromptBank make_deep_bank(std::vector<Matrix> prompts);

enum class DeepPromptRoute {
  // Cached pass over x plus an incremental prompt merge; never forms prompt
  // query rows. This is the cheap route.
  incremental,
  // Materializes the prompt query rows through the attention, then discards
  // them before the feed-forward. Same map, more work.
  materialize,
};

// Deep prompting across a stack: each layer attends over [prompt_l; x] and
// drops the prompt output rows before its feed-forward; the result always has
// exactly n rows. The two routes agree up to roundoff and differ in cost
// only.
Matrix deep_prompt_forward(const Matrix& x, const std::vector<TransformerLayer>& layers,
                           const PromptBank& bank,
                           DeepPromptRoute route = DeepPromptRoute::incremental);

// Shallow prompting: returns all p + n output rows, prompt rows first.
Matrix shallow_prompt_forward(const Matrix& x, const std::vector<TransformerLayer>& layers,
                              const PromptBank& bank);

}  // namespace aptkit
