#include "aptkit/attention.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

#include "aptkit/flops.hpp"
#include "aptkit/numkit.hpp"

namespace aptkit {
namespace {

void check_params(const AttentionParams& params) {
  std::size_t d = params.w_q.rows;
  if (d == 0) throw std::invalid_argument("attention: empty projection");
  for (const Matrix* w : {&params.w_q, &params.w_k, &params.w_v, &params.w_o}) {
    if (w->rows != d || w->cols != d) {
      throw std::invalid_argument("attention: projections must all be d x d");
    }
  }
  if (params.heads == 0 || d % params.heads != 0) {
    throw std::invalid_argument("attention: heads must divide d");
  }
}

void check_tokens(const Matrix& x, const AttentionParams& params, const char* who) {
  if (x.cols != params.dim()) {
    throw std::invalid_argument(std::string(who) + ": token width " +
                                std::to_string(x.cols) + " != model dim " +
                                std::to_string(params.dim()));
  }
}

void require_single_head(const AttentionParams& params, const char* who) {
  if (params.heads != 1) {
    throw std::invalid_argument(std::string(who) +
                                ": single-head only; slice the projections and "
                                "call it once per head");
  }
}

double query_scale(const AttentionParams& params) {
  return 1.0 / std::sqrt(static_cast<double>(params.head_dim()));
}

}  // namespace

AttentionParams random_attention_params(std::size_t d, std::size_t heads, Rng& rng,
                                        double stddev) {
  AttentionParams params;
  params.w_q = random_normal(d, d, rng, 0.0, stddev);
  params.w_k = random_normal(d, d, rng, 0.0, stddev);
  params.w_v = random_normal(d, d, rng, 0.0, stddev);
  params.w_o = random_normal(d, d, rng, 0.0, stddev);
  params.heads = heads;
  check_params(params);
  return params;
}

Matrix self_attention(const Matrix& x, const AttentionParams& params) {
  check_params(params);
  check_tokens(x, params, "self_attention");
  const std::size_t hd = params.head_dim();

  Matrix q = scale(matmul(x, params.w_q), query_scale(params));
  Matrix k = matmul(x, params.w_k);
  Matrix v = matmul(x, params.w_v);

  Matrix ctx = zeros(x.rows, x.cols);
  for (std::size_t h = 0; h < params.heads; ++h) {
    Matrix qh = slice_cols(q, h * hd, (h + 1) * hd);
    Matrix kh = slice_cols(k, h * hd, (h + 1) * hd);
    Matrix vh = slice_cols(v, h * hd, (h + 1) * hd);
    Matrix probs = softmax_rows(matmul(qh, transpose(kh)));
    paste_cols(ctx, matmul(probs, vh), h * hd);
  }
  return matmul(ctx, params.w_o);
}

SelfAttentionCache self_attention_cached(const Matrix& x, const AttentionParams& params) {
  check_params(params);
  check_tokens(x, params, "self_attention_cached");
  require_single_head(params, "self_attention_cached");

  SelfAttentionCache cache;
  cache.q_scaled = scale(matmul(x, params.w_q), query_scale(params));
  cache.k = matmul(x, params.w_k);
  cache.v = matmul(x, params.w_v);
  Matrix scores = matmul(cache.q_scaled, transpose(cache.k));
  cache.probs = softmax_rows_stats(scores, cache.row_max, cache.row_sum);
  cache.ctx = matmul(cache.probs, cache.v);
  return cache;
}

Matrix finish_attention(const SelfAttentionCache& cache, const AttentionParams& params) {
  check_params(params);
  require_single_head(params, "finish_attention");
  return matmul(cache.ctx, params.w_o);
}

SelfAttentionCache apply_prompt_extension(const SelfAttentionCache& cache,
                                          const Matrix& prompt,
                                          const AttentionParams& params) {
  check_params(params);
  require_single_head(params, "apply_prompt_extension");
  if (prompt.rows == 0) return cache;
  check_tokens(prompt, params, "apply_prompt_extension");

  const std::size_t n = cache.q_scaled.rows;
  const std::size_t p = prompt.rows;

  Matrix pk = matmul(prompt, params.w_k);
  Matrix pv = matmul(prompt, params.w_v);
  Matrix prompt_scores = matmul(cache.q_scaled, transpose(pk));

  // Exponentiate the prompt scores under the cached row shifts, then fold the
  // new mass into each row's normalizer. `keep` is the factor that rescales
  // the old probabilities and the old context rows in one pass.
  Matrix prompt_exp(n, p);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      prompt_exp(i, j) = std::exp(prompt_scores(i, j) - cache.row_max[i]);
    }
  }
  record_exps(n * p);

  SelfAttentionCache out;
  out.q_scaled = cache.q_scaled;
  out.row_max = cache.row_max;
  out.row_sum.resize(n);
  std::vector<double> keep(n), inv_sum(n);
  for (std::size_t i = 0; i < n; ++i) {
    double added = 0.0;
    for (std::size_t j = 0; j < p; ++j) added += prompt_exp(i, j);
    out.row_sum[i] = cache.row_sum[i] + added;
    inv_sum[i] = 1.0 / out.row_sum[i];
    keep[i] = cache.row_sum[i] * inv_sum[i];
  }
  record_divs(n);

  Matrix prompt_probs = scale_rows(prompt_exp, inv_sum);
  out.probs = zeros(n, p + cache.probs.cols);
  paste_cols(out.probs, prompt_probs, 0);
  paste_cols(out.probs, scale_rows(cache.probs, keep), p);

  out.k = concat_rows(pk, cache.k);
  out.v = concat_rows(pv, cache.v);
  out.ctx = scale_rows(cache.ctx, keep);
  matmul_accumulate(prompt_probs, pv, out.ctx);
  return out;
}

PromptExtendedOutput prompt_extended_attention(const Matrix& x, const Matrix& prompt,
                                               const AttentionParams& params) {
  check_params(params);
  check_tokens(x, params, "prompt_extended_attention");
  require_single_head(params, "prompt_extended_attention");
  if (prompt.rows > 0) check_tokens(prompt, params, "prompt_extended_attention");

  Matrix joint = concat_rows(prompt, x);
  Matrix q = scale(matmul(joint, params.w_q), query_scale(params));
  Matrix k = matmul(joint, params.w_k);
  Matrix v = matmul(joint, params.w_v);
  Matrix probs = softmax_rows(matmul(q, transpose(k)));
  Matrix out = matmul(matmul(probs, v), params.w_o);

  PromptExtendedOutput split;
  split.p_out = slice_rows(out, 0, prompt.rows);
  split.x_out = slice_rows(out, prompt.rows, out.rows);
  return split;
}

AttentionBlocks decompose_attention(const Matrix& x, const Matrix& prompt,
                                    const AttentionParams& params) {
  check_params(params);
  check_tokens(x, params, "decompose_attention");
  check_tokens(prompt, params, "decompose_attention");
  require_single_head(params, "decompose_attention");

  const std::size_t n = x.rows;
  const std::size_t p = prompt.rows;

  Matrix joint = concat_rows(prompt, x);
  Matrix q = scale(matmul(joint, params.w_q), query_scale(params));
  Matrix k = matmul(joint, params.w_k);
  Matrix scores = matmul(q, transpose(k));
  std::vector<double> row_max, row_sum;
  Matrix probs = softmax_rows_stats(scores, row_max, row_sum);

  AttentionBlocks blocks;
  blocks.prompt_prompt = zeros(p, p);
  blocks.prompt_input = zeros(p, n);
  blocks.input_prompt = zeros(n, p);
  blocks.input_input = zeros(n, n);
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = 0; j < p; ++j) blocks.prompt_prompt(i, j) = probs(i, j);
    for (std::size_t j = 0; j < n; ++j) blocks.prompt_input(i, j) = probs(i, p + j);
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < p; ++j) blocks.input_prompt(i, j) = probs(p + i, j);
    for (std::size_t j = 0; j < n; ++j) blocks.input_input(i, j) = probs(p + i, p + j);
  }

  // Diagnostic mass split, recomputed from the raw scores under the shared
  // joint shift so the two gammas add up to the softmax normalizer exactly.
  blocks.gamma_prompt.resize(n);
  blocks.gamma_input.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double gp = 0.0, gi = 0.0;
    for (std::size_t j = 0; j < p; ++j) gp += std::exp(scores(p + i, j) - row_max[p + i]);
    for (std::size_t j = 0; j < n; ++j) gi += std::exp(scores(p + i, p + j) - row_max[p + i]);
    blocks.gamma_prompt[i] = gp;
    blocks.gamma_input[i] = gi;
  }
  return blocks;
}

TransformerLayer random_layer(std::size_t d, std::size_t heads, std::size_t ffn_mult,
                              Rng& rng, double stddev) {
  if (ffn_mult == 0) throw std::invalid_argument("random_layer: ffn_mult must be positive");
  TransformerLayer layer;
  layer.attn = random_attention_params(d, heads, rng, stddev);
  layer.w_ff1 = random_normal(d, ffn_mult * d, rng, 0.0, stddev);
  layer.w_ff2 = random_normal(ffn_mult * d, d, rng, 0.0, stddev);
  return layer;
}

Matrix ffn_forward(const Matrix& x, const TransformerLayer& layer) {
  return matmul(relu(matmul(x, layer.w_ff1)), layer.w_ff2);
}

Matrix layer_forward(const Matrix& x, const TransformerLayer& layer) {
  Matrix h = add(x, self_attention(x, layer.attn));
  return add(h, ffn_forward(h, layer));
}

PromptBank make_shallow_bank(Matrix prompt) {
  PromptBank bank;
  bank.mode = PromptBank::Mode::shallow;
  bank.prompts.push_back(std::move(prompt));
  return bank;
}

PromptBank make_deep_bank(std::vector<Matrix> prompts) {
  PromptBank bank;
  bank.mode = PromptBank::Mode::deep;
  bank.prompts = std::move(prompts);
  return bank;
}

Matrix deep_prompt_forward(const Matrix& x, const std::vector<TransformerLayer>& layers,
                           const PromptBank& bank, DeepPromptRoute route) {
  if (bank.mode != PromptBank::Mode::deep) {
    throw std::invalid_argument("deep_prompt_forward: bank mode must be deep");
  }
  if (bank.prompts.size() != layers.size()) {
    throw std::invalid_argument("deep_prompt_forward: need one prompt block per layer");
  }

  Matrix cur = x;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const TransformerLayer& layer = layers[l];
    Matrix attn_out;
    if (route == DeepPromptRoute::incremental) {
      SelfAttentionCache cache = self_attention_cached(cur, layer.attn);
      cache = apply_prompt_extension(cache, bank.prompts[l], layer.attn);
      attn_out = finish_attention(cache, layer.attn);
    } else {
      attn_out = prompt_extended_attention(cur, bank.prompts[l], layer.attn).x_out;
    }
    Matrix h = add(cur, attn_out);
    cur = add(h, ffn_forward(h, layer));
  }
  return cur;
}

Matrix shallow_prompt_forward(const Matrix& x, const std::vector<TransformerLayer>& layers,
                              const PromptBank& bank) {
  if (bank.mode != PromptBank::Mode::shallow) {
    throw std::invalid_argument("shallow_prompt_forward: bank mode must be shallow");
  }
  if (bank.prompts.size() != 1) {
    throw std::invalid_argument("shallow_prompt_forward: bank must hold exactly one block");
  }

  Matrix cur = concat_rows(bank.prompts[0], x);
  for (const TransformerLayer& layer : layers) cur = layer_forward(cur, layer);
  return cur;
}

}  // namespace aptkit
