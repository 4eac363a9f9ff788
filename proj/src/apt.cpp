#include "aptkit/apt.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

#include "aptkit/flops.hpp"
#include "aptkit/linalg.hpp"
#include "aptkit/matrix_io.hpp"
#include "aptkit/numkit.hpp"

namespace aptkit {
namespace {

void check_apt(const AptParams& params, const char* who) {
  const std::size_t d = params.p_v.cols;
  if (params.w1.rows != d || params.w2.cols != d ||
      params.w1.cols != params.w2.rows) {
    throw std::invalid_argument(std::string(who) +
                                ": table is p x d, factors must be d x r and r x d");
  }
}

void check_tokens_apt(const Matrix& x, const AptParams& params, const char* who) {
  if (x.cols != params.dim()) {
    throw std::invalid_argument(std::string(who) + ": token width " +
                                std::to_string(x.cols) + " != module dim " +
                                std::to_string(params.dim()));
  }
}

}  // namespace

Matrix approx_keys(const AptParams& params) {
  check_apt(params, "approx_keys");
  return add(matmul(matmul(params.p_v, params.w1), params.w2), params.p_v);
}

Matrix apt_delta(const Matrix& x, const AptParams& params, AlphaMode mode) {
  check_apt(params, "apt_delta");
  check_tokens_apt(x, params, "apt_delta");
  if (params.prompt_len() == 0) return zeros(x.rows, x.cols);

  Matrix keys = approx_keys(params);
  Matrix scores = matmul(x, transpose(keys));
  Matrix active = relu(scores);

  if (mode == AlphaMode::global) {
    double alpha = global_max(keys);
    return scale(matmul(active, params.p_v), alpha);
  }

  // Per-row gate: each query row is scaled by its own largest raw score.
  std::vector<double> row_alpha(scores.rows);
  for (std::size_t i = 0; i < scores.rows; ++i) {
    double m = scores(i, 0);
    for (std::size_t j = 1; j < scores.cols; ++j) m = std::max(m, scores(i, j));
    row_alpha[i] = m;
  }
  record_cmps(scores.size());

  Matrix out = matmul(active, params.p_v);
  for (std::size_t i = 0; i < out.rows; ++i) {
    for (std::size_t j = 0; j < out.cols; ++j) out(i, j) *= row_alpha[i];
  }
  record_macs(out.size());
  return out;
}

Matrix apt_attention(const Matrix& x, const AttentionParams& attn,
                     const AptParams& params, AlphaMode mode) {
  Matrix base = self_attention(x, attn);
  Matrix delta = apt_delta(x, params, mode);
  double gate = std::exp(params.log_scale);
  record_exps(1);
  return scale(add(base, delta), gate);
}

std::vector<double> diffusion_scale(const AttentionBlocks& blocks) {
  std::vector<double> out(blocks.gamma_input.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = blocks.gamma_prompt[i] / (blocks.gamma_input[i] + blocks.gamma_prompt[i]);
  }
  return out;
}

Matrix exact_diffusion(const Matrix& x, const Matrix& prompt, const AttentionParams& params) {
  if (prompt.rows == 0) return zeros(x.rows, x.cols);
  AttentionBlocks blocks = decompose_attention(x, prompt, params);
  Matrix q = scale(matmul(x, params.w_q), 1.0 / std::sqrt(static_cast<double>(params.dim())));
  Matrix pk = matmul(prompt, params.w_k);
  Matrix pv = matmul(prompt, params.w_v);
  Matrix probs = softmax_rows(matmul(q, transpose(pk)));
  return scale_rows(matmul(probs, pv), diffusion_scale(blocks));
}

Matrix aggregate_softmax(const Matrix& x, const Matrix& prompt, const AttentionParams& params) {
  if (prompt.rows == 0) return zeros(x.rows, x.cols);
  Matrix qk = matmul(params.w_q, transpose(params.w_k));
  Matrix scores = matmul(matmul(x, qk), transpose(prompt));
  return matmul(softmax_rows(scores), matmul(prompt, params.w_v));
}

Matrix vk_transform_gap(const Matrix& prompt, const AttentionParams& params) {
  return matmul(prompt, sub(matmul(params.w_k, transpose(params.w_q)), params.w_v));
}

RepresentationCheck exact_representation_check(const Matrix& x, const Matrix& prompt,
                                               const AttentionParams& attn, std::size_t r,
                                               double tol) {
  if (tol <= 0.0) throw std::invalid_argument("exact_representation_check: tol must be positive");
  if (prompt.rows == 0) {
    throw std::invalid_argument("exact_representation_check: need at least one prompt row");
  }

  // The module's key table is p_v * (w1 * w2 + I). With p_v = prompt * w_v,
  // matching the aggregated-softmax keys prompt * w_k * w_q^T means solving
  // w_v * (w1 * w2 + I) = w_k * w_q^T, i.e. factoring
  // w_v^{-1} * w_k * w_q^T - I at rank r.
  Matrix target;
  try {
    target = sub(matmul(invert(attn.w_v), matmul(attn.w_k, transpose(attn.w_q))),
                 identity(attn.dim()));
  } catch (const std::domain_error&) {
    throw std::domain_error(
        "exact_representation_check: w_v is singular (condition number " +
        std::to_string(condition_number(attn.w_v)) + "), cannot place prompts in value space");
  }
  LowRankFactor factor = low_rank_factor(target, r);

  RepresentationCheck check;
  check.params.p_v = matmul(prompt, attn.w_v);
  check.params.w1 = factor.w1;
  check.params.w2 = factor.w2;
  check.params.log_scale = 0.0;
  check.factor_residual = max_abs_diff(matmul(factor.w1, factor.w2), target);

  Matrix module_out = matmul(softmax_rows(matmul(x, transpose(approx_keys(check.params)))),
                             check.params.p_v);
  check.max_abs_error = max_abs_diff(module_out, aggregate_softmax(x, prompt, attn));
  check.passed = check.max_abs_error <= tol;
  return check;
}

AptParams init_apt(std::size_t p, std::size_t d, std::size_t r, Rng& rng,
                   bool identity_start, double stddev) {
  if (p == 0) throw std::invalid_argument("init_apt: need at least one prompt row");
  if (d == 0 || r == 0) throw std::invalid_argument("init_apt: dim and rank must be positive");
  if (r > d) {
    throw std::invalid_argument("init_apt: rank " + std::to_string(r) +
                                " exceeds dim " + std::to_string(d));
  }
  AptParams params;
  params.p_v = identity_start ? zeros(p, d) : random_normal(p, d, rng, 0.0, stddev);
  params.w1 = random_normal(d, r, rng, 0.0, stddev);
  params.w2 = zeros(r, d);
  params.log_scale = 0.0;
  return params;
}

void save_apt(const std::filesystem::path& path, const AptParams& params) {
  Matrix gate(1, 1);
  gate(0, 0) = params.log_scale;
  write_checkpoint(path, {{"p_v", params.p_v},
                          {"w1", params.w1},
                          {"w2", params.w2},
                          {"log_scale", gate}});
}

AptParams load_apt(const std::filesystem::path& path) {
  AptParams params;
  bool seen_pv = false, seen_w1 = false, seen_w2 = false, seen_gate = false;
  for (auto& [name, m] : read_checkpoint(path)) {
    if (name == "p_v") {
      params.p_v = std::move(m);
      seen_pv = true;
    } else if (name == "w1") {
      params.w1 = std::move(m);
      seen_w1 = true;
    } else if (name == "w2") {
      params.w2 = std::move(m);
      seen_w2 = true;
    } else if (name == "log_scale") {
      if (m.rows != 1 || m.cols != 1) {
        throw std::runtime_error("load_apt: log_scale must be a single value");
      }
      params.log_scale = m(0, 0);
      seen_gate = true;
    } else {
      throw std::runtime_error("load_apt: unexpected tensor '" + name + "'");
    }
  }
  if (!seen_pv || !seen_w1 || !seen_w2 || !seen_gate) {
    throw std::runtime_error("load_apt: checkpoint is missing module tensors");
  }
  check_apt(params, "load_apt");
  return params;
}

}  // namespace aptkit
