#include "aptkit/gradcheck_cases.hpp"

#include <cmath>

#include "aptkit/apt.hpp"
#include "aptkit/attention.hpp"
#include "aptkit/autodiff.hpp"
#include "aptkit/numkit.hpp"
#include "aptkit/rng.hpp"

namespace aptkit {

namespace {

double sum_squares(const Matrix& m) {
  double acc = 0.0;
  for (double v : m.data) acc += v * v;
  return acc;
}

// Single-head self-attention on the tape; mirrors self_attention for heads=1.
Value tape_self_attention(Tape& t, Value x, Value w_q, Value w_k, Value w_v, Value w_o,
                          std::size_t d) {
  Value q = t.scale(t.matmul(x, w_q), 1.0 / std::sqrt(static_cast<double>(d)));
  Value probs = t.softmax_rows(t.matmul(q, t.transpose(t.matmul(x, w_k))));
  return t.matmul(t.matmul(probs, t.matmul(x, w_v)), w_o);
}

}  // namespace

GradReport gradcheck_apt_attention(std::size_t n, std::size_t d, std::size_t p, std::size_t r,
                                   std::uint64_t seed, double eps, std::size_t coord_budget) {
  Rng rng = seeded_rng(seed);
  const Matrix x = random_normal(n, d, rng, 0.0, 0.5);
  const AttentionParams attn = random_attention_params(d, 1, rng, 0.3);

  AptParams apt;
  apt.p_v = random_normal(p, d, rng, 0.0, 0.3);
  apt.w1 = random_normal(d, r, rng, 0.0, 0.3);
  apt.w2 = random_normal(r, d, rng, 0.0, 0.3);
  apt.log_scale = random_normal(1, 1, rng, 0.0, 0.3)(0, 0);

  Tape t;
  Value xv = t.constant(x);
  Value w_q = t.constant(attn.w_q), w_k = t.constant(attn.w_k);
  Value w_v = t.constant(attn.w_v), w_o = t.constant(attn.w_o);
  Value p_v = t.leaf(apt.p_v, "p_v");
  Value w1 = t.leaf(apt.w1, "w1");
  Value w2 = t.leaf(apt.w2, "w2");
  Matrix s_mat(1, 1);
  s_mat(0, 0) = apt.log_scale;
  Value s = t.leaf(s_mat, "s");

  Value base = tape_self_attention(t, xv, w_q, w_k, w_v, w_o, d);
  Value keys = t.add(t.matmul(t.matmul(p_v, w1), w2), p_v);
  Value delta = t.scale_by(t.matmul(t.relu(t.matmul(xv, t.transpose(keys))), p_v),
                           t.global_max(keys));
  Value out = t.scale_by(t.add(base, delta), t.exp_scalar(s));
  Value loss = t.reduce_sum(t.hadamard(out, out));
  t.backward(loss);

  std::vector<NamedMatrix> params = {
      {"p_v", apt.p_v}, {"w1", apt.w1}, {"w2", apt.w2}, {"s", s_mat}};
  std::vector<Matrix> analytic = {t.grad(p_v), t.grad(w1), t.grad(w2), t.grad(s)};

  LossFn fn = [&x, &attn, p, d, r](const std::vector<Matrix>& vars) {
    AptParams trial;
    trial.p_v = vars[0];
    trial.w1 = vars[1];
    trial.w2 = vars[2];
    trial.log_scale = vars[3](0, 0);
    return sum_squares(apt_attention(x, attn, trial));
  };
  return gradcheck(fn, params, analytic, eps, coord_budget, derive_seed(seed, 0x9c));
}

GradReport gradcheck_prompt_extension(std::size_t n, std::size_t d, std::size_t p,
                                      std::uint64_t seed, double eps,
                                      std::size_t coord_budget) {
  Rng rng = seeded_rng(seed);
  const Matrix x = random_normal(n, d, rng, 0.0, 0.5);
  const AttentionParams attn = random_attention_params(d, 1, rng, 0.3);
  const Matrix prompt = random_normal(p, d, rng, 0.0, 0.5);

  Tape t;
  Value xv = t.constant(x);
  Value w_q = t.constant(attn.w_q), w_k = t.constant(attn.w_k);
  Value w_v = t.constant(attn.w_v), w_o = t.constant(attn.w_o);
  Value pv = t.leaf(prompt, "prompt");

  Value joint = t.concat_rows(pv, xv);
  Value out = tape_self_attention(t, joint, w_q, w_k, w_v, w_o, d);
  Value x_rows = t.slice_rows(out, p, p + n);
  Value loss = t.reduce_sum(t.hadamard(x_rows, x_rows));
  t.backward(loss);

  std::vector<NamedMatrix> params = {{"prompt", prompt}};
  std::vector<Matrix> analytic = {t.grad(pv)};

  LossFn fn = [&x, &attn](const std::vector<Matrix>& vars) {
    return sum_squares(prompt_extended_attention(x, vars[0], attn).x_out);
  };
  return gradcheck(fn, params, analytic, eps, coord_budget, derive_seed(seed, 0x9d));
}

}  // namespace aptkit
