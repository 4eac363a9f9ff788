#include "aptkit/toybench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <stdexcept>
#include <utility>

#include "aptkit/autodiff.hpp"
#include "aptkit/linalg.hpp"
#include "aptkit/matrix_io.hpp"
#include "aptkit/numkit.hpp"
#include "aptkit/rng.hpp"

namespace aptkit {
namespace {

constexpr std::size_t kDepth = 2;
constexpr std::size_t kDim = 32;
constexpr std::size_t kFfnMult = 2;
constexpr std::size_t kOutDim = 8;
constexpr std::size_t kSegmentLen = 6;
constexpr std::size_t kTrainSamples = 128;
constexpr std::size_t kValSamples = 64;
constexpr double kWeightStd = 0.18;
constexpr double kHeadStd = 0.1;
constexpr std::size_t kPerturbRank = 4;
constexpr double kPerturbScale = 4.0;
constexpr double kFloorThreshold = 0.1;
constexpr double kCrossLeak = 0.05;  // off-subspace noise in segment tokens
constexpr double kPromptInitStd = 0.05;
constexpr double kDivergenceFactor = 1e3;

FrozenModel make_model(std::uint64_t seed) {
  Rng rng = seeded_rng(derive_seed(seed, 0xf00d));
  FrozenModel model;
  for (std::size_t l = 0; l < kDepth; ++l) {
    model.layers.push_back(random_layer(kDim, 1, kFfnMult, rng, kWeightStd));
  }
  model.cls = random_normal(1, kDim, rng);
  model.head = random_normal(kDim, kOutDim, rng, 0.0, kHeadStd);
  return model;
}

std::vector<TransformerLayer> perturb_teacher(const FrozenModel& model, std::uint64_t seed) {
  Rng rng = seeded_rng(seed);
  std::vector<TransformerLayer> teacher = model.layers;
  // A low-rank value-space edit per layer. Prompt rows inject content through
  // the same value pathway, so per-layer prompt tuning can counteract the edit
  // at its source, while a head-only fit sees the error only after it has
  // propagated nonlinearly through the remaining layers.
  for (TransformerLayer& layer : teacher) {
    Matrix u = random_normal(kDim, kPerturbRank, rng, 0.0, 1.0 / std::sqrt(double(kDim)));
    Matrix v = random_normal(kPerturbRank, kDim, rng, 0.0, 1.0);
    layer.attn.w_v = add(layer.attn.w_v, scale(matmul(u, v), kPerturbScale));
  }
  return teacher;
}

Matrix sample_tokens(Rng& rng) {
  Matrix tokens = random_normal(2 * kSegmentLen, kDim, rng, 0.0, kCrossLeak);
  Matrix a = random_normal(kSegmentLen, kDim / 2, rng);
  Matrix b = random_normal(kSegmentLen, kDim / 2, rng);
  for (std::size_t i = 0; i < kSegmentLen; ++i) {
    for (std::size_t j = 0; j < kDim / 2; ++j) {
      tokens(i, j) = a(i, j);
      tokens(kSegmentLen + i, kDim / 2 + j) = b(i, j);
    }
  }
  return tokens;
}

Matrix stack_forward(const Matrix& x, const std::vector<TransformerLayer>& layers) {
  Matrix cur = x;
  for (const TransformerLayer& layer : layers) cur = layer_forward(cur, layer);
  return cur;
}

Matrix readout(const FrozenModel& model, const std::vector<TransformerLayer>& layers,
               const Matrix& tokens) {
  Matrix out = stack_forward(concat_rows(model.cls, tokens), layers);
  return matmul(slice_rows(out, 0, 1), model.head);
}

Matrix one_hot(std::size_t idx, std::size_t width) {
  Matrix m = zeros(1, width);
  m(0, idx) = 1.0;
  return m;
}

double sample_loss(const Matrix& pred, const Sample& sample, TaskKind kind) {
  Matrix out = kind == TaskKind::token_classification ? softmax_rows(pred) : pred;
  double acc = 0.0;
  for (std::size_t j = 0; j < out.cols; ++j) {
    const double diff = out(0, j) - sample.target(0, j);
    acc += diff * diff;
  }
  // Classification uses the multi-class Brier score (sum over classes);
  // regression averages per coordinate.
  if (kind == TaskKind::token_classification) return acc;
  return acc / static_cast<double>(out.cols);
}

double dataset_floor(const TaskSpec& task) {
  // Best linear head on the frozen class-token features, fitted on train and
  // val together. Deliberately charitable: if even this head cannot close the
  // gap, no amount of head-only tuning can, so the threshold below is a sound
  // certificate that the task needs encoder adaptation.
  const std::size_t total = task.train.size() + task.val.size();
  Matrix features(total, kDim), targets(total, kOutDim);
  std::size_t row_idx = 0;
  auto collect = [&](const std::vector<Sample>& samples) {
    for (const Sample& sample : samples) {
      Matrix row = stack_forward(concat_rows(task.model.cls, sample.tokens), task.model.layers);
      for (std::size_t j = 0; j < kDim; ++j) features(row_idx, j) = row(0, j);
      for (std::size_t j = 0; j < kOutDim; ++j) targets(row_idx, j) = sample.target(0, j);
      ++row_idx;
    }
  };
  collect(task.train);
  collect(task.val);
  Matrix best_head = lstsq(features, targets);

  double acc = 0.0;
  for (std::size_t i = task.train.size(); i < total; ++i) {
    Matrix pred(1, kOutDim);
    for (std::size_t j = 0; j < kOutDim; ++j) {
      double v = 0.0;
      for (std::size_t k = 0; k < kDim; ++k) v += features(i, k) * best_head(k, j);
      pred(0, j) = v;
    }
    acc += sample_loss(pred, task.val[i - task.train.size()], task.kind);
  }
  return acc / static_cast<double>(task.val.size());
}

std::size_t argmax_row(const Matrix& row) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < row.cols; ++j) {
    if (row(0, j) > row(0, best)) best = j;
  }
  return best;
}

// Tape mirror of the single-head attention pipeline.
struct LayerConsts {
  Value w_q, w_k, w_v, w_o, w_ff1, w_ff2;
};

LayerConsts push_layer_consts(Tape& t, const TransformerLayer& layer) {
  return {t.constant(layer.attn.w_q), t.constant(layer.attn.w_k),
          t.constant(layer.attn.w_v), t.constant(layer.attn.w_o),
          t.constant(layer.w_ff1),    t.constant(layer.w_ff2)};
}

Value tape_attention(Tape& t, Value x, const LayerConsts& c) {
  Value q = t.scale(t.matmul(x, c.w_q), 1.0 / std::sqrt(static_cast<double>(kDim)));
  Value probs = t.softmax_rows(t.matmul(q, t.transpose(t.matmul(x, c.w_k))));
  return t.matmul(t.matmul(probs, t.matmul(x, c.w_v)), c.w_o);
}

Value tape_ffn(Tape& t, Value h, const LayerConsts& c) {
  return t.matmul(t.relu(t.matmul(h, c.w_ff1)), c.w_ff2);
}

Value tape_layer(Tape& t, Value x, const LayerConsts& c) {
  Value h = t.add(x, tape_attention(t, x, c));
  return t.add(h, tape_ffn(t, h, c));
}

struct AptLeaves {
  Value p_v, w1, w2, log_scale;
};

struct TapeLeaves {
  Value cls, head;
  std::vector<Value> prompts;
  std::vector<AptLeaves> apt;
};

TapeLeaves push_leaves(Tape& t, const MethodState& state, TuneMethod method) {
  TapeLeaves leaves;
  leaves.cls = t.leaf(state.cls, "cls");
  leaves.head = t.leaf(state.head, "head");
  if (method == TuneMethod::shallow || method == TuneMethod::deep) {
    for (std::size_t i = 0; i < state.bank.prompts.size(); ++i) {
      leaves.prompts.push_back(t.leaf(state.bank.prompts[i], "prompt" + std::to_string(i)));
    }
  }
  if (method == TuneMethod::apt) {
    for (std::size_t l = 0; l < state.apt.size(); ++l) {
      const std::string tag = "apt" + std::to_string(l);
      Matrix gate(1, 1);
      gate(0, 0) = state.apt[l].log_scale;
      leaves.apt.push_back({t.leaf(state.apt[l].p_v, tag + ".p_v"),
                            t.leaf(state.apt[l].w1, tag + ".w1"),
                            t.leaf(state.apt[l].w2, tag + ".w2"),
                            t.leaf(gate, tag + ".log_scale")});
    }
  }
  return leaves;
}

// Forward for one sample on the tape; returns the 1 x out_dim readout.
Value tape_method_forward(Tape& t, const std::vector<LayerConsts>& consts,
                          const TapeLeaves& leaves, TuneMethod method,
                          std::size_t p, Value tokens) {
  Value cur = t.concat_rows(leaves.cls, tokens);
  const std::size_t n_rows = 1 + 2 * kSegmentLen;
  std::size_t cls_row = 0;

  switch (method) {
    case TuneMethod::classifier_only:
      for (const LayerConsts& c : consts) cur = tape_layer(t, cur, c);
      break;
    case TuneMethod::shallow:
      cur = t.concat_rows(leaves.prompts[0], cur);
      for (const LayerConsts& c : consts) cur = tape_layer(t, cur, c);
      cls_row = p;
      break;
    case TuneMethod::deep:
      for (std::size_t l = 0; l < consts.size(); ++l) {
        Value joint = t.concat_rows(leaves.prompts[l], cur);
        Value attn_x = t.slice_rows(tape_attention(t, joint, consts[l]), p, p + n_rows);
        Value h = t.add(cur, attn_x);
        cur = t.add(h, tape_ffn(t, h, consts[l]));
      }
      break;
    case TuneMethod::apt:
      for (std::size_t l = 0; l < consts.size(); ++l) {
        const AptLeaves& a = leaves.apt[l];
        Value keys = t.add(t.matmul(t.matmul(a.p_v, a.w1), a.w2), a.p_v);
        Value delta = t.scale_by(t.matmul(t.relu(t.matmul(cur, t.transpose(keys))), a.p_v),
                                 t.global_max(keys));
        Value gated = t.scale_by(t.add(tape_attention(t, cur, consts[l]), delta),
                                 t.exp_scalar(a.log_scale));
        Value h = t.add(cur, gated);
        cur = t.add(h, tape_ffn(t, h, consts[l]));
      }
      break;
  }
  return t.matmul(t.slice_rows(cur, cls_row, cls_row + 1), leaves.head);
}

Value tape_batch_loss(Tape& t, const std::vector<LayerConsts>& consts,
                      const TapeLeaves& leaves, TuneMethod method, std::size_t p,
                      TaskKind kind, const std::vector<Sample>& samples) {
  Value total;
  bool first = true;
  for (const Sample& sample : samples) {
    Value pred = tape_method_forward(t, consts, leaves, method, p, t.constant(sample.tokens));
    if (kind == TaskKind::token_classification) pred = t.softmax_rows(pred);
    Value diff = t.sub(pred, t.constant(sample.target));
    Value loss = t.reduce_sum(t.hadamard(diff, diff));
    total = first ? loss : t.add(total, loss);
    first = false;
  }
  const double denom = kind == TaskKind::token_classification
                           ? static_cast<double>(samples.size())
                           : static_cast<double>(samples.size() * kOutDim);
  return t.scale(total, 1.0 / denom);
}

}  // namespace

TaskKind task_kind_from_string(const std::string& s) {
  if (s == "regression-shift") return TaskKind::regression_shift;
  if (s == "token-classification") return TaskKind::token_classification;
  throw std::invalid_argument("unknown task kind '" + s +
                              "'; expected regression-shift or token-classification");
}

std::string to_string(TaskKind kind) {
  return kind == TaskKind::regression_shift ? "regression-shift" : "token-classification";
}

TuneMethod tune_method_from_string(const std::string& s) {
  if (s == "classifier") return TuneMethod::classifier_only;
  if (s == "shallow") return TuneMethod::shallow;
  if (s == "deep") return TuneMethod::deep;
  if (s == "apt") return TuneMethod::apt;
  throw std::invalid_argument("unknown method '" + s +
                              "'; expected classifier, shallow, deep or apt");
}

std::string to_string(TuneMethod method) {
  switch (method) {
    case TuneMethod::classifier_only: return "classifier";
    case TuneMethod::shallow: return "shallow";
    case TuneMethod::deep: return "deep";
    case TuneMethod::apt: return "apt";
  }
  throw std::invalid_argument("unknown method");
}

TaskSpec make_task(std::uint64_t seed, TaskKind kind) {
  TaskSpec task;
  task.kind = kind;
  task.seed = seed;
  task.segment_len = kSegmentLen;
  task.model = make_model(seed);

  Rng data_rng = seeded_rng(derive_seed(seed, 0xda7a));
  std::vector<Matrix> train_tokens, val_tokens;
  for (std::size_t i = 0; i < kTrainSamples; ++i) train_tokens.push_back(sample_tokens(data_rng));
  for (std::size_t i = 0; i < kValSamples; ++i) val_tokens.push_back(sample_tokens(data_rng));

  for (std::uint64_t attempt = 0; attempt < 10; ++attempt) {
    task.teacher_layers = perturb_teacher(task.model, derive_seed(seed, 0x7ea0 + attempt));
    task.train.clear();
    task.val.clear();
    auto fill = [&](const std::vector<Matrix>& tokens, std::vector<Sample>& out) {
      for (const Matrix& tok : tokens) {
        Sample sample;
        sample.tokens = tok;
        Matrix y = readout(task.model, task.teacher_layers, tok);
        sample.target = kind == TaskKind::token_classification
                            ? one_hot(argmax_row(y), kOutDim)
                            : y;
        out.push_back(std::move(sample));
      }
    };
    fill(train_tokens, task.train);
    fill(val_tokens, task.val);

    if (kind == TaskKind::regression_shift) {
      // Express regression targets in units of the train-split rms so loss
      // magnitudes (and with them usable learning rates) are comparable
      // across seeds regardless of how strongly the teacher edit amplifies.
      double acc = 0.0;
      std::size_t count = 0;
      for (const Sample& sample : task.train) {
        for (double v : sample.target.data) acc += v * v;
        count += sample.target.size();
      }
      const double rms = std::sqrt(acc / static_cast<double>(count));
      if (rms > 0.0) {
        for (Sample& sample : task.train) sample.target = scale(sample.target, 1.0 / rms);
        for (Sample& sample : task.val) sample.target = scale(sample.target, 1.0 / rms);
      }
    }

    task.classifier_floor = dataset_floor(task);
    if (task.classifier_floor > kFloorThreshold) return task;
  }
  throw std::runtime_error(
      "make_task: teacher perturbation stayed below the classifier-floor threshold "
      "after 10 resamples (seed " + std::to_string(seed) + ")");
}

MethodState init_method_state(const FrozenModel& model, const TrainConfig& cfg) {
  MethodState state;
  state.cls = model.cls;
  state.head = model.head;
  Rng rng = seeded_rng(derive_seed(cfg.seed, 0x1417));
  switch (cfg.method) {
    case TuneMethod::classifier_only:
      break;
    case TuneMethod::shallow:
      state.bank = make_shallow_bank(random_normal(cfg.p, model.dim(), rng, 0.0, kPromptInitStd));
      break;
    case TuneMethod::deep: {
      std::vector<Matrix> prompts;
      for (std::size_t l = 0; l < model.layers.size(); ++l) {
        prompts.push_back(random_normal(cfg.p, model.dim(), rng, 0.0, kPromptInitStd));
      }
      state.bank = make_deep_bank(std::move(prompts));
      break;
    }
    case TuneMethod::apt:
      for (std::size_t l = 0; l < model.layers.size(); ++l) {
        state.apt.push_back(init_apt(cfg.p, model.dim(), cfg.r, rng, cfg.apt_identity_init));
      }
      break;
  }
  return state;
}

Matrix method_forward(const FrozenModel& model, const MethodState& state,
                      TuneMethod method, const Matrix& tokens) {
  FrozenModel adapted = model;  // shares weights; swaps the classifier pair
  adapted.cls = state.cls;
  adapted.head = state.head;
  Matrix x = concat_rows(adapted.cls, tokens);

  Matrix features;
  switch (method) {
    case TuneMethod::classifier_only:
      features = slice_rows(stack_forward(x, adapted.layers), 0, 1);
      break;
    case TuneMethod::shallow: {
      Matrix all = shallow_prompt_forward(x, adapted.layers, state.bank);
      features = slice_rows(all, state.bank.prompts[0].rows, state.bank.prompts[0].rows + 1);
      break;
    }
    case TuneMethod::deep:
      features = slice_rows(deep_prompt_forward(x, adapted.layers, state.bank), 0, 1);
      break;
    case TuneMethod::apt: {
      Matrix cur = x;
      for (std::size_t l = 0; l < adapted.layers.size(); ++l) {
        Matrix h = add(cur, apt_attention(cur, adapted.layers[l].attn, state.apt[l]));
        cur = add(h, ffn_forward(h, adapted.layers[l]));
      }
      features = slice_rows(cur, 0, 1);
      break;
    }
  }
  return matmul(features, adapted.head);
}

double method_loss(const FrozenModel& model, const MethodState& state, TuneMethod method,
                   TaskKind kind, const std::vector<Sample>& samples) {
  double acc = 0.0;
  for (const Sample& sample : samples) {
    acc += sample_loss(method_forward(model, state, method, sample.tokens), sample, kind);
  }
  return acc / static_cast<double>(samples.size());
}

TrainResult train(const FrozenModel& model, const TaskSpec& task, const TrainConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  TrainResult result;
  result.state = init_method_state(model, cfg);
  MethodState& state = result.state;

  result.classifier_params = state.cls.size() + state.head.size();
  result.added_params = 0;
  for (const Matrix& prompt : state.bank.prompts) result.added_params += prompt.size();
  for (const AptParams& a : state.apt) {
    result.added_params += a.p_v.size() + a.w1.size() + a.w2.size() + 1;
  }

  std::vector<Matrix> velocity;  // SGD momentum state, one slot per tensor

  for (std::size_t step = 0; step <= cfg.steps; ++step) {
    Tape t;
    std::vector<LayerConsts> consts;
    for (const TransformerLayer& layer : model.layers) {
      consts.push_back(push_layer_consts(t, layer));
    }
    TapeLeaves leaves = push_leaves(t, state, cfg.method);
    Value loss = tape_batch_loss(t, consts, leaves, cfg.method, cfg.p, task.kind, task.train);

    const double train_loss = t.value(loss)(0, 0);
    result.loss_curve.push_back(train_loss);
    result.val_curve.push_back(method_loss(model, state, cfg.method, task.kind, task.val));
    if (step == 0) result.initial_loss = train_loss;
    if (!std::isfinite(train_loss) ||
        train_loss > kDivergenceFactor * std::max(result.initial_loss, 1e-12)) {
      throw std::runtime_error("train: diverged at step " + std::to_string(step) +
                               " (loss " + std::to_string(train_loss) + ", initial " +
                               std::to_string(result.initial_loss) + ")");
    }
    if (step == cfg.steps) break;  // last pass only records the final losses

    t.backward(loss);

    // Fixed leaf order: classifier pair, prompts, module tensors.
    std::vector<std::pair<Matrix*, Value>> trainable = {{&state.cls, leaves.cls},
                                                        {&state.head, leaves.head}};
    for (std::size_t i = 0; i < leaves.prompts.size(); ++i) {
      trainable.emplace_back(&state.bank.prompts[i], leaves.prompts[i]);
    }
    for (std::size_t l = 0; l < leaves.apt.size(); ++l) {
      trainable.emplace_back(&state.apt[l].p_v, leaves.apt[l].p_v);
      trainable.emplace_back(&state.apt[l].w1, leaves.apt[l].w1);
      trainable.emplace_back(&state.apt[l].w2, leaves.apt[l].w2);
    }

    if (velocity.empty()) velocity.resize(trainable.size() + leaves.apt.size());
    std::size_t vi = 0;
    for (auto& [tensor, leaf] : trainable) {
      Matrix g = t.grad(leaf);
      Matrix& vel = velocity[vi++];
      if (vel.data.empty()) vel = zeros(tensor->rows, tensor->cols);
      for (std::size_t i = 0; i < tensor->data.size(); ++i) {
        vel.data[i] = cfg.momentum * vel.data[i] + g.data[i];
        tensor->data[i] -= cfg.lr * vel.data[i];
      }
    }
    for (std::size_t l = 0; l < leaves.apt.size(); ++l) {
      const double g = t.grad(leaves.apt[l].log_scale)(0, 0);
      Matrix& vel = velocity[vi++];
      if (vel.data.empty()) vel = zeros(1, 1);
      vel(0, 0) = cfg.momentum * vel(0, 0) + g;
      state.apt[l].log_scale -= cfg.lr * vel(0, 0);
    }
  }

  result.final_val_loss = result.val_curve.back();
  for (std::size_t t0 = 0; t0 + 100 < result.loss_curve.size(); ++t0) {
    if (result.loss_curve[t0 + 100] > result.loss_curve[t0] + 1e-12) {
      char buf[160];
      std::snprintf(buf, sizeof(buf),
                    "loss rose over steps %zu..%zu: %.6g -> %.6g", t0, t0 + 100,
                    result.loss_curve[t0], result.loss_curve[t0 + 100]);
      result.window_warnings.push_back(buf);
      if (result.window_warnings.size() >= 5) break;
    }
  }
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

void attention_diffusion_dump(const FrozenModel& model, const TaskSpec& task,
                              const MethodState& state, TuneMethod method,
                              std::size_t layer, std::ostream& os,
                              std::size_t topk_input, std::size_t topk_prompt) {
  if (layer >= model.layers.size()) {
    throw std::invalid_argument("attention_diffusion_dump: layer out of range");
  }
  if (task.val.empty()) throw std::invalid_argument("attention_diffusion_dump: empty task");

  // Walk the first validation sample to the requested layer's input.
  Matrix cur = concat_rows(state.cls, task.val[0].tokens);
  std::size_t prompt_rows = 0;
  if (method == TuneMethod::shallow) {
    cur = concat_rows(state.bank.prompts[0], cur);
    prompt_rows = state.bank.prompts[0].rows;
  }
  for (std::size_t l = 0; l < layer; ++l) {
    const TransformerLayer& lay = model.layers[l];
    switch (method) {
      case TuneMethod::classifier_only:
      case TuneMethod::shallow:
        cur = layer_forward(cur, lay);
        break;
      case TuneMethod::deep: {
        SelfAttentionCache cache = self_attention_cached(cur, lay.attn);
        cache = apply_prompt_extension(cache, state.bank.prompts[l], lay.attn);
        Matrix h = add(cur, finish_attention(cache, lay.attn));
        cur = add(h, ffn_forward(h, lay));
        break;
      }
      case TuneMethod::apt: {
        Matrix h = add(cur, apt_attention(cur, lay.attn, state.apt[l]));
        cur = add(h, ffn_forward(h, lay));
        break;
      }
    }
  }

  Matrix x = method == TuneMethod::shallow ? slice_rows(cur, prompt_rows, cur.rows) : cur;
  Matrix input_input, input_prompt, prompt_input, prompt_prompt;
  const TransformerLayer& lay = model.layers[layer];
  switch (method) {
    case TuneMethod::classifier_only: {
      Matrix q = scale(matmul(x, lay.attn.w_q), 1.0 / std::sqrt(double(kDim)));
      input_input = softmax_rows(matmul(q, transpose(matmul(x, lay.attn.w_k))));
      break;
    }
    case TuneMethod::shallow: {
      AttentionBlocks blocks =
          decompose_attention(x, slice_rows(cur, 0, prompt_rows), lay.attn);
      input_input = blocks.input_input;
      input_prompt = blocks.input_prompt;
      prompt_input = blocks.prompt_input;
      prompt_prompt = blocks.prompt_prompt;
      break;
    }
    case TuneMethod::deep: {
      AttentionBlocks blocks = decompose_attention(x, state.bank.prompts[layer], lay.attn);
      input_input = blocks.input_input;
      input_prompt = blocks.input_prompt;
      prompt_input = blocks.prompt_input;
      prompt_prompt = blocks.prompt_prompt;
      break;
    }
    case TuneMethod::apt: {
      Matrix q = scale(matmul(x, lay.attn.w_q), 1.0 / std::sqrt(double(kDim)));
      input_input = softmax_rows(matmul(q, transpose(matmul(x, lay.attn.w_k))));
      // The module's diffusion analog: gated ReLU scores toward the value
      // table. Zero table -> zero block, by construction.
      const AptParams& a = state.apt[layer];
      Matrix keys = approx_keys(a);
      double alpha = a.p_v.size() == 0 ? 0.0 : global_max(keys);
      input_prompt = scale(relu(matmul(x, transpose(keys))), alpha);
      break;
    }
  }

  // Column mass ranks token activity; the class token is always kept.
  auto top_indices = [](const Matrix& block_a, const Matrix& block_b, std::size_t begin,
                        std::size_t end, std::size_t keep) {
    std::vector<std::pair<double, std::size_t>> act;
    for (std::size_t j = begin; j < end; ++j) {
      double mass = 0.0;
      if (!block_a.data.empty()) {
        for (std::size_t i = 0; i < block_a.rows; ++i) mass += block_a(i, j);
      }
      if (!block_b.data.empty()) {
        for (std::size_t i = 0; i < block_b.rows; ++i) mass += block_b(i, j);
      }
      act.emplace_back(-mass, j);
    }
    std::sort(act.begin(), act.end());
    std::vector<std::size_t> out;
    for (std::size_t k = 0; k < act.size() && k < keep; ++k) out.push_back(act[k].second);
    std::sort(out.begin(), out.end());
    return out;
  };

  std::vector<std::size_t> inputs = {0};
  const std::size_t seg = task.segment_len;
  for (std::size_t idx : top_indices(input_input, prompt_input, 1, 1 + seg, topk_input)) {
    inputs.push_back(idx);
  }
  for (std::size_t idx :
       top_indices(input_input, prompt_input, 1 + seg, 1 + 2 * seg, topk_input)) {
    inputs.push_back(idx);
  }
  std::vector<std::size_t> prompts;
  if (!input_prompt.data.empty()) {
    prompts = top_indices(input_prompt, prompt_prompt, 0, input_prompt.cols, topk_prompt);
  }

  os << "layer,block,row,col,weight\n";
  char buf[64];
  auto emit = [&](const char* block, const Matrix& m, const std::vector<std::size_t>& rows,
                  const std::vector<std::size_t>& cols) {
    if (m.data.empty()) return;
    for (std::size_t i : rows) {
      for (std::size_t j : cols) {
        std::snprintf(buf, sizeof(buf), "%.17g", m(i, j));
        os << layer << ',' << block << ',' << i << ',' << j << ',' << buf << '\n';
      }
    }
  };
  emit("II", input_input, inputs, inputs);
  emit("IP", input_prompt, inputs, prompts);
  emit("PI", prompt_input, prompts, inputs);
  emit("PP", prompt_prompt, prompts, prompts);
}

void write_run_artifacts(const std::filesystem::path& dir, const TaskSpec& task,
                         const TrainConfig& cfg, const TrainResult& result) {
  std::filesystem::create_directories(dir);

  std::ofstream config(dir / "config.txt");
  config << "method=" << to_string(cfg.method) << '\n'
         << "kind=" << to_string(task.kind) << '\n'
         << "task_seed=" << task.seed << '\n'
         << "p=" << cfg.p << '\n'
         << "r=" << cfg.r << '\n'
         << "lr=" << cfg.lr << '\n'
         << "momentum=" << cfg.momentum << '\n'
         << "steps=" << cfg.steps << '\n'
         << "seed=" << cfg.seed << '\n'
         << "apt_identity_init=" << (cfg.apt_identity_init ? 1 : 0) << '\n'
         << "added_params=" << result.added_params << '\n'
         << "classifier_params=" << result.classifier_params << '\n'
         << "final_val_loss=" << result.final_val_loss << '\n';
  config.close();

  std::ofstream curve(dir / "curve.csv");
  curve << "step,loss,val_loss\n";
  char buf[96];
  for (std::size_t i = 0; i < result.loss_curve.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g", i, result.loss_curve[i],
                  result.val_curve[i]);
    curve << buf << '\n';
  }
  curve.close();

  std::vector<NamedMatrix> tensors = {{"cls", result.state.cls}, {"head", result.state.head}};
  if (cfg.method == TuneMethod::shallow) {
    tensors.emplace_back("shallow_prompt", result.state.bank.prompts[0]);
  } else if (cfg.method == TuneMethod::deep) {
    for (std::size_t l = 0; l < result.state.bank.prompts.size(); ++l) {
      tensors.emplace_back("prompt" + std::to_string(l), result.state.bank.prompts[l]);
    }
  } else if (cfg.method == TuneMethod::apt) {
    for (std::size_t l = 0; l < result.state.apt.size(); ++l) {
      const std::string tag = "apt" + std::to_string(l);
      Matrix gate(1, 1);
      gate(0, 0) = result.state.apt[l].log_scale;
      tensors.emplace_back(tag + ".p_v", result.state.apt[l].p_v);
      tensors.emplace_back(tag + ".w1", result.state.apt[l].w1);
      tensors.emplace_back(tag + ".w2", result.state.apt[l].w2);
      tensors.emplace_back(tag + ".log_scale", gate);
    }
  }
  write_checkpoint(dir / "params.aptm", tensors);

  const FrozenModel& model = task.model;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    std::ofstream dump(dir / ("dump_layer" + std::to_string(l) + ".csv"));
    attention_diffusion_dump(model, task, result.state, cfg.method, l, dump);
  }

  if (!result.window_warnings.empty()) {
    std::ofstream diag(dir / "diagnostics.txt");
    for (const std::string& w : result.window_warnings) diag << w << '\n';
  }
}

LoadedRun load_run_artifacts(const std::filesystem::path& dir) {
  std::ifstream config(dir / "config.txt");
  if (!config) {
    throw std::runtime_error("load_run_artifacts: missing config.txt in " + dir.string());
  }
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(config, line)) {
    const std::size_t eq = line.find('=');
    if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto need = [&](const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) {
      throw std::runtime_error("load_run_artifacts: config.txt lacks '" + key + "'");
    }
    return it->second;
  };

  LoadedRun run;
  run.cfg.method = tune_method_from_string(need("method"));
  run.cfg.p = std::stoul(need("p"));
  run.cfg.r = std::stoul(need("r"));
  run.cfg.lr = std::stod(need("lr"));
  run.cfg.momentum = std::stod(need("momentum"));
  run.cfg.steps = std::stoul(need("steps"));
  run.cfg.seed = std::stoull(need("seed"));
  run.cfg.apt_identity_init = need("apt_identity_init") == "1";
  run.task = make_task(std::stoull(need("task_seed")), task_kind_from_string(need("kind")));

  std::map<std::string, Matrix> tensors;
  for (auto& [name, m] : read_checkpoint(dir / "params.aptm")) tensors[name] = std::move(m);
  auto take = [&](const std::string& name) {
    auto it = tensors.find(name);
    if (it == tensors.end()) {
      throw std::runtime_error("load_run_artifacts: params.aptm lacks '" + name + "'");
    }
    Matrix m = std::move(it->second);
    tensors.erase(it);
    return m;
  };

  run.state.cls = take("cls");
  run.state.head = take("head");
  if (run.cfg.method == TuneMethod::shallow) {
    run.state.bank = make_shallow_bank(take("shallow_prompt"));
  } else if (run.cfg.method == TuneMethod::deep) {
    std::vector<Matrix> prompts;
    for (std::size_t l = 0; l < run.task.model.layers.size(); ++l) {
      prompts.push_back(take("prompt" + std::to_string(l)));
    }
    run.state.bank = make_deep_bank(std::move(prompts));
  } else if (run.cfg.method == TuneMethod::apt) {
    for (std::size_t l = 0; l < run.task.model.layers.size(); ++l) {
      const std::string tag = "apt" + std::to_string(l);
      AptParams a;
      a.p_v = take(tag + ".p_v");
      a.w1 = take(tag + ".w1");
      a.w2 = take(tag + ".w2");
      a.log_scale = take(tag + ".log_scale")(0, 0);
      run.state.apt.push_back(std::move(a));
    }
  }
  return run;
}

}  // namespace aptkit
