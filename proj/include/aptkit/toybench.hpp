#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "aptkit/apt.hpp"
#include "aptkit/attention.hpp"
#include "aptkit/matrix.hpp"

namespace aptkit {

// A small random "pretrained" transformer whose weights stay fixed during
// adaptation. The class token is prepended to every input; its final row
// feeds the linear head.
struct FrozenModel {
  std::vector<TransformerLayer> layers;
  Matrix cls;   // 1 x d default class-token embedding
  Matrix head;  // d x out_dim readout

  std::size_t dim() const { return cls.cols; }
  std::size_t out_dim() const { return head.cols; }
};

enum class TaskKind { regression_shift, token_classification };

TaskKind task_kind_from_string(const std::string& s);
std::string to_string(TaskKind kind);

struct Sample {
  Matrix tokens;  // token rows without the class token, two 6-row segments
  Matrix target;  // 1 x out_dim: teacher readout, or a one-hot class
};

// Synthetic adaptation task: the teacher is the frozen model with an extra
// low-rank additive perturbation on every value projection, so the gap lives
// exactly where prompt-injected value content can reach. Inputs mix two
// "modality" segments drawn from disjoint coordinate subspaces.
struct TaskSpec {
  TaskKind kind = TaskKind::regression_shift;
  FrozenModel model;
  std::vector<TransformerLayer> teacher_layers;
  std::vector<Sample> train, val;
  // Validation loss of the best linear head on frozen features (class-token
  // outputs of the unadapted model). Certifies that classifier-only tuning
  // cannot solve the task: construction rejects tasks where this is <= 0.1.
  double classifier_floor = 0.0;
  std::uint64_t seed = 0;
  std::size_t segment_len = 6;
};

// Deterministic task from the seed. Resamples the teacher perturbation with
// derived seeds (up to 10 attempts) until the classifier floor clears 0.1.
TaskSpec make_task(std::uint64_t seed, TaskKind kind = TaskKind::regression_shift);

enum class TuneMethod { classifier_only, shallow, deep, apt };

TuneMethod tune_method_from_string(const std::string& s);
std::string to_string(TuneMethod method);

struct TrainConfig {
  TuneMethod method = TuneMethod::apt;
  std::size_t p = 8;
  std::size_t r = 2;
  double lr = 0.05;
  double momentum = 0.9;
  std::size_t steps = 450;
  std::uint64_t seed = 1;
  // Start the module as an exact no-op (zero value table). That point is
  // stationary for every module tensor, so training leaves the module dead;
  // the default starts from small noise instead and is only approximately an
  // identity.
  bool apt_identity_init = false;
};

// Everything trainable for one method. The classifier pair (cls, head) is
// always present and always trained; the prompt bank or the per-layer
// modules exist only for their methods.
struct MethodState {
  Matrix cls, head;
  PromptBank bank;
  std::vector<AptParams> apt;
};

MethodState init_method_state(const FrozenModel& model, const TrainConfig& cfg);

// Plain forward pass for one sample under a method state: returns the model's
// readout row (1 x out_dim logits or regression outputs).
Matrix method_forward(const FrozenModel& model, const MethodState& state,
                      TuneMethod method, const Matrix& tokens);

double method_loss(const FrozenModel& model, const MethodState& state, TuneMethod method,
                   TaskKind kind, const std::vector<Sample>& samples);

struct TrainResult {
  std::vector<double> loss_curve;  // training loss per step, step 0 = init
  std::vector<double> val_curve;
  double initial_loss = 0.0;
  double final_val_loss = 0.0;
  std::size_t added_params = 0;       // matches the cost formulas for the method
  std::size_t classifier_params = 0;  // cls + head, trained by every method
  double wall_seconds = 0.0;
  MethodState state;
  // 100-step windows where training loss increased; diagnostics, not errors.
  std::vector<std::string> window_warnings;
};

// Full-batch SGD with momentum on the method's trainable set; gradients come
// off the tape, the frozen stack enters it as constants. Deterministic for a
// fixed (task, cfg). Throws if the loss exceeds 1000x its initial value,
// naming the step.
TrainResult train(const FrozenModel& model, const TaskSpec& task, const TrainConfig& cfg);

// Block-weight dump of one layer on the first validation sample, CSV rows
// `layer,block,row,col,weight` with block in {II, IP, PI, PP}. Prompt methods
// dump the joint-softmax blocks; the module method writes its gated ReLU
// score matrix in the IP position (its prompts are never queried, so PI/PP
// do not exist); classifier-only dumps II. Row and column indices refer to
// the original token positions. Only the `topk_input` most attended tokens
// per input segment (class token always kept) and `topk_prompt` prompts are
// emitted; toy sizes sit below the defaults, so dumps are complete unless the
// caller tightens them.
void attention_diffusion_dump(const FrozenModel& model, const TaskSpec& task,
                              const MethodState& state, TuneMethod method,
                              std::size_t layer, std::ostream& os,
                              std::size_t topk_input = 15, std::size_t topk_prompt = 30);

// Writes config.txt, curve.csv, params.aptm and dump_layer{k}.csv into dir.
void write_run_artifacts(const std::filesystem::path& dir, const TaskSpec& task,
                         const TrainConfig& cfg, const TrainResult& result);

// Rebuilds a dumped run: reads config.txt and params.aptm. The task is
// regenerated from the recorded seed, so artifacts stay small.
struct LoadedRun {
  TaskSpec task;
  TrainConfig cfg;
  MethodState state;
};

LoadedRun load_run_artifacts(const std::filesystem::path& dir);

}  // namespace aptkit
