#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "aptkit/costmodel.hpp"
#include "aptkit/numkit.hpp"
#include "aptkit/toybench.hpp"

using namespace aptkit;
namespace fs = std::filesystem;

namespace {

TrainConfig quick_config(TuneMethod method, std::size_t steps = 25) {
  TrainConfig cfg;
  cfg.method = method;
  cfg.steps = steps;
  cfg.seed = 1;
  return cfg;
}

bool states_equal(const MethodState& a, const MethodState& b) {
  if (!bitwise_equal(a.cls, b.cls) || !bitwise_equal(a.head, b.head)) return false;
  if (a.bank.prompts.size() != b.bank.prompts.size()) return false;
  for (std::size_t i = 0; i < a.bank.prompts.size(); ++i)
    if (!bitwise_equal(a.bank.prompts[i], b.bank.prompts[i])) return false;
  if (a.apt.size() != b.apt.size()) return false;
  for (std::size_t i = 0; i < a.apt.size(); ++i) {
    if (!bitwise_equal(a.apt[i].p_v, b.apt[i].p_v)) return false;
    if (!bitwise_equal(a.apt[i].w1, b.apt[i].w1)) return false;
    if (!bitwise_equal(a.apt[i].w2, b.apt[i].w2)) return false;
    if (a.apt[i].log_scale != b.apt[i].log_scale) return false;
  }
  return true;
}

// layer -> block -> row -> summed weight.
using DumpIndex = std::map<std::string, std::map<std::size_t, double>>;

DumpIndex parse_dump(const std::string& csv) {
  DumpIndex index;
  std::istringstream is(csv);
  std::string line;
  std::getline(is, line);  // header
  while (std::getline(is, line)) {
    std::istringstream row(line);
    std::string layer, block, r, c, w;
    std::getline(row, layer, ',');
    std::getline(row, block, ',');
    std::getline(row, r, ',');
    std::getline(row, c, ',');
    std::getline(row, w, ',');
    index[block][std::stoul(r)] += std::stod(w);
  }
  return index;
}

}  // namespace

TEST_CASE("tasks clear the linear-probe floor by construction") {
  for (std::uint64_t seed : {1, 2, 3}) {
    TaskSpec task = make_task(seed);
    INFO("seed ", seed, " floor ", task.classifier_floor);
    CHECK(task.classifier_floor > 0.1);
    CHECK(task.train.size() > 0);
    CHECK(task.val.size() > 0);
  }
  TaskSpec cls = make_task(1, TaskKind::token_classification);
  CHECK(cls.classifier_floor > 0.1);
}

TEST_CASE("task construction is deterministic") {
  TaskSpec a = make_task(7);
  TaskSpec b = make_task(7);
  CHECK(a.classifier_floor == b.classifier_floor);
  REQUIRE(a.train.size() == b.train.size());
  CHECK(bitwise_equal(a.train[0].tokens, b.train[0].tokens));
  CHECK(bitwise_equal(a.train[0].target, b.train[0].target));
  CHECK(bitwise_equal(a.model.cls, b.model.cls));
}

TEST_CASE("training is bit-for-bit reproducible") {
  TaskSpec task = make_task(1);
  TrainConfig cfg = quick_config(TuneMethod::apt);
  TrainResult first = train(task.model, task, cfg);
  TrainResult second = train(task.model, task, cfg);
  CHECK(first.loss_curve == second.loss_curve);
  CHECK(first.val_curve == second.val_curve);
  CHECK(first.final_val_loss == second.final_val_loss);
  CHECK(states_equal(first.state, second.state));
}

TEST_CASE("the frozen stack is never touched by training") {
  TaskSpec task = make_task(2);
  const FrozenModel before = task.model;  // deep copy
  TrainResult result = train(task.model, task, quick_config(TuneMethod::deep));
  CHECK(result.loss_curve.size() == 26);  // step 0 plus 25 updates
  for (std::size_t l = 0; l < task.model.layers.size(); ++l) {
    CHECK(bitwise_equal(task.model.layers[l].attn.w_q, before.layers[l].attn.w_q));
    CHECK(bitwise_equal(task.model.layers[l].attn.w_v, before.layers[l].attn.w_v));
    CHECK(bitwise_equal(task.model.layers[l].w_ff1, before.layers[l].w_ff1));
  }
  CHECK(bitwise_equal(task.model.head, before.head));
}

TEST_CASE("zero steps leaves every method at its initial loss") {
  TaskSpec task = make_task(1);
  for (TuneMethod method : {TuneMethod::classifier_only, TuneMethod::shallow,
                            TuneMethod::deep, TuneMethod::apt}) {
    TrainConfig cfg = quick_config(method, 0);
    TrainResult result = train(task.model, task, cfg);
    CHECK(result.loss_curve.size() == 1);
    CHECK(result.loss_curve.front() == result.initial_loss);
    MethodState fresh = init_method_state(task.model, cfg);
    CHECK(result.final_val_loss ==
          method_loss(task.model, fresh, method, task.kind, task.val));
  }
}

TEST_CASE("an identity-initialized module is invisible to the forward pass") {
  TaskSpec task = make_task(3);
  TrainConfig apt_cfg = quick_config(TuneMethod::apt, 0);
  apt_cfg.apt_identity_init = true;
  TrainConfig cls_cfg = quick_config(TuneMethod::classifier_only, 0);
  TrainResult apt_run = train(task.model, task, apt_cfg);
  TrainResult cls_run = train(task.model, task, cls_cfg);
  // Not approximately: the dead module contributes exactly nothing.
  CHECK(apt_run.initial_loss == cls_run.initial_loss);
  CHECK(apt_run.final_val_loss == cls_run.final_val_loss);
}

TEST_CASE("per-method trainable counts match the cost formulas") {
  TaskSpec task = make_task(1);
  CostSpec spec;
  spec.layers = task.model.layers.size();
  spec.d = task.model.dim();
  spec.n = 1 + task.train[0].tokens.rows;  // class token rides along
  spec.sites = task.model.layers.size();
  spec.encoders = 1;

  TrainConfig cfg = quick_config(TuneMethod::deep, 0);
  spec.p = cfg.p;
  spec.r = cfg.r;
  CHECK(train(task.model, task, cfg).added_params == params_deep_prompt(spec));
  cfg.method = TuneMethod::shallow;
  CHECK(train(task.model, task, cfg).added_params == params_shallow_prompt(spec));
  cfg.method = TuneMethod::apt;
  CHECK(train(task.model, task, cfg).added_params == params_apt(spec));
  cfg.method = TuneMethod::classifier_only;
  CHECK(train(task.model, task, cfg).added_params == 0u);
}

TEST_CASE("training reduces the loss for every method") {
  TaskSpec task = make_task(1);
  for (TuneMethod method : {TuneMethod::classifier_only, TuneMethod::deep, TuneMethod::apt}) {
    TrainResult result = train(task.model, task, quick_config(method, 40));
    INFO(to_string(method), ": ", result.initial_loss, " -> ", result.loss_curve.back());
    CHECK(result.loss_curve.back() < 0.5 * result.initial_loss);
  }
}

TEST_CASE("a runaway learning rate is reported as divergence") {
  TaskSpec task = make_task(1);
  TrainConfig cfg = quick_config(TuneMethod::deep, 60);
  cfg.lr = 50.0;
  CHECK_THROWS_AS(train(task.model, task, cfg), std::runtime_error);
}

TEST_CASE("prompt-method dumps are softmax rows over input and prompt columns") {
  TaskSpec task = make_task(1);
  TrainConfig cfg = quick_config(TuneMethod::deep, 10);
  TrainResult result = train(task.model, task, cfg);
  std::ostringstream os;
  attention_diffusion_dump(task.model, task, result.state, cfg.method, 0, os);
  DumpIndex dump = parse_dump(os.str());
  REQUIRE(dump.count("II"));
  REQUIRE(dump.count("IP"));
  REQUIRE(dump.count("PI"));
  REQUIRE(dump.count("PP"));
  // Toy sizes sit below the top-k caps, so each input row's II + IP mass is
  // a complete softmax row.
  for (const auto& [row, ii_sum] : dump["II"]) {
    REQUIRE(dump["IP"].count(row));
    CHECK(ii_sum + dump["IP"][row] == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("module dumps carry score mass only once trained") {
  TaskSpec task = make_task(1);

  TrainConfig dead = quick_config(TuneMethod::apt, 0);
  dead.apt_identity_init = true;
  TrainResult untrained = train(task.model, task, dead);
  std::ostringstream os_dead;
  attention_diffusion_dump(task.model, task, untrained.state, dead.method, 0, os_dead);
  DumpIndex dump_dead = parse_dump(os_dead.str());
  double dead_mass = 0.0;
  for (const auto& [row, s] : dump_dead["IP"]) dead_mass += std::abs(s);
  CHECK(dead_mass == 0.0);

  TrainResult trained = train(task.model, task, quick_config(TuneMethod::apt, 40));
  std::ostringstream os_live;
  attention_diffusion_dump(task.model, task, trained.state, TuneMethod::apt, 0, os_live);
  DumpIndex dump_live = parse_dump(os_live.str());
  double live_mass = 0.0;
  for (const auto& [row, s] : dump_live["IP"]) live_mass += std::abs(s);
  CHECK(live_mass > 0.0);
  // The module's prompts are never queried, so only IP exists.
  CHECK(!dump_live.count("PI"));
  CHECK(!dump_live.count("PP"));
}

TEST_CASE("run artifacts reload into the identical state") {
  TaskSpec task = make_task(1);
  TrainConfig cfg = quick_config(TuneMethod::apt, 15);
  cfg.r = 3;
  TrainResult result = train(task.model, task, cfg);

  fs::path dir = fs::temp_directory_path() /
                 ("aptkit_run_" + std::to_string(::getpid()));
  write_run_artifacts(dir, task, cfg, result);
  CHECK(fs::exists(dir / "config.txt"));
  CHECK(fs::exists(dir / "curve.csv"));
  CHECK(fs::exists(dir / "params.aptm"));
  CHECK(fs::exists(dir / "dump_layer0.csv"));

  LoadedRun run = load_run_artifacts(dir);
  fs::remove_all(dir);
  CHECK(run.cfg.method == cfg.method);
  CHECK(run.cfg.steps == cfg.steps);
  CHECK(run.cfg.r == cfg.r);
  CHECK(run.cfg.seed == cfg.seed);
  CHECK(run.task.seed == task.seed);
  CHECK(run.task.kind == task.kind);
  CHECK(bitwise_equal(run.task.model.cls, task.model.cls));
  CHECK(states_equal(run.state, result.state));
}

TEST_CASE("loading an empty directory fails loudly") {
  CHECK_THROWS_AS(load_run_artifacts(fs::temp_directory_path() / "aptkit_no_such_run"),
                  std::runtime_error);
}

TEST_CASE("method names round trip") {
  for (TuneMethod method : {TuneMethod::classifier_only, TuneMethod::shallow,
                            TuneMethod::deep, TuneMethod::apt}) {
    CHECK(tune_method_from_string(to_string(method)) == method);
  }
  CHECK_THROWS_AS(tune_method_from_string("adapter"), std::invalid_argument);
  for (TaskKind kind : {TaskKind::regression_shift, TaskKind::token_classification}) {
    CHECK(task_kind_from_string(to_string(kind)) == kind);
  }
  CHECK_THROWS_AS(task_kind_from_string("span"), std::invalid_argument);
}
