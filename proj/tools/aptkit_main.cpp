// Command-line front end: cost tables, derivation-identity verification,
// gradient checks, toy adaptation runs and attention dumps.
//
// Exit codes: 0 success, 1 check or assertion failure, 2 usage error.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "aptkit/costmodel.hpp"
#include "aptkit/gradcheck.hpp"
#include "aptkit/gradcheck_cases.hpp"
#include "aptkit/toybench.hpp"
#include "aptkit/verify.hpp"

namespace fs = std::filesystem;
using namespace aptkit;

namespace {

constexpr int kOk = 0;
constexpr int kCheckFailed = 1;
constexpr int kUsage = 2;

std::ostream& open_sink(const std::string& path, std::ofstream& file) {
  if (path.empty()) return std::cout;
  file.open(path);
  if (!file) throw std::invalid_argument("cannot open output file '" + path + "'");
  return file;
}

// ---------------------------------------------------------------- cost ----

struct CostArgs {
  std::string preset;
  std::int64_t layers = -1, d = -1, n = -1, p = -1, r = -1, sites = -1;
  std::int64_t ffn_mult = -1, encoders = -1;
  bool check_paper = false;
  std::string format = "md";
  std::string out;
};

CostSpec resolve_spec(const CostArgs& a) {
  CostSpec spec;
  if (!a.preset.empty()) {
    spec = cost_preset(a.preset);
  } else {
    if (a.layers < 0 || a.d < 0 || a.n < 0 || a.p < 0 || a.sites < 0 || a.r < 0) {
      throw std::invalid_argument(
          "without --preset, all of --layers, --d, --n, --p, --r and --sites are required");
    }
    spec.name = "custom";
  }
  auto take = [](std::int64_t v, std::size_t& field) {
    if (v >= 0) field = static_cast<std::size_t>(v);
  };
  take(a.layers, spec.layers);
  take(a.d, spec.d);
  take(a.n, spec.n);
  take(a.p, spec.p);
  take(a.r, spec.r);
  take(a.sites, spec.sites);
  take(a.ffn_mult, spec.ffn_mult);
  take(a.encoders, spec.encoders);
  return spec;
}

int cmd_cost(const CostArgs& a) {
  CostSpec spec;
  try {
    spec = resolve_spec(a);
  } catch (const std::invalid_argument& e) {
    std::cerr << "cost: " << e.what() << "\n";
    return kUsage;
  }

  std::vector<CostReport> rows = cost_table(spec);
  std::ofstream file;
  std::ostream& os = open_sink(a.out, file);
  if (a.format == "csv") {
    write_cost_table_csv(os, spec, rows);
  } else {
    write_cost_table_markdown(os, spec, rows);
  }

  if (!a.check_paper) return kOk;
  bool all_ok = true;
  std::cout << "\nreference bands:\n";
  for (const BandCheck& c : reference_band_checks()) {
    std::printf("  [%s] %-38s %14.5f in [%.5f, %.5f]%s%s\n", c.ok ? "ok" : "FAIL",
                c.label.c_str(), c.value, c.lo, c.hi, c.note.empty() ? "" : "  # ",
                c.note.c_str());
    all_ok = all_ok && c.ok;
  }
  return all_ok ? kOk : kCheckFailed;
}

// -------------------------------------------------------------- verify ----

int cmd_verify(const VerifyConfig& cfg) {
  VerifySuiteResult suite = run_identity_suite(cfg);
  for (const CheckResult& c : suite.checks) {
    std::printf("[%s] %-24s max_err=%.3e tol=%.0e\n", c.pass ? "ok" : "FAIL", c.name.c_str(),
                c.max_err, c.tol);
  }
  return suite.all_pass ? kOk : kCheckFailed;
}

// ------------------------------------------------------------ gradcheck ----

struct GradArgs {
  std::size_t n = 12, d = 16, p = 6, r = 3;
  std::size_t instances = 5;
  std::uint64_t seed = 1;
  double eps = 1e-5;
  double tol = 1e-4;
  std::string out;
};

int cmd_gradcheck(const GradArgs& a) {
  GradReport merged;
  auto absorb = [&merged](GradReport r, const std::string& tag) {
    for (GradEntry& e : r.entries) {
      e.param = tag + "." + e.param;
      merged.entries.push_back(std::move(e));
    }
    for (ParamGradSummary& s : r.params) {
      s.param = tag + "." + s.param;
      merged.params.push_back(std::move(s));
    }
    merged.max_rel_err = std::max(merged.max_rel_err, r.max_rel_err);
    merged.checked += r.checked;
    merged.excluded += r.excluded;
  };

  for (std::size_t i = 0; i < a.instances; ++i) {
    const std::uint64_t seed = a.seed + i;
    const std::string run = "[" + std::to_string(seed) + "]";
    absorb(gradcheck_apt_attention(a.n, a.d, a.p, a.r, seed, a.eps), "apt_attention" + run);
    absorb(gradcheck_prompt_extension(a.n, a.d, a.p, seed, a.eps), "prompt_extension" + run);
  }

  std::ofstream file;
  write_grad_report(open_sink(a.out, file), merged);
  std::fprintf(stderr, "gradcheck: %zu coordinates, %zu excluded, max rel err %.3e (tol %g)\n",
               merged.checked, merged.excluded, merged.max_rel_err, a.tol);
  return merged.pass(a.tol) ? kOk : kCheckFailed;
}

// --------------------------------------------------------------- train ----

struct TrainArgs {
  std::string method = "apt";
  std::string compare;
  std::string kind = "regression-shift";
  TrainConfig cfg;
  std::string out = "apt_runs";
  bool no_artifacts = false;
};

int cmd_train(const TrainArgs& a) {
  std::vector<TuneMethod> methods;
  std::string source = a.compare.empty() ? a.method : a.compare;
  std::stringstream ss(source);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) methods.push_back(tune_method_from_string(item));
  }
  if (methods.empty()) {
    std::cerr << "train: no method selected\n";
    return kUsage;
  }

  const TaskKind kind = task_kind_from_string(a.kind);
  const TaskSpec task = make_task(a.cfg.seed, kind);
  std::printf("task seed=%llu kind=%s classifier_floor=%.4f\n",
              static_cast<unsigned long long>(a.cfg.seed), to_string(kind).c_str(),
              task.classifier_floor);

  // Independent runs; the spec allows parallel execution across methods.
  std::vector<std::future<TrainResult>> futures;
  for (TuneMethod m : methods) {
    TrainConfig cfg = a.cfg;
    cfg.method = m;
    futures.push_back(std::async(methods.size() > 1 ? std::launch::async : std::launch::deferred,
                                 [&task, cfg] { return train(task.model, task, cfg); }));
  }

  std::printf("%-12s %12s %12s %12s %12s %8s\n", "method", "added_params", "init_loss",
              "final_train", "final_val", "wall_s");
  bool diverged = false;
  for (std::size_t i = 0; i < methods.size(); ++i) {
    TrainConfig cfg = a.cfg;
    cfg.method = methods[i];
    try {
      TrainResult result = futures[i].get();
      std::printf("%-12s %12zu %12.4f %12.4f %12.4f %8.1f\n",
                  to_string(methods[i]).c_str(), result.added_params, result.initial_loss,
                  result.loss_curve.back(), result.final_val_loss, result.wall_seconds);
      for (const std::string& w : result.window_warnings) {
        std::fprintf(stderr, "  warning(%s): %s\n", to_string(methods[i]).c_str(), w.c_str());
      }
      if (!a.no_artifacts) {
        fs::path dir = fs::path(a.out) / (to_string(methods[i]) + "-" + to_string(kind) +
                                          "-seed" + std::to_string(cfg.seed));
        write_run_artifacts(dir, task, cfg, result);
        std::printf("  artifacts: %s\n", dir.string().c_str());
      }
    } catch (const std::exception& e) {
      std::fprintf(stderr, "train(%s): %s\n", to_string(methods[i]).c_str(), e.what());
      diverged = true;
    }
  }
  return diverged ? kCheckFailed : kOk;
}

// ----------------------------------------------------------- attn-dump ----

struct DumpArgs {
  std::string run;
  std::int64_t layer = -1;  // all layers
  std::size_t topk_input = 15;
  std::size_t topk_prompt = 30;
  std::string out;
};

int cmd_attn_dump(const DumpArgs& a) {
  LoadedRun run;
  try {
    run = load_run_artifacts(a.run);
  } catch (const std::exception& e) {
    std::cerr << "attn-dump: " << e.what() << "\n";
    return kUsage;
  }

  const std::size_t depth = run.task.model.layers.size();
  if (a.layer >= static_cast<std::int64_t>(depth)) {
    std::cerr << "attn-dump: layer " << a.layer << " out of range (depth " << depth << ")\n";
    return kUsage;
  }
  const fs::path out_dir = a.out.empty() ? fs::path(a.run) : fs::path(a.out);
  fs::create_directories(out_dir);

  for (std::size_t l = 0; l < depth; ++l) {
    if (a.layer >= 0 && static_cast<std::size_t>(a.layer) != l) continue;
    fs::path file = out_dir / ("dump_layer" + std::to_string(l) + ".csv");
    std::ofstream os(file);
    if (!os) {
      std::cerr << "attn-dump: cannot write " << file << "\n";
      return kUsage;
    }
    attention_diffusion_dump(run.task.model, run.task, run.state, run.cfg.method, l, os,
                             a.topk_input, a.topk_prompt);
    std::printf("wrote %s\n", file.string().c_str());
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Numerical toolkit for prompt-extended attention and its low-rank "
               "approximation module: cost accounting, derivation identities, gradient "
               "checks and a desk-scale adaptation benchmark."};
  app.require_subcommand(1);

  CostArgs cost_args;
  CLI::App* cost = app.add_subcommand("cost", "Parameter and FLOP accounting tables");
  cost->add_option("--preset", cost_args.preset,
                   "Named configuration: vilt, meter-self, meter-both, clip-text");
  cost->add_option("--layers", cost_args.layers, "Transformer layers");
  cost->add_option("--d", cost_args.d, "Embedding dimension");
  cost->add_option("--n", cost_args.n, "Input sequence length");
  cost->add_option("--p", cost_args.p, "Prompt length");
  cost->add_option("--r", cost_args.r, "Module rank");
  cost->add_option("--sites", cost_args.sites, "Prompted attention sites");
  cost->add_option("--ffn-mult", cost_args.ffn_mult, "Feed-forward width multiplier");
  cost->add_option("--encoders", cost_args.encoders, "Encoder count (shallow prompting)");
  cost->add_flag("--check-paper", cost_args.check_paper,
                 "Assert the reference parameter/saving bands; exit 1 on violation");
  cost->add_option("--format", cost_args.format, "Table format")
      ->check(CLI::IsMember({"md", "csv"}));
  cost->add_option("--out", cost_args.out, "Write the table to a file instead of stdout");

  VerifyConfig verify_cfg;
  CLI::App* verify = app.add_subcommand("verify", "Run the derivation-identity suite");
  verify->add_option("--d", verify_cfg.d, "Embedding dimension");
  verify->add_option("--n", verify_cfg.n, "Input rows");
  verify->add_option("--p", verify_cfg.p, "Prompt rows");
  verify->add_option("--instances", verify_cfg.instances, "Random instances per check");
  verify->add_option("--seed", verify_cfg.seed, "Random seed")->envname("APT_SEED");
  verify->add_option("--perturb", verify_cfg.perturb,
                     "Fault-injection magnitude (negative control; nonzero must fail)");

  GradArgs grad_args;
  CLI::App* grad = app.add_subcommand("gradcheck",
                                      "Check tape gradients against central differences");
  grad->add_option("--n", grad_args.n, "Input rows");
  grad->add_option("--d", grad_args.d, "Embedding dimension");
  grad->add_option("--p", grad_args.p, "Prompt rows");
  grad->add_option("--r", grad_args.r, "Module rank");
  grad->add_option("--instances", grad_args.instances, "Instances per path");
  grad->add_option("--seed", grad_args.seed, "Base seed")->envname("APT_SEED");
  grad->add_option("--eps", grad_args.eps, "Central-difference step")
      ->check(CLI::Range(1e-7, 1e-3));
  grad->add_option("--tol", grad_args.tol, "Max relative error accepted");
  grad->add_option("--out", grad_args.out, "Write the per-coordinate CSV to a file");

  TrainArgs train_args;
  CLI::App* tr = app.add_subcommand("train", "Adapt the frozen toy model to a synthetic task");
  tr->add_option("--method", train_args.method,
                 "Tuning method: classifier, shallow, deep, apt");
  tr->add_option("--compare", train_args.compare,
                 "Comma-separated methods trained side by side on the same task");
  tr->add_option("--kind", train_args.kind,
                 "Task kind: regression-shift or token-classification");
  tr->add_option("--seed", train_args.cfg.seed, "Task and initialization seed")
      ->envname("APT_SEED");
  tr->add_option("--steps", train_args.cfg.steps, "SGD steps");
  tr->add_option("--p", train_args.cfg.p, "Prompt rows per site");
  tr->add_option("--r", train_args.cfg.r, "Module rank");
  tr->add_option("--lr", train_args.cfg.lr, "Learning rate");
  tr->add_option("--momentum", train_args.cfg.momentum, "SGD momentum");
  tr->add_flag("--identity-init", train_args.cfg.apt_identity_init,
               "Start the module as an exact no-op (stays untrainable; diagnostic)");
  tr->add_option("--out", train_args.out, "Artifacts directory");
  tr->add_flag("--no-artifacts", train_args.no_artifacts, "Skip writing run artifacts");

  DumpArgs dump_args;
  CLI::App* dump = app.add_subcommand("attn-dump",
                                      "Re-dump block weights from a completed run directory");
  dump->add_option("--run", dump_args.run, "Run directory written by train")->required();
  dump->add_option("--layer", dump_args.layer, "Single layer to dump (default: all)");
  dump->add_option("--topk-input", dump_args.topk_input, "Most-attended tokens kept per segment");
  dump->add_option("--topk-prompt", dump_args.topk_prompt, "Prompt rows kept");
  dump->add_option("--out", dump_args.out, "Output directory (default: the run directory)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*cost) return cmd_cost(cost_args);
    if (*verify) return cmd_verify(verify_cfg);
    if (*grad) return cmd_gradcheck(grad_args);
    if (*tr) return cmd_train(train_args);
    if (*dump) return cmd_attn_dump(dump_args);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kCheckFailed;
  }
  return kUsage;
}
