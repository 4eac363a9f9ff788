// Acceptance gate for the toolkit: eight checks, one pass/fail line each,
// exit 0 only if every one holds inside its time budget. Run by ctest but
// also usable standalone; prints enough detail to audit a failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <future>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "aptkit/apt.hpp"
#include "aptkit/attention.hpp"
#include "aptkit/costmodel.hpp"
#include "aptkit/flops.hpp"
#include "aptkit/gradcheck_cases.hpp"
#include "aptkit/linalg.hpp"
#include "aptkit/numkit.hpp"
#include "aptkit/rng.hpp"
#include "aptkit/toybench.hpp"
#include "aptkit/verify.hpp"

using namespace aptkit;

namespace {

struct Criterion {
  std::string name;
  double budget_seconds = 0.0;
  bool ok = true;
  std::vector<std::string> detail;

  void require(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      detail.push_back("FAILED: " + what);
    }
  }
  void note(const std::string& what) { detail.push_back(what); }
};

std::string fmt_g(std::uint64_t flops) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << static_cast<double>(flops) / 1e9 << "G";
  return os.str();
}

std::string fmt_m(std::uint64_t params) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << static_cast<double>(params) / 1e6 << "M";
  return os.str();
}

// ---------------------------------------------------------------------------
// 1. Reference parameter totals, exact before rounding.

void criterion_params(Criterion& c) {
  const CostSpec vilt = cost_preset("vilt");
  const CostSpec meter_self = cost_preset("meter-self");
  const CostSpec meter_both = cost_preset("meter-both");

  struct Row {
    const char* label;
    std::uint64_t got;
    std::uint64_t want;
  };
  const Row rows[] = {
      {"vilt deep prompt", params_deep_prompt(vilt), 1843200},
      {"vilt shallow prompt", params_shallow_prompt(vilt), 153600},
      {"vilt module", params_apt(vilt), 1916940},
      {"meter-self deep prompt", params_deep_prompt(meter_self), 1843200},
      {"meter-both deep prompt", params_deep_prompt(meter_both), 3686400},
      {"meter-self shallow prompt", params_shallow_prompt(meter_self), 307200},
      {"meter-both module", params_apt(meter_both), 3833880},
  };
  for (const Row& row : rows) {
    c.require(row.got == row.want,
              std::string(row.label) + " expected " + std::to_string(row.want) +
                  ", got " + std::to_string(row.got));
    c.note(std::string(row.label) + ": " + std::to_string(row.got) + " (" +
           fmt_m(row.got) + ")");
  }
  for (const BandCheck& band : reference_band_checks()) {
    if (band.label.find("params") == std::string::npos) continue;
    c.require(band.ok, band.label + " outside [" + std::to_string(band.lo) + ", " +
                           std::to_string(band.hi) + "]");
  }
}

// ---------------------------------------------------------------------------
// 2. Relative flop saving at fitted sequence lengths, banded.

void criterion_savings(Criterion& c) {
  struct Case {
    const char* preset;
    double deep_target;  // reference whole-model deep-prompt total
    double lo, hi;       // accepted saving band, percent
  };
  const Case cases[] = {
      {"vilt", 5.14e9, 82.30 - 5.0, 82.30 + 5.0},
      // Two reference figures exist for the same quantity (62.62 and 63.62);
      // within five points of either is accepted, so the band is their union.
      {"meter-self", 6.35e9, 62.62 - 5.0, 63.62 + 5.0},
      {"meter-both", 13.05e9, 62.62 - 5.0, 63.62 + 5.0},
  };
  for (const Case& cs : cases) {
    CostSpec spec = cost_preset(cs.preset);
    const FitResult fit = flops_fit(spec, cs.deep_target);
    c.require(fit.n > 0, std::string(cs.preset) + " fitted length not positive");
    spec.n = fit.n;
    const double saving = 100.0 * apt_saving_vs_deep(spec);
    c.require(saving >= cs.lo && saving <= cs.hi,
              std::string(cs.preset) + " saving " + std::to_string(saving) +
                  "% outside [" + std::to_string(cs.lo) + ", " + std::to_string(cs.hi) + "]");
    std::ostringstream line;
    line << cs.preset << ": fitted n=" << fit.n << " (residual " << std::scientific
         << std::setprecision(1) << fit.residual << "), saving " << std::fixed
         << std::setprecision(2) << saving << "% in [" << cs.lo << ", " << cs.hi << "]";
    c.note(line.str());
    c.note("  computed totals: shallow " +
           fmt_g(flops_prompt_attention(spec, PromptVariant::shallow).added_flops) +
           ", deep " + fmt_g(flops_prompt_attention(spec, PromptVariant::deep_skip).added_flops) +
           ", module " + fmt_g(flops_apt(spec).added_flops));
  }
  c.note("reference totals (reported, not asserted; the quoted table omits its");
  c.note("flop convention): 5.14G 0.91G 6.35G 2.31G 19.53G 28.71G 13.05G 6.53G");
}

// ---------------------------------------------------------------------------
// 3. Attention identities on random instances, plus the gap rank bound.

void criterion_identities(Criterion& c) {
  VerifyConfig cfg;
  cfg.instances = 100;
  const VerifySuiteResult suite = run_identity_suite(cfg);
  for (const CheckResult& check : suite.checks) {
    std::ostringstream line;
    line << check.name << ": max_err " << std::scientific << std::setprecision(3)
         << check.max_err << " vs tol " << check.tol;
    c.note(line.str());
    c.require(check.pass, check.name + " exceeded its tolerance");
  }

  // Rank of prompt * (w_k w_q^T - w_v) never exceeds the sum of the factor
  // ranks, checked on planted low-rank weights where the bound is far from
  // the trivial min(p, d).
  Rng rng(9001);
  std::size_t worst_slack = 1000;
  for (int it = 0; it < 200; ++it) {
    const std::size_t d = 6 + static_cast<std::size_t>(it % 5);
    const std::size_t rq = 1 + static_cast<std::size_t>(it % 3);
    const std::size_t rv = 1 + static_cast<std::size_t>((it / 3) % 3);
    const std::size_t p = d + 1 + static_cast<std::size_t>(it % 10);
    AttentionParams attn;
    attn.heads = 1;
    attn.w_q = matmul(random_normal(d, rq, rng), random_normal(rq, d, rng));
    attn.w_k = random_normal(d, d, rng);
    attn.w_v = matmul(random_normal(d, rv, rng), random_normal(rv, d, rng));
    attn.w_o = identity(d);
    const Matrix prompt = random_normal(p, d, rng);
    const std::size_t rank = numerical_rank(vk_transform_gap(prompt, attn), 1e-9);
    if (rank > rq + rv) {
      c.require(false, "gap rank " + std::to_string(rank) + " exceeds bound " +
                           std::to_string(rq + rv) + " at instance " + std::to_string(it));
      return;
    }
    worst_slack = std::min(worst_slack, rq + rv - rank);
  }
  c.note("gap rank bound held on 200 planted instances (tightest slack " +
         std::to_string(worst_slack) + ")");
}

// ---------------------------------------------------------------------------
// 4. Tape gradients against central differences.

void criterion_gradients(Criterion& c) {
  double max_rel = 0.0;
  std::size_t checked = 0;
  std::size_t excluded = 0;
  for (int i = 0; i < 20; ++i) {
    const GradReport report = gradcheck_apt_attention(12, 16, 6, 3, 100 + i);
    max_rel = std::max(max_rel, report.max_rel_err);
    checked += report.checked;
    excluded += report.excluded;
  }
  std::ostringstream line;
  line << "20 instances, " << checked << " coordinates (" << excluded
       << " near kinks), max relative error " << std::scientific << std::setprecision(3)
       << max_rel;
  c.note(line.str());
  c.require(checked > excluded, "no smooth coordinates were checked");
  c.require(max_rel < 1e-4, "max relative error above 1e-4");
  c.note(max_rel < 1e-5 ? "meets the 1e-5 target" : "above the 1e-5 target (hard bound 1e-4)");
}

// ---------------------------------------------------------------------------
// 5. Fresh module is a no-op; the score gate ignores the input.

void criterion_init(Criterion& c) {
  Rng rng(501);
  const std::size_t d = 16;
  const AttentionParams attn = random_attention_params(d, 1, rng, 0.2);
  const Matrix x = random_normal(10, d, rng);

  Rng init_rng(77);
  const AptParams fresh = init_apt(6, d, 3, init_rng);
  const double err = max_abs_diff(apt_attention(x, attn, fresh), self_attention(x, attn));
  std::ostringstream line;
  line << "fresh module vs plain attention: max abs diff " << std::scientific
       << std::setprecision(3) << err;
  c.note(line.str());
  c.require(err <= 1e-15, "fresh module changed the attention output");

  // A live module's gate must be a pure function of its parameters: the gate
  // computed once from the key table reproduces the update bit for bit on
  // two different inputs.
  const AptParams live = init_apt(6, d, 3, init_rng, false);
  const Matrix keys = approx_keys(live);
  const double alpha = global_max(keys);
  const Matrix x2 = random_normal(14, d, rng);
  bool gate_ok = true;
  for (const Matrix* input : {&x, &x2}) {
    const Matrix via_alpha =
        scale(matmul(relu(matmul(*input, transpose(keys))), live.p_v), alpha);
    gate_ok = gate_ok && bitwise_equal(apt_delta(*input, live), via_alpha);
  }
  c.require(gate_ok, "gate is not bit-identical across inputs");
  std::ostringstream gl;
  gl << "gate alpha " << std::setprecision(17) << alpha
     << " reproduces the update bitwise on two distinct inputs";
  c.note(gl.str());
}

// ---------------------------------------------------------------------------
// 6. Counted flops match the closed forms; the module path costs strictly
//    less than merging prompts into the softmax whenever r < d.

void criterion_flops(Criterion& c) {
  struct Geometry {
    std::size_t layers, d, n, p, r, sites;
  };
  const Geometry specs[] = {
      {2, 16, 12, 6, 3, 2}, {1, 8, 5, 3, 2, 1}, {3, 32, 20, 7, 4, 3},
      {2, 12, 30, 11, 6, 4}, {2, 24, 17, 9, 5, 2}, {1, 48, 33, 16, 8, 1},
  };

  std::size_t measured_ok = 0;
  for (const Geometry& g : specs) {
    CostSpec spec;
    spec.name = "desk";
    spec.layers = g.layers;
    spec.d = g.d;
    spec.n = g.n;
    spec.p = g.p;
    spec.r = g.r;
    spec.sites = g.sites;
    const MeasuredReport report = measured_vs_analytic(spec);
    bool all = report.all_ok;
    double worst = 0.0;
    for (const MeasuredEntry& e : report.entries) worst = std::max(worst, e.rel_diff);
    if (all) ++measured_ok;
    std::ostringstream line;
    line << "d=" << g.d << " n=" << g.n << " p=" << g.p << " r=" << g.r
         << ": counted vs closed form worst rel diff " << std::scientific
         << std::setprecision(2) << worst;

    // Instrumented update vs instrumented prompt merge on the same instance.
    Rng rng(31 + g.d);
    const AttentionParams attn = random_attention_params(g.d, 1, rng, 0.2);
    const Matrix x = random_normal(g.n, g.d, rng);
    const Matrix prompt = random_normal(g.p, g.d, rng);
    AptParams params;
    params.p_v = random_normal(g.p, g.d, rng);
    params.w1 = random_normal(g.d, g.r, rng);
    params.w2 = random_normal(g.r, g.d, rng);

    FlopCounter update_cost;
    {
      CountingScope scope(update_cost);
      apt_delta(x, params);
    }
    const SelfAttentionCache cache = self_attention_cached(x, attn);
    FlopCounter merge_cost;
    {
      CountingScope scope(merge_cost);
      apply_prompt_extension(cache, prompt, attn);
    }
    line << "; module " << update_cost.total_flops() << " vs merge "
         << merge_cost.total_flops() << " flops";
    c.note(line.str());
    c.require(all, "counted flops off the closed form by more than 1% on d=" +
                       std::to_string(g.d));
    c.require(update_cost.total_flops() < merge_cost.total_flops(),
              "module update not cheaper than the prompt merge at d=" + std::to_string(g.d));
  }
  c.require(measured_ok >= 3, "fewer than 3 specs matched their closed forms");

  for (const std::string& name : cost_preset_names()) {
    const CostSpec spec = cost_preset(name);
    if (spec.r >= spec.d) continue;
    c.require(flops_apt(spec).added_flops <
                  flops_prompt_attention(spec, PromptVariant::deep_skip).added_flops,
              name + ": closed-form module flops not below the deep-prompt path");
  }
}

// ---------------------------------------------------------------------------
// 7. Adaptation ordering on the synthetic task, three seeds.

void criterion_adaptation(Criterion& c) {
  struct SeedOutcome {
    double cls = 0.0, deep = 0.0, apt = 0.0;
  };
  const std::uint64_t seeds[] = {1, 2, 3};
  std::vector<TaskSpec> tasks;
  tasks.reserve(3);
  for (std::uint64_t seed : seeds) tasks.push_back(make_task(seed));

  auto run = [](const TaskSpec& task, TuneMethod method) {
    TrainConfig cfg;
    cfg.method = method;
    return train(task.model, task, cfg).final_val_loss;
  };

  std::vector<std::future<double>> futures;
  for (const TaskSpec& task : tasks) {
    for (TuneMethod method : {TuneMethod::classifier_only, TuneMethod::deep, TuneMethod::apt}) {
      futures.push_back(std::async(std::launch::async, run, std::cref(task), method));
    }
  }
  SeedOutcome outcomes[3];
  for (int i = 0; i < 3; ++i) {
    outcomes[i].cls = futures[3 * i + 0].get();
    outcomes[i].deep = futures[3 * i + 1].get();
    outcomes[i].apt = futures[3 * i + 2].get();
  }

  int apt_close = 0;
  for (int i = 0; i < 3; ++i) {
    const SeedOutcome& o = outcomes[i];
    std::ostringstream line;
    line << "seed " << seeds[i] << ": classifier " << std::fixed << std::setprecision(4)
         << o.cls << ", deep " << o.deep << ", module " << o.apt;
    const bool close = o.apt <= 1.05 * o.deep;
    if (close) ++apt_close;
    line << (close ? " (module within 1.05x deep)" : " (module concedes this seed)");
    c.note(line.str());
    c.require(o.cls > o.deep, "classifier-only did not lose to deep prompting on seed " +
                                  std::to_string(seeds[i]));
  }
  c.require(apt_close >= 2, "module within 1.05x of deep prompting on only " +
                                std::to_string(apt_close) + "/3 seeds");
}

// ---------------------------------------------------------------------------
// 8. Layer-0 input-to-prompt score mass: alive after training, exactly zero
//    for the dead start.

double layer0_ip_mass(const TaskSpec& task, const TrainConfig& cfg, const MethodState& state) {
  std::ostringstream os;
  attention_diffusion_dump(task.model, task, state, cfg.method, 0, os);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);  // header
  double mass = 0.0;
  while (std::getline(is, line)) {
    std::istringstream row(line);
    std::string layer, block, r, col, w;
    std::getline(row, layer, ',');
    std::getline(row, block, ',');
    std::getline(row, r, ',');
    std::getline(row, col, ',');
    std::getline(row, w, ',');
    if (block == "IP") mass += std::abs(std::stod(w));
  }
  return mass;
}

void criterion_diffusion_dump(Criterion& c) {
  const TaskSpec task = make_task(1);

  TrainConfig trained_cfg;
  trained_cfg.method = TuneMethod::apt;
  trained_cfg.steps = 60;
  const TrainResult trained = train(task.model, task, trained_cfg);
  const double live_mass = layer0_ip_mass(task, trained_cfg, trained.state);
  std::ostringstream live_line;
  live_line << "trained module layer-0 input-to-prompt mass " << std::scientific
            << std::setprecision(3) << live_mass;
  c.note(live_line.str());
  c.require(live_mass > 0.0, "trained module carries no input-to-prompt mass");

  TrainConfig dead_cfg;
  dead_cfg.method = TuneMethod::apt;
  dead_cfg.steps = 0;
  dead_cfg.apt_identity_init = true;
  const TrainResult dead = train(task.model, task, dead_cfg);
  const double dead_mass = layer0_ip_mass(task, dead_cfg, dead.state);
  c.note("untrained zero-start module layer-0 mass " + std::to_string(dead_mass));
  c.require(dead_mass == 0.0, "zero-start module mass is not exactly zero");
}

}  // namespace

int main() {
  struct Entry {
    const char* name;
    double budget;
    void (*fn)(Criterion&);
  };
  const Entry entries[] = {
      {"reference parameter totals", 1.0, criterion_params},
      {"flop savings at fitted lengths", 1.0, criterion_savings},
      {"attention identities and rank bound", 60.0, criterion_identities},
      {"tape gradients vs finite differences", 60.0, criterion_gradients},
      {"no-op start and input-free gate", 1.0, criterion_init},
      {"counted flops and module advantage", 30.0, criterion_flops},
      {"adaptation ordering on three seeds", 300.0, criterion_adaptation},
      {"layer-0 diffusion mass", 60.0, criterion_diffusion_dump},
  };

  int failures = 0;
  int index = 0;
  for (const Entry& entry : entries) {
    ++index;
    Criterion c;
    c.name = entry.name;
    c.budget_seconds = entry.budget;
    const auto start = std::chrono::steady_clock::now();
    try {
      entry.fn(c);
    } catch (const std::exception& e) {
      c.require(false, std::string("unexpected exception: ") + e.what());
    }
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (elapsed >= entry.budget) {
      c.ok = false;
      c.detail.push_back("FAILED: over time budget");
    }
    std::ostringstream head;
    head << (c.ok ? "[pass]" : "[FAIL]") << " criterion " << index << ": " << c.name << " ("
         << std::fixed << std::setprecision(2) << elapsed << "s of " << std::setprecision(0)
         << entry.budget << "s budget)";
    std::cout << head.str() << "\n";
    for (const std::string& line : c.detail) std::cout << "    " << line << "\n";
    if (!c.ok) ++failures;
  }
  if (failures == 0) {
    std::cout << "acceptance: all 8 criteria passed\n";
    return 0;
  }
  std::cout << "acceptance: " << failures << " criteria FAILED\n";
  return 1;
}
