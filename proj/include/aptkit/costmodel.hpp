#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "aptkit/flops.hpp"

namespace aptkit {

// Whether the closed forms charge for extending each softmax row by the
// prompt columns (n*p extra exponentials plus n renormalizing divides per
// site). The instrumented kernels always record this work; leaving the
// constant on keeps counted and analytic totals identical. Some accounting
// conventions ignore renormalization, so the forms can be rebuilt without it;
// the difference is far below the 1% agreement tolerance at any realistic
// size.
inline constexpr bool kCountSoftmaxExtension = true;

// One model configuration to cost. `sites` is the number of attention sites
// receiving prompts, which the per-site deep/apt costs are multiplied by;
// `encoders` counts separate token streams, each carrying its own shallow
// prompt through `layers` layers.
struct CostSpec {
  std::string name;
  std::size_t layers = 0;
  std::size_t d = 0;
  std::size_t n = 0;
  std::size_t p = 0;
  std::size_t r = 0;
  std::size_t sites = 0;
  std::size_t ffn_mult = 4;
  std::size_t encoders = 1;
};

// Preset names: vilt, meter-self, meter-both, clip-text. Sequence lengths of
// the vilt/meter presets were fitted against the reference deep-prompt totals
// (see flops_fit); throws on unknown names.
CostSpec cost_preset(const std::string& name);
std::vector<std::string> cost_preset_names();

enum class PromptVariant {
  deep_skip,  // prompts merged into cached attention, prompt query rows never formed
  deep_full,  // prompt query rows materialized through attention and discarded
  shallow,    // prompt rows travel every layer, attention and feed-forward included
};

PromptVariant prompt_variant_from_string(const std::string& s);
std::string to_string(PromptVariant v);

// Cost of one method on one spec. `added_flops` covers the whole model per
// forward pass: `multiplier` (attention sites, or encoders * layers for
// shallow) times the per-site counter, which always equals the sum of the
// named terms exactly. Same for `added_params` and its terms.
struct CostTerm {
  std::string name;
  FlopCounter counter;
};

struct CostReport {
  std::string method;
  std::uint64_t added_params = 0;
  std::vector<std::pair<std::string, std::uint64_t>> param_terms;
  std::uint64_t multiplier = 1;
  FlopCounter per_site;
  std::vector<CostTerm> flop_terms;
  std::uint64_t added_flops = 0;
};

// Trainable parameters added by each method. Exact integers.
std::uint64_t params_deep_prompt(const CostSpec& spec);     // sites * p * d
std::uint64_t params_shallow_prompt(const CostSpec& spec);  // encoders * p * d
// sites * (p*d + 2*d*r + 1); zero when p = 0, a module without prompts adds
// nothing.
std::uint64_t params_apt(const CostSpec& spec);

// Closed-form extra FLOPs of prompting under the counter convention.
CostReport flops_prompt_attention(const CostSpec& spec, PromptVariant variant);
CostReport flops_apt(const CostSpec& spec);

// Relative saving of the module against the cached deep-prompt path,
// (deep_skip - apt) / deep_skip on whole-model totals.
double apt_saving_vs_deep(const CostSpec& spec);

// Sequence length recovered from a whole-model deep-prompt FLOP total quoted
// without its convention. Inverts the dominant multiply-accumulate count of
// the materialized extension, sites * (2pd^2 + 4npd + 2p^2d), treating the
// target as a plain MAC total; n is rounded to the nearest integer and the
// relative residual of the round trip is reported. Throws when no positive
// length fits.
struct FitResult {
  std::size_t n = 0;
  double residual = 0.0;  // |model(n) - target| / target
};

FitResult flops_fit(const CostSpec& spec, double target_deep_flops);

// Instrumented single-site forwards compared against the closed forms.
struct MeasuredEntry {
  std::string method;
  std::uint64_t counted = 0;
  std::uint64_t analytic = 0;
  double rel_diff = 0.0;
  bool ok = false;  // within 1%
};

struct MeasuredReport {
  std::vector<MeasuredEntry> entries;
  bool all_ok = true;
};

// Requires n * p * d <= 10^7 so the dense forwards stay cheap.
MeasuredReport measured_vs_analytic(const CostSpec& spec, std::uint64_t seed = 7);

// One table row per method (shallow, deep variants, apt) for `spec`.
std::vector<CostReport> cost_table(const CostSpec& spec);
void write_cost_table_markdown(std::ostream& os, const CostSpec& spec,
                               const std::vector<CostReport>& rows);
void write_cost_table_csv(std::ostream& os, const CostSpec& spec,
                          const std::vector<CostReport>& rows);

// Reference-figure checks: parameter totals that must round to the quoted
// millions, fitted sequence lengths with their round-trip residuals, and the
// relative-saving bands. Shared by the CLI flag and the acceptance tests so
// the bands live in exactly one place.
struct BandCheck {
  std::string label;
  double value = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  bool ok = false;
  std::string note;  // reported context, never asserted
};

std::vector<BandCheck> reference_band_checks();

}  // namespace aptkit
