#include "aptkit/costmodel.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>

#include "aptkit/apt.hpp"
#include "aptkit/attention.hpp"
#include "aptkit/matrix.hpp"
#include "aptkit/numkit.hpp"
#include "aptkit/rng.hpp"

namespace aptkit {
namespace {

// Whole-model deep-prompt totals the preset sequence lengths were fitted
// against; quoted without a convention, so they are fit targets and report
// context, never asserted.
constexpr double kViltDeepTarget = 5.14e9;
constexpr double kMeterSelfDeepTarget = 6.35e9;
constexpr double kMeterBothDeepTarget = 13.05e9;

void check_spec(const CostSpec& spec) {
  if (spec.layers == 0 || spec.d == 0 || spec.n == 0 || spec.sites == 0 ||
      spec.ffn_mult == 0 || spec.encoders == 0) {
    throw std::invalid_argument("cost spec '" + spec.name +
                                "': layers, d, n, sites, ffn_mult and encoders "
                                "must be positive");
  }
}

FlopCounter macs_of(std::uint64_t v) {
  FlopCounter c;
  c.macs = v;
  return c;
}

FlopCounter adds_of(std::uint64_t v) {
  FlopCounter c;
  c.adds = v;
  return c;
}

FlopCounter cmps_of(std::uint64_t v) {
  FlopCounter c;
  c.cmps = v;
  return c;
}

FlopCounter softmax_of(std::uint64_t e, std::uint64_t d) {
  FlopCounter c;
  c.exps = e;
  c.divs = d;
  return c;
}

void finish_flop_terms(CostReport& report) {
  for (const CostTerm& t : report.flop_terms) report.per_site += t.counter;
  report.added_flops = report.multiplier * report.per_site.total_flops();
}

std::vector<CostTerm> deep_full_terms(const CostSpec& spec) {
  const std::uint64_t d = spec.d, n = spec.n, p = spec.p;
  std::vector<CostTerm> terms;
  terms.push_back({"projection", macs_of(3 * p * d * d)});
  terms.push_back({"query scale", macs_of(p * d)});
  terms.push_back({"score", macs_of((2 * n * p + p * p) * d)});
  if (kCountSoftmaxExtension) {
    terms.push_back({"softmax extension", softmax_of(2 * n * p + p * p, p)});
  }
  terms.push_back({"weighting", macs_of((2 * n * p + p * p) * d)});
  terms.push_back({"output projection", macs_of(p * d * d)});
  return terms;
}

char const* method_label(PromptVariant v) {
  switch (v) {
    case PromptVariant::deep_skip: return "deep prompt (cached)";
    case PromptVariant::deep_full: return "deep prompt (materialized)";
    case PromptVariant::shallow: return "shallow prompt";
  }
  return "?";
}

std::string fmt_count(std::uint64_t v) { return std::to_string(v); }

std::string fmt_millions(std::uint64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2fM", static_cast<double>(v) / 1e6);
  return buf;
}

std::string fmt_giga(std::uint64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3fG", static_cast<double>(v) / 1e9);
  return buf;
}

}  // namespace

CostSpec cost_preset(const std::string& name) {
  // Sequence lengths of vilt/meter were recovered by flops_fit from the
  // reference deep-prompt totals; clip-text uses its standard 77-token
  // context.
  if (name == "vilt") return {"vilt", 12, 768, 213, 200, 4, 12, 4, 1};
  if (name == "meter-self") return {"meter-self", 6, 768, 377, 200, 4, 12, 4, 2};
  if (name == "meter-both") return {"meter-both", 6, 768, 401, 200, 4, 24, 4, 2};
  if (name == "clip-text") return {"clip-text", 12, 512, 77, 4, 2, 12, 4, 1};
  throw std::invalid_argument("unknown preset '" + name +
                              "'; expected vilt, meter-self, meter-both or clip-text");
}

std::vector<std::string> cost_preset_names() {
  return {"vilt", "meter-self", "meter-both", "clip-text"};
}

PromptVariant prompt_variant_from_string(const std::string& s) {
  if (s == "deep_skip") return PromptVariant::deep_skip;
  if (s == "deep_full") return PromptVariant::deep_full;
  if (s == "shallow") return PromptVariant::shallow;
  throw std::invalid_argument("unknown prompt variant '" + s +
                              "'; expected deep_skip, deep_full or shallow");
}

std::string to_string(PromptVariant v) {
  switch (v) {
    case PromptVariant::deep_skip: return "deep_skip";
    case PromptVariant::deep_full: return "deep_full";
    case PromptVariant::shallow: return "shallow";
  }
  throw std::invalid_argument("unknown prompt variant");
}

std::uint64_t params_deep_prompt(const CostSpec& spec) {
  check_spec(spec);
  return static_cast<std::uint64_t>(spec.sites) * spec.p * spec.d;
}

std::uint64_t params_shallow_prompt(const CostSpec& spec) {
  check_spec(spec);
  return static_cast<std::uint64_t>(spec.encoders) * spec.p * spec.d;
}

std::uint64_t params_apt(const CostSpec& spec) {
  check_spec(spec);
  if (spec.p == 0) return 0;
  return static_cast<std::uint64_t>(spec.sites) *
         (spec.p * spec.d + 2 * spec.d * spec.r + 1);
}

CostReport flops_prompt_attention(const CostSpec& spec, PromptVariant variant) {
  check_spec(spec);
  const std::uint64_t d = spec.d, n = spec.n, p = spec.p;

  CostReport report;
  report.method = method_label(variant);
  switch (variant) {
    case PromptVariant::deep_skip:
    case PromptVariant::deep_full:
      report.added_params = params_deep_prompt(spec);
      report.param_terms = {{"prompt tables", report.added_params}};
      report.multiplier = spec.sites;
      break;
    case PromptVariant::shallow:
      report.added_params = params_shallow_prompt(spec);
      report.param_terms = {{"prompt table", report.added_params}};
      report.multiplier = static_cast<std::uint64_t>(spec.encoders) * spec.layers;
      break;
  }
  if (p == 0) return report;  // nothing extra flows anywhere

  switch (variant) {
    case PromptVariant::deep_skip:
      report.flop_terms.push_back({"projection", macs_of(2 * p * d * d)});
      report.flop_terms.push_back({"score", macs_of(n * p * d)});
      if (kCountSoftmaxExtension) {
        report.flop_terms.push_back({"softmax extension", softmax_of(n * p, n)});
      }
      report.flop_terms.push_back({"weighting", macs_of(n * p * d)});
      break;
    case PromptVariant::deep_full:
      report.flop_terms = deep_full_terms(spec);
      break;
    case PromptVariant::shallow: {
      report.flop_terms = deep_full_terms(spec);
      const std::uint64_t f = spec.ffn_mult;
      FlopCounter ffn = macs_of(2 * f * p * d * d);
      ffn.cmps = f * p * d;
      report.flop_terms.push_back({"feed-forward", ffn});
      report.flop_terms.push_back({"residual", adds_of(2 * p * d)});
      break;
    }
  }
  finish_flop_terms(report);
  return report;
}

CostReport flops_apt(const CostSpec& spec) {
  check_spec(spec);
  const std::uint64_t d = spec.d, n = spec.n, p = spec.p, r = spec.r;

  CostReport report;
  report.method = "apt";
  report.added_params = params_apt(spec);
  if (report.added_params > 0) {
    report.param_terms = {
        {"value tables", static_cast<std::uint64_t>(spec.sites) * p * d},
        {"low-rank factors", static_cast<std::uint64_t>(spec.sites) * 2 * d * r},
        {"output gates", spec.sites},
    };
  }
  report.multiplier = spec.sites;
  if (p == 0) return report;

  report.flop_terms.push_back({"low-rank transform", macs_of(2 * p * d * r)});
  report.flop_terms.push_back({"table add", adds_of(p * d)});
  report.flop_terms.push_back({"score", macs_of(n * p * d)});
  report.flop_terms.push_back({"activation", cmps_of(n * p)});
  report.flop_terms.push_back({"max", cmps_of(p * d)});
  report.flop_terms.push_back({"weighting", macs_of(n * p * d)});
  report.flop_terms.push_back({"output scale", macs_of(n * d)});
  finish_flop_terms(report);
  return report;
}

double apt_saving_vs_deep(const CostSpec& spec) {
  const std::uint64_t deep = flops_prompt_attention(spec, PromptVariant::deep_skip).added_flops;
  const std::uint64_t apt = flops_apt(spec).added_flops;
  if (deep == 0) throw std::invalid_argument("apt_saving_vs_deep: deep-prompt cost is zero");
  return (static_cast<double>(deep) - static_cast<double>(apt)) / static_cast<double>(deep);
}

FitResult flops_fit(const CostSpec& spec, double target_deep_flops) {
  check_spec(spec);
  if (target_deep_flops <= 0.0) {
    throw std::invalid_argument("flops_fit: target must be positive");
  }
  if (spec.p == 0) throw std::invalid_argument("flops_fit: need p >= 1");

  const double d = static_cast<double>(spec.d);
  const double p = static_cast<double>(spec.p);
  const double fixed = 2.0 * p * d * d + 2.0 * p * p * d;  // n-independent MACs
  const double per_n = 4.0 * p * d;
  const double n_real = (target_deep_flops / static_cast<double>(spec.sites) - fixed) / per_n;
  if (n_real < 0.5) {
    throw std::domain_error(
        "flops_fit: target " + std::to_string(target_deep_flops) +
        " is below the sequence-independent floor, no positive length fits");
  }

  FitResult fit;
  fit.n = static_cast<std::size_t>(std::llround(n_real));
  const double model = static_cast<double>(spec.sites) *
                       (fixed + per_n * static_cast<double>(fit.n));
  fit.residual = std::abs(model - target_deep_flops) / target_deep_flops;
  return fit;
}

MeasuredReport measured_vs_analytic(const CostSpec& spec, std::uint64_t seed) {
  check_spec(spec);
  const std::uint64_t work = static_cast<std::uint64_t>(spec.n) * std::max<std::size_t>(spec.p, 1) * spec.d;
  if (work > 10'000'000ull) {
    throw std::invalid_argument("measured_vs_analytic: n*p*d exceeds 10^7, spec too large to execute");
  }

  Rng rng = seeded_rng(seed);
  const Matrix x = random_normal(spec.n, spec.d, rng);
  const Matrix prompt = random_normal(spec.p, spec.d, rng);
  const TransformerLayer layer = random_layer(spec.d, 1, spec.ffn_mult, rng);
  AptParams apt;
  if (spec.p > 0) {
    apt = init_apt(spec.p, spec.d, std::max<std::size_t>(spec.r, 1), rng, false);
  } else {
    apt.p_v = zeros(0, spec.d);
    apt.w1 = zeros(spec.d, std::max<std::size_t>(spec.r, 1));
    apt.w2 = zeros(std::max<std::size_t>(spec.r, 1), spec.d);
  }

  MeasuredReport report;
  auto push = [&](const std::string& method, const FlopCounter& counted,
                  const FlopCounter& analytic) {
    MeasuredEntry e;
    e.method = method;
    e.counted = counted.total_flops();
    e.analytic = analytic.total_flops();
    const double denom = std::max<double>(static_cast<double>(e.analytic), 1.0);
    e.rel_diff = std::abs(static_cast<double>(e.counted) - static_cast<double>(e.analytic)) / denom;
    e.ok = e.rel_diff <= 0.01;
    report.entries.push_back(e);
    report.all_ok = report.all_ok && e.ok;
  };

  {
    const SelfAttentionCache cache = self_attention_cached(x, layer.attn);
    FlopCounter counted;
    {
      CountingScope scope(counted);
      apply_prompt_extension(cache, prompt, layer.attn);
    }
    push("deep_skip", counted, flops_prompt_attention(spec, PromptVariant::deep_skip).per_site);
  }
  {
    FlopCounter joint, base;
    {
      CountingScope scope(joint);
      prompt_extended_attention(x, prompt, layer.attn);
    }
    {
      CountingScope scope(base);
      self_attention(x, layer.attn);
    }
    push("deep_full", joint - base, flops_prompt_attention(spec, PromptVariant::deep_full).per_site);
  }
  {
    FlopCounter joint, base;
    {
      CountingScope scope(joint);
      layer_forward(concat_rows(prompt, x), layer);
    }
    {
      CountingScope scope(base);
      layer_forward(x, layer);
    }
    push("shallow", joint - base, flops_prompt_attention(spec, PromptVariant::shallow).per_site);
  }
  {
    FlopCounter counted;
    {
      CountingScope scope(counted);
      apt_delta(x, apt);
    }
    CostSpec apt_spec = spec;
    apt_spec.r = std::max<std::size_t>(spec.r, 1);
    push("apt", counted, flops_apt(apt_spec).per_site);
  }
  return report;
}

std::vector<CostReport> cost_table(const CostSpec& spec) {
  return {
      flops_prompt_attention(spec, PromptVariant::shallow),
      flops_prompt_attention(spec, PromptVariant::deep_skip),
      flops_prompt_attention(spec, PromptVariant::deep_full),
      flops_apt(spec),
  };
}

void write_cost_table_markdown(std::ostream& os, const CostSpec& spec,
                               const std::vector<CostReport>& rows) {
  os << "# Cost report: " << spec.name << "\n\n";
  os << "layers=" << spec.layers << " d=" << spec.d << " n=" << spec.n << " p=" << spec.p
     << " r=" << spec.r << " sites=" << spec.sites << " ffn_mult=" << spec.ffn_mult
     << " encoders=" << spec.encoders << "\n\n";
  os << "| Method | Updated Parameter | Additional FLOPs |\n";
  os << "|---|---|---|\n";
  for (const CostReport& row : rows) {
    os << "| " << row.method << " | " << fmt_count(row.added_params) << " ("
       << fmt_millions(row.added_params) << ") | " << fmt_count(row.added_flops) << " ("
       << fmt_giga(row.added_flops) << ") |\n";
  }
  os << "\n## Per-site breakdown\n\n";
  os << "| Method | Term | MACs | exps | divs | cmps | adds | FLOPs |\n";
  os << "|---|---|---|---|---|---|---|---|\n";
  for (const CostReport& row : rows) {
    for (const CostTerm& t : row.flop_terms) {
      os << "| " << row.method << " | " << t.name << " | " << t.counter.macs << " | "
         << t.counter.exps << " | " << t.counter.divs << " | " << t.counter.cmps << " | "
         << t.counter.adds << " | " << t.counter.total_flops() << " |\n";
    }
    os << "| " << row.method << " | total x" << row.multiplier << " sites | " << row.per_site.macs
       << " | " << row.per_site.exps << " | " << row.per_site.divs << " | " << row.per_site.cmps
       << " | " << row.per_site.adds << " | " << row.per_site.total_flops() << " |\n";
  }
}

void write_cost_table_csv(std::ostream& os, const CostSpec& spec,
                          const std::vector<CostReport>& rows) {
  os << "spec,method,quantity,term,count\n";
  for (const CostReport& row : rows) {
    for (const auto& [term, count] : row.param_terms) {
      os << spec.name << ',' << row.method << ",params," << term << ',' << count << '\n';
    }
    os << spec.name << ',' << row.method << ",params,total," << row.added_params << '\n';
    for (const CostTerm& t : row.flop_terms) {
      os << spec.name << ',' << row.method << ",flops_per_site," << t.name << ','
         << t.counter.total_flops() << '\n';
    }
    os << spec.name << ',' << row.method << ",flops_per_site,total,"
       << row.per_site.total_flops() << '\n';
    os << spec.name << ',' << row.method << ",flops,total," << row.added_flops << '\n';
  }
}

std::vector<BandCheck> reference_band_checks() {
  std::vector<BandCheck> checks;
  // A figure quoted at two decimals pins the true value only to +-0.01M, and
  // the reference table mixes rounding with truncation (3.6864 is quoted as
  // 3.68, 1.91694 as 1.92), so matching means landing inside that band.
  auto add_exact = [&](const std::string& label, std::uint64_t value, double target) {
    BandCheck c;
    c.label = label;
    c.value = static_cast<double>(value) / 1e6;
    c.lo = target - 0.01;
    c.hi = target + 0.01;
    c.ok = c.value >= c.lo && c.value <= c.hi;
    c.note = "exact count " + std::to_string(value) + ", quoted " + std::to_string(target);
    checks.push_back(c);
  };

  const CostSpec vilt = cost_preset("vilt");
  const CostSpec meter_self = cost_preset("meter-self");
  const CostSpec meter_both = cost_preset("meter-both");

  add_exact("vilt deep-prompt params (M)", params_deep_prompt(vilt), 1.84);
  add_exact("vilt shallow-prompt params (M)", params_shallow_prompt(vilt), 0.15);
  add_exact("vilt apt params (M)", params_apt(vilt), 1.92);
  add_exact("meter self-only deep-prompt params (M)", params_deep_prompt(meter_self), 1.84);
  add_exact("meter both-sites deep-prompt params (M)", params_deep_prompt(meter_both), 3.68);
  add_exact("meter shallow-prompt params (M)", params_shallow_prompt(meter_self), 0.30);
  add_exact("meter apt params (M)", params_apt(meter_both), 3.83);

  struct FitCase {
    const CostSpec* spec;
    double target;
    double n_lo, n_hi;
  };
  const FitCase fits[] = {
      {&vilt, kViltDeepTarget, 100.0, 400.0},
      {&meter_self, kMeterSelfDeepTarget, 1.0, 1e6},
      {&meter_both, kMeterBothDeepTarget, 1.0, 1e6},
  };
  for (const FitCase& fc : fits) {
    const FitResult fit = flops_fit(*fc.spec, fc.target);
    BandCheck n_check;
    n_check.label = fc.spec->name + " fitted sequence length";
    n_check.value = static_cast<double>(fit.n);
    n_check.lo = fc.n_lo;
    n_check.hi = fc.n_hi;
    n_check.ok = n_check.value >= fc.n_lo && n_check.value <= fc.n_hi;
    n_check.note = "fitted against reference deep-prompt total " + fmt_giga(static_cast<std::uint64_t>(fc.target));
    checks.push_back(n_check);

    BandCheck res_check;
    res_check.label = fc.spec->name + " fit round-trip residual";
    res_check.value = fit.residual;
    res_check.lo = 0.0;
    res_check.hi = 0.001;
    res_check.ok = fit.residual <= 0.001;
    res_check.note = "preset n=" + std::to_string(fc.spec->n);
    checks.push_back(res_check);
  }

  struct SavingCase {
    const CostSpec* spec;
    double lo, hi;
    const char* note;
  };
  const SavingCase savings[] = {
      {&vilt, 82.30 - 5.0, 82.30 + 5.0, "reference saving 82.30%"},
      // Two reference figures exist for the same quantity (62.62% and
      // 63.62%); either within +-5 points is accepted, so the band is their
      // union.
      {&meter_self, 62.62 - 5.0, 63.62 + 5.0, "reference saving quoted as 62.62% and 63.62%"},
      {&meter_both, 62.62 - 5.0, 63.62 + 5.0, "reference saving quoted as 62.62% and 63.62%"},
  };
  for (const SavingCase& sc : savings) {
    BandCheck c;
    c.label = sc.spec->name + " apt saving vs deep prompt (%)";
    c.value = 100.0 * apt_saving_vs_deep(*sc.spec);
    c.lo = sc.lo;
    c.hi = sc.hi;
    c.ok = c.value >= sc.lo && c.value <= sc.hi;
    c.note = std::string(sc.note) + "; deep " +
             fmt_giga(flops_prompt_attention(*sc.spec, PromptVariant::deep_skip).added_flops) +
             ", apt " + fmt_giga(flops_apt(*sc.spec).added_flops) +
             " under the toolkit convention";
    checks.push_back(c);
  }
  return checks;
}

}  // namespace aptkit
