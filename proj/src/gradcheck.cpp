#include "aptkit/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "aptkit/rng.hpp"

namespace aptkit {

namespace {

constexpr std::size_t kSampleThreshold = 10000;
// Two central differences at step eps and 2*eps; larger disagreement than
// this marks the coordinate as sitting on a kink.
constexpr double kKinkTol = 0.05;

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

}  // namespace

std::vector<GradEntry> GradReport::failing(double tol) const {
  std::vector<GradEntry> out;
  for (const GradEntry& e : entries) {
    if (!e.excluded && e.rel_err > tol) out.push_back(e);
  }
  return out;
}

GradReport gradcheck(const LossFn& loss, const std::vector<NamedMatrix>& params,
                     const std::vector<Matrix>& analytic, double eps,
                     std::size_t coord_budget, std::uint64_t seed) {
  if (!(eps >= 1e-7 && eps <= 1e-3))
    throw std::invalid_argument("gradcheck: eps must lie in [1e-7, 1e-3]");
  if (params.size() != analytic.size())
    throw std::invalid_argument("gradcheck: one analytic gradient per parameter required");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (!same_shape(params[i].second, analytic[i]))
      throw std::invalid_argument("gradcheck: gradient shape mismatch for '" +
                                  params[i].first + "'");

  std::size_t total = 0;
  for (const auto& [name, m] : params) total += m.size();
  if (total == 0) throw std::invalid_argument("gradcheck: no parameters to check");

  std::vector<Matrix> work;
  work.reserve(params.size());
  for (const auto& [name, m] : params) work.push_back(m);

  auto probe = [&](std::size_t pi, std::size_t ci, double step) {
    const double saved = work[pi].data[ci];
    work[pi].data[ci] = saved + step;
    const double l = loss(work);
    work[pi].data[ci] = saved;
    if (!std::isfinite(l)) {
      throw std::runtime_error("gradcheck: loss is not finite at '" + params[pi].first +
                               "' coordinate " + std::to_string(ci));
    }
    return l;
  };

  GradReport report;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    const std::size_t count = params[pi].second.size();

    // Large tensors get a sampled subset; everything else is exhaustive.
    std::vector<std::size_t> coords(count);
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (count > kSampleThreshold && coord_budget < count) {
      Rng rng = seeded_rng(derive_seed(seed, 0xc0de + pi));
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(coord_budget);
      std::sort(coords.begin(), coords.end());
    }

    ParamGradSummary summary;
    summary.param = params[pi].first;
    for (std::size_t ci : coords) {
      const double fd1 = (probe(pi, ci, eps) - probe(pi, ci, -eps)) / (2.0 * eps);
      const double fd2 = (probe(pi, ci, 2.0 * eps) - probe(pi, ci, -2.0 * eps)) / (4.0 * eps);

      GradEntry e;
      e.param = params[pi].first;
      e.coord = ci;
      e.analytic = analytic[pi].data[ci];
      e.numeric = fd1;
      e.rel_err = rel_err(e.analytic, fd1);
      e.excluded = rel_err(fd1, fd2) > kKinkTol;
      if (!e.excluded) {
        summary.max_rel_err = std::max(summary.max_rel_err, e.rel_err);
        summary.max_abs_err = std::max(summary.max_abs_err, std::abs(e.analytic - e.numeric));
        report.max_rel_err = std::max(report.max_rel_err, e.rel_err);
      } else {
        ++summary.excluded;
        ++report.excluded;
      }
      ++summary.checked;
      report.entries.push_back(std::move(e));
    }
    report.params.push_back(std::move(summary));
  }
  report.checked = report.entries.size();
  return report;
}

void write_grad_report(std::ostream& os, const GradReport& report) {
  os << "param,coord,analytic,numeric,rel_err\n";
  char buf[128];
  for (const GradEntry& e : report.entries) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g", e.analytic, e.numeric, e.rel_err);
    os << e.param << ',' << e.coord << ',' << buf << '\n';
  }
}

}  // namespace aptkit
