#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "aptkit/matrix.hpp"
#include "aptkit/matrix_io.hpp"

namespace aptkit {

struct GradEntry {
  std::string param;
  std::size_t coord = 0;  // row-major index within the parameter
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_err = 0.0;
  // True when two central differences at different step sizes disagree, i.e.
  // the loss is not smooth at this coordinate (a ReLU or max kink nearby).
  // Excluded coordinates do not enter the error maxima.
  bool excluded = false;
};

// Per-tensor rollup over the coordinates that were actually checked.
struct ParamGradSummary {
  std::string param;
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
  std::size_t checked = 0;
  std::size_t excluded = 0;
};

struct GradReport {
  std::vector<GradEntry> entries;
  std::vector<ParamGradSummary> params;
  double max_rel_err = 0.0;
  std::size_t checked = 0;
  std::size_t excluded = 0;

  bool pass(double tol) const { return checked > excluded && max_rel_err <= tol; }
  // Smooth coordinates whose relative error exceeds tol.
  std::vector<GradEntry> failing(double tol) const;
};

using LossFn = std::function<double(const std::vector<Matrix>&)>;

// Central-difference check of analytic gradients. `loss` is re-evaluated at
// perturbed copies of `params`; `analytic` holds one gradient per parameter,
// same shapes. Relative error per coordinate is
//   |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
// Every coordinate of a tensor is checked unless the tensor holds more than
// 10^4 entries, in which case `coord_budget` of its coordinates are sampled
// without replacement from the derived seed. eps must lie in [1e-7, 1e-3].
// A non-finite loss value aborts with an error naming the coordinate that
// produced it.
GradReport gradcheck(const LossFn& loss, const std::vector<NamedMatrix>& params,
                     const std::vector<Matrix>& analytic, double eps = 1e-5,
                     std::size_t coord_budget = 512, std::uint64_t seed = 17);

// CSV rows "param,coord,analytic,numeric,rel_err", excluded coordinates
// included.
void write_grad_report(std::ostream& os, const GradReport& report);

}  // namespace aptkit
