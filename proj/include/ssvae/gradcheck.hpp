#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ssvae/params.hpp"

namespace ssvae {

// Loss under check: builds a fresh graph over the bound parameters and
// returns a scalar root. Must be deterministic for fixed parameters
// (freeze any noise by copying an RngStream into the closure).
using LossFn = std::function<Var(Tape&, const BoundParams&)>;

struct GradCheckEntry {
  std::string param;
  std::size_t flat_index;
  double analytic;
  double numeric;
  double rel_err;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::vector<GradCheckEntry> worst;  // one entry per parameter tensor
};

struct GradCheckOptions {
  double eps = 1e-5;
  std::size_t coords_per_tensor = 50;  // sampled; keeps runtime bounded
  std::uint64_t coord_seed = 17;
  // Test fixture: multiplies every analytic gradient before comparison so
  // a broken backward rule is provably detected. 1.0 in normal use.
  double analytic_scale = 1.0;
};

// Central finite differences against the tape's analytic gradient.
// rel_err = |analytic - numeric| / max(1, |analytic|, |numeric|).
// Throws if the loss is not deterministic under frozen parameters.
GradCheckReport finite_difference_check(const LossFn& loss, ParamSet& params,
                                        const GradCheckOptions& opt = {});

}  // namespace ssvae
