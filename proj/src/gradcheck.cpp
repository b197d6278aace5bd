#include "ssvae/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ssvae {

namespace {

double eval_loss(const LossFn& loss, const ParamSet& params) {
  Tape tape;
  BoundParams bound(tape, params, /*requires_grad=*/false);
  return loss(tape, bound).value().item();
}

}  // namespace

GradCheckReport finite_difference_check(const LossFn& loss, ParamSet& params,
                                        const GradCheckOptions& opt) {
  const double base = eval_loss(loss, params);
  if (eval_loss(loss, params) != base) {
    throw std::runtime_error("gradcheck: loss is not deterministic under frozen parameters");
  }

  GradMap analytic;
  {
    Tape tape;
    BoundParams bound(tape, params, /*requires_grad=*/true);
    Var root = loss(tape, bound);
    tape.backward(root);
    analytic = bound.collect_grads(params);
  }

  GradCheckReport report;
  RngStream coord_rng(opt.coord_seed);
  for (auto& [name, tensor] : params.entries()) {
    const std::size_t n = tensor.size();
    if (n == 0) continue;
    std::vector<std::size_t> coords;
    if (n <= opt.coords_per_tensor) {
      coords.resize(n);
      for (std::size_t i = 0; i < n; ++i) coords[i] = i;
    } else {
      for (std::size_t k = 0; k < opt.coords_per_tensor; ++k) {
        coords.push_back(coord_rng.next_u64() % n);
      }
      std::sort(coords.begin(), coords.end());
      coords.erase(std::unique(coords.begin(), coords.end()), coords.end());
    }
    GradCheckEntry worst{name, 0, 0.0, 0.0, -1.0};
    for (std::size_t i : coords) {
      const double saved = tensor[i];
      tensor[i] = saved + opt.eps;
      const double up = eval_loss(loss, params);
      tensor[i] = saved - opt.eps;
      const double down = eval_loss(loss, params);
      tensor[i] = saved;
      const double numeric = (up - down) / (2.0 * opt.eps);
      const double a = analytic.at(name)[i] * opt.analytic_scale;
      const double rel =
          std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      if (rel > worst.rel_err) worst = {name, i, a, numeric, rel};
    }
    report.worst.push_back(worst);
    report.max_rel_err = std::max(report.max_rel_err, worst.rel_err);
  }
  return report;
}

}  // namespace ssvae
