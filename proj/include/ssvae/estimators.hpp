#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ssvae/model.hpp"

namespace ssvae {

enum class EstimatorKind { Enumerate, Sample };
enum class BaselineKind { None, S1, S2 };

EstimatorKind estimator_kind_from_string(const std::string& s);
BaselineKind baseline_kind_from_string(const std::string& s);
std::string to_string(EstimatorKind k);
std::string to_string(BaselineKind b);

struct EstimatorConfig {
  EstimatorKind kind = EstimatorKind::Enumerate;
  BaselineKind baseline = BaselineKind::None;
  int k = 0;  // 0 = default for the baseline (1 for S1, 2 for S2, 1 otherwise)

  int effective_k() const;
  void validate() const;  // S2 needs K >= 2
};

// Learned scalar of the length-dependent baseline b(x) = c|x|. Updated
// only by its own regression, never by the model objective.
struct BaselineS1State {
  double c = 0.0;
};

// Score coefficients -L(x,y_k) - c|x| for one draw. The regression for c
// runs in length-normalized space (targets below); the coefficient keeps
// the raw bound scale so the estimator's expectation matches enumeration.
std::vector<double> baseline_s1_coefficients(const std::vector<double>& bounds,
                                             const std::vector<std::size_t>& lengths, double c);

// Regression targets -L(x,y_k)/|x|; errors on a zero-length example.
std::vector<double> baseline_s1_targets(const std::vector<double>& bounds,
                                        const std::vector<std::size_t>& lengths);

// d/dc of mean (target - c)^2 over the batch.
double baseline_s1_grad(const std::vector<double>& targets, double c);

// One gradient step of the scalar regression, c' = c - step * grad.
BaselineS1State baseline_s1_update(BaselineS1State state, const std::vector<double>& targets,
                                   double step);

// Per-example mean over the K sampled-label bounds, b(x) = (1/K) sum_k -L.
// bounds_per_draw is K vectors of n per-example values; K >= 2.
std::vector<double> baseline_s2(const std::vector<std::vector<double>>& bounds_per_draw);

// --- gradient routing -------------------------------------------------

// Exact gradient of U(x) = -(sum_y q(y|x)(-L) + H) for every parameter
// group, via backward through the enumerated bound.
GradGroups unlabeled_grad_enumerate(const ModelParams& params, const ModelConfig& cfg,
                                    const Batch& batch, double kl_weight, const Tensor& eps,
                                    const std::vector<int>& decoder_inputs);

// Sampled estimator of the same gradient. Classifier gradient = score
// term (coefficient treated as a constant) plus the exact entropy
// gradient; encoder/decoder gradients are the pathwise average over the
// K drawn labels. One eps draw is shared across all K draws.
GradGroups score_function_grad(const ModelParams& params, const ModelConfig& cfg,
                               const Batch& batch, const EstimatorConfig& est,
                               const BaselineS1State& s1, double kl_weight, const Tensor& eps,
                               const std::vector<int>& decoder_inputs, RngStream& label_rng);

struct VarianceRow {
  std::string coordinate;  // "param[i]" within the classifier group
  double mean = 0.0;
  double variance = 0.0;
  std::size_t n = 0;
};

// Empirical mean/variance of the classifier-gradient estimator over
// n_draws independent label draws at frozen parameters and frozen eps.
std::vector<VarianceRow> estimator_variance_probe(const ModelParams& params,
                                                  const ModelConfig& cfg, const Batch& batch,
                                                  const EstimatorConfig& est,
                                                  const BaselineS1State& s1, double kl_weight,
                                                  std::size_t n_draws, std::size_t n_coords,
                                                  std::uint64_t seed);

std::string variance_rows_csv(const std::vector<VarianceRow>& rows);

// --- total objective ----------------------------------------------------

struct StepLosses {
  Var total;                 // scalar J for backward
  double labeled_bound = 0;  // batch means, read from the forward pass
  double unlabeled_bound = 0;
  double cross_entropy = 0;
  std::vector<double> s1_targets;  // regression targets when S1 is active
};

// J = mean L(x,y) + mean U(x) + alpha * CE, per-example means per batch,
// on one tape so a single backward covers every group. The unlabeled term
// routes through enumeration or the sampled estimator.
StepLosses total_objective(Tape& tape, const ModelBound& m, const ModelConfig& cfg,
                           const Batch& labeled, const std::optional<Batch>& unlabeled,
                           const EstimatorConfig& est, const BaselineS1State& s1, double alpha,
                           double kl_weight, RngStream& rng, TrainMode mode);

}  // namespace ssvae
