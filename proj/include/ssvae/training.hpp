#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ssvae/data.hpp"
#include "ssvae/estimators.hpp"
#include "ssvae/model.hpp"

namespace ssvae {

// Linear ramp from start to end over the first ramp_frac of training,
// then hold.
struct Schedule {
  double start = 0.0;
  double end = 0.0;
  double ramp_frac = 0.5;

  double value(std::size_t epoch, std::size_t total_epochs) const;
};

struct AdamConfig {
  double lr = 4e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Standard ADAM with bias correction over all parameter groups.
class Adam {
 public:
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

  // NaN/Inf gradients abort with a diagnostic naming the parameter.
  void step(ModelParams& params, const GradGroups& grads);

  std::size_t steps_taken() const { return t_; }

 private:
  AdamConfig cfg_;
  std::size_t t_ = 0;
  struct Moments {
    Tensor m, v;
  };
  std::map<std::string, Moments> state_;  // "group/name"
};

// Scales all gradients so their global L2 norm is at most max_norm;
// returns the pre-clip norm.
double clip_global_norm(GradGroups& grads, double max_norm);

struct EvalResult {
  double accuracy = 0.0;
  double mean_bound = 0.0;
  std::size_t count = 0;
};

// Argmax of q(y|x), ties toward the lowest class index; mean labeled bound
// at kl_weight 1 with noise from eval_seed. No dropout, no word dropout,
// no parameter updates.
EvalResult evaluate(const ModelParams& params, const ModelConfig& cfg,
                    const std::vector<Batch>& batches, std::uint64_t eval_seed);

struct TrainSchedules {
  Schedule kl{0.0, 1.0, 0.5};
  Schedule word_dropout{0.25, 0.5, 0.5};
  Schedule alpha{1.0, 2.0, 0.5};
};

struct TrainOptions {
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  std::uint64_t seed = 1;
  AdamConfig adam{};
  TrainSchedules schedules{};
  EstimatorConfig estimator{};
  double dropout = 0.2;
  double clip_norm = 5.0;  // 0 disables
  double baseline_lr = 0.05;
  std::size_t patience = 10;  // early stopping on valid accuracy; 0 disables
  bool use_unlabeled = true;
  bool bucket_by_length = true;
  bool track_d_index = true;
};

struct EpochRow {
  std::size_t epoch = 0;
  double objective = 0.0;
  double labeled_bound = 0.0;
  double unlabeled_bound = 0.0;
  double train_accuracy = 0.0;
  double valid_accuracy = 0.0;
  double d_index = 0.0;
  std::vector<double> unit_kl;
  double wall_sec = 0.0;  // excluded from determinism comparisons
};

struct TrainReport {
  std::vector<EpochRow> rows;
  std::size_t best_epoch = 0;
  double best_valid_accuracy = 0.0;
};

// One row per epoch; floats at full precision so bitwise reproducibility
// is checkable by string comparison (minus the wall-time column).
std::string train_report_csv(const TrainReport& report, std::size_t latent_width);
std::string csv_row_without_wall(const std::string& row);

struct TrainResult {
  TrainReport report;
  ModelParams best_params;
  ModelParams final_params;
  BaselineS1State baseline;
};

using EpochCallback = std::function<void(const EpochRow&)>;

// The full optimization loop over a prepared split: per step one labeled
// and one unlabeled batch (shorter stream recycles), schedules evaluated
// once per epoch, S1 regression updated per step when active.
TrainResult train_model(const ModelConfig& cfg, const TrainOptions& opt, const Splits& splits,
                        const Vocab& vocab, const EpochCallback& on_epoch = {});

}  // namespace ssvae
