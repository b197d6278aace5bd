#include "ssvae/training.hpp"

#include <chrono>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "ssvae/diagnostics.hpp"

namespace ssvae {

double Schedule::value(std::size_t epoch, std::size_t total_epochs) const {
  if (ramp_frac < 0.0 || ramp_frac > 1.0) {
    throw std::invalid_argument("training: schedule ramp_frac outside [0,1]");
  }
  const double ramp_epochs = ramp_frac * static_cast<double>(total_epochs);
  if (ramp_epochs <= 0.0 || static_cast<double>(epoch) >= ramp_epochs) return end;
  return start + (end - start) * (static_cast<double>(epoch) / ramp_epochs);
}

void Adam::step(ModelParams& params, const GradGroups& grads) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (auto& [gname, set] : params.groups()) {
    auto git = grads.find(gname);
    if (git == grads.end()) continue;
    for (auto& [pname, tensor] : set->entries()) {
      auto it = git->second.find(pname);
      if (it == git->second.end()) continue;
      const Tensor& g = it->second;
      if (!g.all_finite()) {
        throw std::runtime_error("training: non-finite gradient for " + gname + "/" + pname);
      }
      const std::string key = gname + "/" + pname;
      auto [mit, fresh] = state_.try_emplace(
          key, Moments{Tensor::zeros(tensor.shape()), Tensor::zeros(tensor.shape())});
      Moments& mom = mit->second;
      (void)fresh;
      for (std::size_t i = 0; i < tensor.size(); ++i) {
        mom.m[i] = cfg_.beta1 * mom.m[i] + (1.0 - cfg_.beta1) * g[i];
        mom.v[i] = cfg_.beta2 * mom.v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
        const double mhat = mom.m[i] / bc1;
        const double vhat = mom.v[i] / bc2;
        tensor[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      }
    }
  }
}

double clip_global_norm(GradGroups& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& [_, gm] : grads) {
    for (const auto& [__, g] : gm) {
      for (std::size_t i = 0; i < g.size(); ++i) sq += g[i] * g[i];
    }
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& [_, gm] : grads) {
      for (auto& [__, g] : gm) {
        for (std::size_t i = 0; i < g.size(); ++i) g[i] *= s;
      }
    }
  }
  return norm;
}

EvalResult evaluate(const ModelParams& params, const ModelConfig& cfg,
                    const std::vector<Batch>& batches, std::uint64_t eval_seed) {
  EvalResult out;
  double bound_sum = 0.0;
  RngStream rng(eval_seed);
  for (const auto& batch : batches) {
    if (!batch.labels) throw std::invalid_argument("training: evaluate needs labeled batches");
    Tape tape;
    ModelBound m = bind_model(tape, params, /*requires_grad=*/false);
    Var log_q = classify(tape, m, cfg, batch);
    const Tensor& q = log_q.value();
    for (std::size_t i = 0; i < batch.n; ++i) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < cfg.classes; ++c) {
        if (q.at(i, c) > q.at(i, best)) best = c;  // ties toward the lowest index
      }
      if (best == static_cast<std::size_t>((*batch.labels)[i])) out.accuracy += 1.0;
    }
    BoundVars b = labeled_bound(tape, m, cfg, batch, one_hot(*batch.labels, cfg.classes),
                                /*kl_weight=*/1.0, rng);
    bound_sum += sum(b.bound).value().item();
    out.count += batch.n;
  }
  if (out.count == 0) throw std::invalid_argument("training: evaluate on an empty set");
  out.accuracy /= static_cast<double>(out.count);
  out.mean_bound = bound_sum / static_cast<double>(out.count);
  return out;
}

namespace {

void append_full(std::ostringstream& os, double v) {
  os.precision(17);
  os << v;
}

}  // namespace

std::string train_report_csv(const TrainReport& report, std::size_t latent_width) {
  std::ostringstream os;
  os << "epoch,objective,labeled_bound,unlabeled_bound,train_acc,valid_acc,d_index";
  for (std::size_t d = 0; d < latent_width; ++d) os << ",kl_u" << d;
  os << ",wall_sec\n";
  for (const auto& r : report.rows) {
    os << r.epoch << ',';
    append_full(os, r.objective);
    os << ',';
    append_full(os, r.labeled_bound);
    os << ',';
    append_full(os, r.unlabeled_bound);
    os << ',';
    append_full(os, r.train_accuracy);
    os << ',';
    append_full(os, r.valid_accuracy);
    os << ',';
    append_full(os, r.d_index);
    for (double kl : r.unit_kl) {
      os << ',';
      append_full(os, kl);
    }
    os << ',';
    append_full(os, r.wall_sec);
    os << '\n';
  }
  return os.str();
}

std::string csv_row_without_wall(const std::string& row) {
  const auto pos = row.find_last_of(',');
  return pos == std::string::npos ? row : row.substr(0, pos);
}

TrainResult train_model(const ModelConfig& cfg, const TrainOptions& opt, const Splits& splits,
                        const Vocab& vocab, const EpochCallback& on_epoch) {
  RngStream init_rng(mix_seed(opt.seed, 0x1217));
  ModelParams params = init_model(cfg, init_rng);
  if (opt.estimator.baseline == BaselineKind::S1) {
    params.baseline.add("c", Tensor::zeros({1}));
  }
  opt.estimator.validate();

  Adam adam(opt.adam);
  BaselineS1State s1{};

  TrainResult result;
  result.report.best_epoch = 0;
  result.report.best_valid_accuracy = -1.0;
  std::size_t since_best = 0;

  const auto valid_batches =
      make_batches(splits.valid, vocab, opt.batch_size, mix_seed(opt.seed, 0x3A11D), false, true);
  const auto train_eval_batches = make_batches(splits.labeled, vocab, opt.batch_size,
                                               mix_seed(opt.seed, 0x7EA1), false, true);

  for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double kl_w = opt.schedules.kl.value(epoch, opt.epochs);
    const double wdrop = opt.schedules.word_dropout.value(epoch, opt.epochs);
    const double alpha = opt.schedules.alpha.value(epoch, opt.epochs);

    auto labeled = make_batches(splits.labeled, vocab, opt.batch_size,
                                mix_seed(opt.seed, epoch, 0x1AB), opt.bucket_by_length, true);
    std::vector<Batch> unlabeled;
    if (opt.use_unlabeled && !splits.unlabeled.empty()) {
      unlabeled = make_batches(splits.unlabeled, vocab, opt.batch_size,
                               mix_seed(opt.seed, epoch, 0x01AB), opt.bucket_by_length, false);
    }

    const std::size_t steps = std::max(labeled.size(), unlabeled.size());
    double obj_sum = 0.0, lab_sum = 0.0, unl_sum = 0.0;
    for (std::size_t step = 0; step < steps; ++step) {
      RngStream step_rng(mix_seed(opt.seed, epoch * 1'000'003 + step, 0x57E9));
      TrainMode mode{true, opt.dropout, wdrop, &step_rng};

      Tape tape;
      ModelBound m = bind_model(tape, params, /*requires_grad=*/true);
      const Batch& lb = labeled[step % labeled.size()];
      std::optional<Batch> ub;
      if (!unlabeled.empty()) ub = unlabeled[step % unlabeled.size()];

      StepLosses losses = total_objective(tape, m, cfg, lb, ub, opt.estimator, s1, alpha, kl_w,
                                          step_rng, mode);
      tape.backward(losses.total);
      GradGroups grads;
      grads["encoder"] = m.enc.collect_grads(params.encoder);
      grads["decoder"] = m.dec.collect_grads(params.decoder);
      grads["classifier"] = m.clf.collect_grads(params.classifier);
      if (opt.clip_norm > 0.0) clip_global_norm(grads, opt.clip_norm);
      adam.step(params, grads);

      if (opt.estimator.baseline == BaselineKind::S1 && !losses.s1_targets.empty()) {
        s1 = baseline_s1_update(s1, losses.s1_targets, opt.baseline_lr);
        params.baseline.at("c")[0] = s1.c;
      }

      obj_sum += losses.total.value().item();
      lab_sum += losses.labeled_bound;
      unl_sum += losses.unlabeled_bound;
    }

    EpochRow row;
    row.epoch = epoch;
    row.objective = obj_sum / static_cast<double>(steps);
    row.labeled_bound = lab_sum / static_cast<double>(steps);
    row.unlabeled_bound = unl_sum / static_cast<double>(steps);
    row.train_accuracy =
        evaluate(params, cfg, train_eval_batches, mix_seed(opt.seed, epoch, 0xE7A1)).accuracy;
    const EvalResult valid =
        evaluate(params, cfg, valid_batches, mix_seed(opt.seed, epoch, 0xE7A2));
    row.valid_accuracy = valid.accuracy;
    if (opt.track_d_index) {
      row.d_index =
          discrimination_index(params, cfg, train_eval_batches, mix_seed(opt.seed, epoch, 0xD1))
              .value;
    }
    row.unit_kl = per_unit_kl(params, cfg, valid_batches);
    row.wall_sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.report.rows.push_back(row);
    if (on_epoch) on_epoch(row);

    if (row.valid_accuracy > result.report.best_valid_accuracy) {
      result.report.best_valid_accuracy = row.valid_accuracy;
      result.report.best_epoch = epoch;
      result.best_params = params;
      since_best = 0;
    } else if (++since_best >= opt.patience && opt.patience > 0) {
      break;
    }
  }

  if (result.report.best_valid_accuracy < 0.0) result.best_params = params;
  result.final_params = params;
  result.baseline = s1;
  return result;
}

}  // namespace ssvae
