#include "ssvae/estimators.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace ssvae {

EstimatorKind estimator_kind_from_string(const std::string& s) {
  if (s == "enumerate") return EstimatorKind::Enumerate;
  if (s == "sample") return EstimatorKind::Sample;
  throw std::invalid_argument("estimators: unknown kind '" + s + "'");
}

BaselineKind baseline_kind_from_string(const std::string& s) {
  if (s == "none") return BaselineKind::None;
  if (s == "s1") return BaselineKind::S1;
  if (s == "s2") return BaselineKind::S2;
  throw std::invalid_argument("estimators: unknown baseline '" + s + "'");
}

std::string to_string(EstimatorKind k) {
  return k == EstimatorKind::Enumerate ? "enumerate" : "sample";
}

std::string to_string(BaselineKind b) {
  switch (b) {
    case BaselineKind::None: return "none";
    case BaselineKind::S1: return "s1";
    case BaselineKind::S2: return "s2";
  }
  return "?";
}

int EstimatorConfig::effective_k() const {
  if (k > 0) return k;
  return baseline == BaselineKind::S2 ? 2 : 1;
}

void EstimatorConfig::validate() const {
  if (baseline == BaselineKind::S2 && effective_k() < 2) {
    throw std::invalid_argument("estimators: baseline S2 requires K >= 2, got " +
                                std::to_string(effective_k()));
  }
  if (k < 0) throw std::invalid_argument("estimators: negative sample count");
}

std::vector<double> baseline_s1_coefficients(const std::vector<double>& bounds,
                                             const std::vector<std::size_t>& lengths, double c) {
  if (bounds.size() != lengths.size()) {
    throw std::invalid_argument("estimators: baseline S1 size mismatch");
  }
  std::vector<double> out(bounds.size());
  for (std::size_t i = 0; i < bounds.size(); ++i) {
    if (lengths[i] == 0) {
      throw std::invalid_argument("estimators: baseline S1 on zero-length example");
    }
    out[i] = bounds[i] - c * static_cast<double>(lengths[i]);
  }
  return out;
}

std::vector<double> baseline_s1_targets(const std::vector<double>& bounds,
                                        const std::vector<std::size_t>& lengths) {
  if (bounds.size() != lengths.size()) {
    throw std::invalid_argument("estimators: baseline S1 size mismatch");
  }
  std::vector<double> out(bounds.size());
  for (std::size_t i = 0; i < bounds.size(); ++i) {
    if (lengths[i] == 0) {
      throw std::invalid_argument("estimators: baseline S1 on zero-length example");
    }
    out[i] = bounds[i] / static_cast<double>(lengths[i]);
  }
  return out;
}

double baseline_s1_grad(const std::vector<double>& targets, double c) {
  if (targets.empty()) return 0.0;
  double m = 0.0;
  for (double t : targets) m += t - c;
  return -2.0 * m / static_cast<double>(targets.size());
}

BaselineS1State baseline_s1_update(BaselineS1State state, const std::vector<double>& targets,
                                   double step) {
  state.c -= step * baseline_s1_grad(targets, state.c);
  return state;
}

std::vector<double> baseline_s2(const std::vector<std::vector<double>>& bounds_per_draw) {
  if (bounds_per_draw.size() < 2) {
    throw std::invalid_argument("estimators: baseline S2 requires K >= 2, got " +
                                std::to_string(bounds_per_draw.size()));
  }
  const std::size_t n = bounds_per_draw.front().size();
  std::vector<double> out(n, 0.0);
  for (const auto& draw : bounds_per_draw) {
    if (draw.size() != n) throw std::invalid_argument("estimators: ragged S2 bounds");
    for (std::size_t i = 0; i < n; ++i) out[i] += draw[i];
  }
  for (auto& v : out) v /= static_cast<double>(bounds_per_draw.size());
  return out;
}

namespace {

GradGroups collect_model_grads(const ModelBound& m, const ModelParams& params) {
  GradGroups out;
  out["encoder"] = m.enc.collect_grads(params.encoder);
  out["decoder"] = m.dec.collect_grads(params.decoder);
  out["classifier"] = m.clf.collect_grads(params.classifier);
  return out;
}

std::vector<double> column(const Tensor& t, std::size_t c) {
  std::vector<double> out(t.rows());
  for (std::size_t i = 0; i < t.rows(); ++i) out[i] = t.at(i, c);
  return out;
}

// Shared machinery for the sampled estimator: builds the score, pathwise
// and entropy losses on the caller's tape and returns the composite
// unlabeled loss mean U = -(bound_estimate + entropy).
struct SampledParts {
  Var loss;                        // scalar
  double mean_bound_estimate = 0;  // (1/K) sum_k bound_k, batch mean
  std::vector<double> s1_targets;  // per-draw, concatenated
};

SampledParts sampled_unlabeled_loss(Tape& tape, const ModelBound& m, const ModelConfig& cfg,
                                    const Batch& batch, const EstimatorConfig& est,
                                    const BaselineS1State& s1, double kl_weight,
                                    const Tensor& eps, const std::vector<int>& decoder_inputs,
                                    RngStream& label_rng, Var log_q, TrainMode mode) {
  est.validate();
  const int K = est.effective_k();
  const std::size_t n = batch.n;
  const Tensor& q = log_q.value();

  std::vector<std::vector<int>> draws(K, std::vector<int>(n));
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> p(cfg.classes);
    for (std::size_t c = 0; c < cfg.classes; ++c) p[c] = std::exp(q.at(i, c));
    for (int k = 0; k < K; ++k) draws[k][i] = label_rng.categorical(p);
  }

  std::vector<Var> bounds(K);
  std::vector<std::vector<double>> bound_values(K);
  for (int k = 0; k < K; ++k) {
    Tensor y = one_hot(draws[k], cfg.classes);
    BoundVars b = labeled_bound_with(tape, m, cfg, batch, y, kl_weight, eps, decoder_inputs, mode);
    bounds[k] = b.bound;
    bound_values[k] = column(b.bound.value(), 0);
  }

  // score coefficients, constant w.r.t. the graph
  std::vector<std::vector<double>> coeff(K);
  double norm = static_cast<double>(K);
  switch (est.baseline) {
    case BaselineKind::None:
      for (int k = 0; k < K; ++k) coeff[k] = bound_values[k];
      break;
    case BaselineKind::S1:
      for (int k = 0; k < K; ++k) {
        coeff[k] = baseline_s1_coefficients(bound_values[k], batch.lengths, s1.c);
      }
      break;
    case BaselineKind::S2: {
      std::vector<double> b = baseline_s2(bound_values);
      for (int k = 0; k < K; ++k) {
        coeff[k].resize(n);
        for (std::size_t i = 0; i < n; ++i) coeff[k][i] = bound_values[k][i] - b[i];
      }
      // self-including mean scales the expectation by (K-1)/K; dividing
      // by K-1 restores the leave-one-out form, which is exactly unbiased
      norm = static_cast<double>(K - 1);
      break;
    }
  }

  Var score_acc = tape.constant(Tensor::zeros({n, 1}));
  Var path_acc = tape.constant(Tensor::zeros({n, 1}));
  for (int k = 0; k < K; ++k) {
    Var picked = pick(log_q, draws[k]);  // (n,1) log q(y_k|x)
    Tensor ck({n, 1});
    for (std::size_t i = 0; i < n; ++i) ck[i] = coeff[k][i];
    score_acc = add(score_acc, mul(picked, tape.constant(std::move(ck))));
    path_acc = add(path_acc, bounds[k]);
  }

  Var entropy = categorical_entropy(log_q);
  Var loss = add(add(scale(mean(score_acc), -1.0 / norm),
                     scale(mean(path_acc), -1.0 / static_cast<double>(K))),
                 scale(mean(entropy), -1.0));

  SampledParts parts;
  parts.loss = loss;
  double acc = 0.0;
  for (int k = 0; k < K; ++k)
    for (std::size_t i = 0; i < n; ++i) acc += bound_values[k][i];
  parts.mean_bound_estimate = acc / static_cast<double>(K * n);
  if (est.baseline == BaselineKind::S1) {
    for (int k = 0; k < K; ++k) {
      auto t = baseline_s1_targets(bound_values[k], batch.lengths);
      parts.s1_targets.insert(parts.s1_targets.end(), t.begin(), t.end());
    }
  }
  return parts;
}

}  // namespace

GradGroups unlabeled_grad_enumerate(const ModelParams& params, const ModelConfig& cfg,
                                    const Batch& batch, double kl_weight, const Tensor& eps,
                                    const std::vector<int>& decoder_inputs) {
  Tape tape;
  ModelBound m = bind_model(tape, params, true);
  Var log_q = classify(tape, m, cfg, batch);
  UnlabeledVars u =
      unlabeled_bound_enumerated(tape, m, cfg, batch, log_q, kl_weight, eps, decoder_inputs);
  tape.backward(scale(mean(u.bound), -1.0));
  return collect_model_grads(m, params);
}

GradGroups score_function_grad(const ModelParams& params, const ModelConfig& cfg,
                               const Batch& batch, const EstimatorConfig& est,
                               const BaselineS1State& s1, double kl_weight, const Tensor& eps,
                               const std::vector<int>& decoder_inputs, RngStream& label_rng) {
  if (est.kind != EstimatorKind::Sample) {
    throw std::invalid_argument("estimators: score_function_grad needs kind=sample");
  }
  Tape tape;
  ModelBound m = bind_model(tape, params, true);
  Var log_q = classify(tape, m, cfg, batch);
  SampledParts parts = sampled_unlabeled_loss(tape, m, cfg, batch, est, s1, kl_weight, eps,
                                              decoder_inputs, label_rng, log_q, {});
  tape.backward(parts.loss);
  return collect_model_grads(m, params);
}

std::vector<VarianceRow> estimator_variance_probe(const ModelParams& params,
                                                  const ModelConfig& cfg, const Batch& batch,
                                                  const EstimatorConfig& est,
                                                  const BaselineS1State& s1, double kl_weight,
                                                  std::size_t n_draws, std::size_t n_coords,
                                                  std::uint64_t seed) {
  // fixed coordinate sample over the classifier group
  std::vector<std::pair<std::string, std::size_t>> coords;
  {
    RngStream pick_rng(mix_seed(seed, 0xC0'0DDA7A));
    std::vector<std::pair<std::string, std::size_t>> space;
    for (const auto& [name, t] : params.classifier.entries()) {
      for (std::size_t i = 0; i < t.size(); ++i) space.emplace_back(name, i);
    }
    for (std::size_t k = 0; k < n_coords && !space.empty(); ++k) {
      coords.push_back(space[pick_rng.next_u64() % space.size()]);
    }
  }

  Tensor eps = RngStream(mix_seed(seed, 0xE5)).draw_normal({batch.n, cfg.latent_width});
  std::vector<int> dec_in = shifted_decoder_inputs(batch);
  RngStream label_rng(mix_seed(seed, 0x1ABE1));

  // Welford keeps identical draws at exactly zero variance
  std::vector<double> mean(coords.size(), 0.0), m2(coords.size(), 0.0);
  for (std::size_t d = 0; d < n_draws; ++d) {
    GradMap clf;
    if (est.kind == EstimatorKind::Enumerate) {
      clf = unlabeled_grad_enumerate(params, cfg, batch, kl_weight, eps, dec_in)["classifier"];
    } else {
      clf = score_function_grad(params, cfg, batch, est, s1, kl_weight, eps, dec_in,
                                label_rng)["classifier"];
    }
    for (std::size_t c = 0; c < coords.size(); ++c) {
      const double g = clf.at(coords[c].first)[coords[c].second];
      const double delta = g - mean[c];
      mean[c] += delta / static_cast<double>(d + 1);
      m2[c] += delta * (g - mean[c]);
    }
  }

  std::vector<VarianceRow> rows;
  for (std::size_t c = 0; c < coords.size(); ++c) {
    VarianceRow row;
    row.coordinate = coords[c].first + "[" + std::to_string(coords[c].second) + "]";
    row.mean = mean[c];
    row.variance = n_draws > 1 ? m2[c] / static_cast<double>(n_draws - 1) : 0.0;
    row.n = n_draws;
    rows.push_back(row);
  }
  return rows;
}

std::string variance_rows_csv(const std::vector<VarianceRow>& rows) {
  std::ostringstream os;
  os.precision(17);
  os << "coordinate,mean,variance,n\n";
  for (const auto& r : rows) {
    os << r.coordinate << ',' << r.mean << ',' << r.variance << ',' << r.n << '\n';
  }
  return os.str();
}

StepLosses total_objective(Tape& tape, const ModelBound& m, const ModelConfig& cfg,
                           const Batch& labeled, const std::optional<Batch>& unlabeled,
                           const EstimatorConfig& est, const BaselineS1State& s1, double alpha,
                           double kl_weight, RngStream& rng, TrainMode mode) {
  if (alpha < 0.0) throw std::invalid_argument("estimators: alpha must be nonnegative");
  if (!labeled.labels) throw std::invalid_argument("estimators: labeled batch carries no labels");
  StepLosses out;

  Tensor y = one_hot(*labeled.labels, cfg.classes);
  BoundVars lab = labeled_bound(tape, m, cfg, labeled, y, kl_weight, rng, mode);
  Var log_q_lab = classify(tape, m, cfg, labeled, mode);
  Var ce = classifier_cross_entropy(log_q_lab, *labeled.labels);
  Var total = add(scale(mean(lab.bound), -1.0), scale(ce, alpha));
  out.labeled_bound = mean(lab.bound).value().item();
  out.cross_entropy = ce.value().item();

  if (unlabeled && unlabeled->n > 0) {
    const Batch& ub = *unlabeled;
    Tensor eps = rng.draw_normal({ub.n, cfg.latent_width});
    std::vector<int> dec_in = shifted_decoder_inputs(ub);
    if (mode.training && mode.word_dropout > 0.0) {
      dec_in = word_dropout(dec_in, mode.word_dropout, kUnkId, rng);
    }
    Var log_q = classify(tape, m, cfg, ub, mode);
    if (est.kind == EstimatorKind::Enumerate) {
      UnlabeledVars u =
          unlabeled_bound_enumerated(tape, m, cfg, ub, log_q, kl_weight, eps, dec_in, mode);
      total = add(total, scale(mean(u.bound), -1.0));
      out.unlabeled_bound = mean(u.bound).value().item();
    } else {
      SampledParts parts =
          sampled_unlabeled_loss(tape, m, cfg, ub, est, s1, kl_weight, eps, dec_in, rng, log_q,
                                 mode);
      total = add(total, parts.loss);
      out.unlabeled_bound = parts.mean_bound_estimate;
      out.s1_targets = std::move(parts.s1_targets);
    }
  }

  out.total = total;
  return out;
}

}  // namespace ssvae
