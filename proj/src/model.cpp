#include "ssvae/model.hpp"

#include <cmath>
#include <stdexcept>

namespace ssvae {

double ModelConfig::log_prior_y() const { return -std::log(static_cast<double>(classes)); }

ModelParams init_model(const ModelConfig& cfg, RngStream& rng) {
  ModelParams out;
  const std::size_t V = cfg.vocab_size, C = cfg.classes, E = cfg.embed_width,
                    W = cfg.cell_width, D = cfg.latent_width;

  std::vector<ParamSpecEntry> enc{{"emb", {V, E}, Init::Glorot, 0.0}};
  for (auto& e : lstm_param_spec("lstm", E, W)) enc.push_back(e);
  for (auto& e : dense_param_spec("mu", W + C, D)) enc.push_back(e);
  for (auto& e : dense_param_spec("logvar", W + C, D)) enc.push_back(e);
  out.encoder = init_params(enc, rng);

  const bool cond = cfg.decoder_cell != CellKind::Vanilla;
  const std::size_t dec_in = cfg.decoder_cell == CellKind::Clstm1 ? E + C : E;
  const std::size_t init_in = cond ? D : C + D;
  std::vector<ParamSpecEntry> dec{{"emb", {V, E}, Init::Glorot, 0.0}};
  for (auto& e : lstm_param_spec("lstm", dec_in, W, cfg.decoder_cell == CellKind::Clstm2, C))
    dec.push_back(e);
  for (auto& e : dense_param_spec("init_h", init_in, W)) dec.push_back(e);
  for (auto& e : dense_param_spec("init_c", init_in, W)) dec.push_back(e);
  for (auto& e : dense_param_spec("out", W, V)) dec.push_back(e);
  out.decoder = init_params(dec, rng);

  std::vector<ParamSpecEntry> clf{{"emb", {V, E}, Init::Glorot, 0.0}};
  for (auto& e : lstm_param_spec("lstm", E, W)) clf.push_back(e);
  for (auto& e : dense_param_spec("out", W, C)) clf.push_back(e);
  out.classifier = init_params(clf, rng);

  return out;
}

Tensor one_hot(const std::vector<int>& labels, std::size_t classes) {
  Tensor y({labels.size(), classes});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int c = labels[i];
    if (c < 0 || static_cast<std::size_t>(c) >= classes) {
      throw std::invalid_argument("model: label " + std::to_string(c) + " outside " +
                                  std::to_string(classes) + " classes");
    }
    y.at(i, static_cast<std::size_t>(c)) = 1.0;
  }
  return y;
}

Tensor one_hot_same(int label, std::size_t n, std::size_t classes) {
  return one_hot(std::vector<int>(n, label), classes);
}

ModelBound bind_model(Tape& tape, const ModelParams& params, bool requires_grad) {
  return {BoundParams(tape, params.encoder, requires_grad),
          BoundParams(tape, params.decoder, requires_grad),
          BoundParams(tape, params.classifier, requires_grad)};
}

Posterior encode(Tape& tape, const ModelBound& m, const ModelConfig& cfg, const Batch& batch,
                 const Tensor& y, TrainMode mode) {
  if (y.rows() != batch.n || y.cols() != cfg.classes) {
    throw std::invalid_argument("model: encode label width " + shape_str(y.shape()) +
                                " does not match batch of " + std::to_string(batch.n) + " x " +
                                std::to_string(cfg.classes));
  }
  auto rolled = unroll(tape, CellKind::Vanilla, m.enc, "emb", "lstm", batch, std::nullopt, {},
                       mode.dropout, mode.rng, mode.training);
  Var x_hat = rolled.final_state.h;
  if (mode.training && mode.rng != nullptr) {
    x_hat = dropout(x_hat, mode.dropout, *mode.rng, true);
  }
  Var hy = concat(x_hat, tape.constant(y), 1);
  return {dense(m.enc, "mu", hy, Activation::None),
          dense(m.enc, "logvar", hy, Activation::None)};
}

Var reparameterize(const Posterior& post, const Tensor& eps) {
  if (eps.shape() != post.mu.value().shape()) {
    throw std::invalid_argument("model: eps shape " + shape_str(eps.shape()) +
                                " does not match mu " + shape_str(post.mu.value().shape()));
  }
  Var sigma = exp(scale(post.log_var, 0.5));
  return add(post.mu, mul(sigma, post.mu.tape->constant(eps)));
}

Var gaussian_kl_matrix(const Posterior& post) {
  Tape* tape = post.mu.tape;
  Var mu2 = mul(post.mu, post.mu);
  Var sigma2 = exp(post.log_var);
  Var ones = tape->constant(Tensor::ones(post.mu.value().shape()));
  return scale(sub(add(mu2, sigma2), add(post.log_var, ones)), 0.5);
}

Var gaussian_kl(const Posterior& post) { return row_sum(gaussian_kl_matrix(post)); }

Var classify(Tape& tape, const ModelBound& m, const ModelConfig& cfg, const Batch& batch,
             TrainMode mode) {
  (void)cfg;
  auto rolled = unroll(tape, CellKind::Vanilla, m.clf, "emb", "lstm", batch, std::nullopt, {},
                       mode.dropout, mode.rng, mode.training);
  Var feature = rolled.final_state.h;
  if (mode.training && mode.rng != nullptr) {
    feature = dropout(feature, mode.dropout, *mode.rng, true);
  }
  return log_softmax(dense(m.clf, "out", feature, Activation::None), 1);
}

std::vector<int> shifted_decoder_inputs(const Batch& batch) {
  std::vector<int> in(batch.ids.size(), kPadId);
  for (std::size_t i = 0; i < batch.n; ++i) {
    in[i * batch.max_len] = kBosId;
    for (std::size_t t = 1; t < batch.max_len; ++t) {
      in[i * batch.max_len + t] = batch.id_at(i, t - 1);
    }
  }
  return in;
}

Var decode_logprob(Tape& tape, const ModelBound& m, const ModelConfig& cfg, CellKind kind,
                   const Batch& batch, const Tensor& y, Var z,
                   const std::vector<int>& decoder_inputs, TrainMode mode) {
  (void)mode;
  const std::size_t n = batch.n;
  Var y_const = tape.constant(y);
  Var init_in = kind == CellKind::Vanilla ? concat(y_const, z, 1) : z;
  CellVars init{dense(m.dec, "init_h", init_in, Activation::Tanh),
                dense(m.dec, "init_c", init_in, Activation::Tanh)};
  std::optional<Var> y_step;
  if (kind != CellKind::Vanilla) y_step = y_const;
  auto rolled = unroll(tape, kind, m.dec, "emb", "lstm", decoder_inputs, batch.mask, n,
                       batch.max_len, y_step, init);

  (void)cfg;
  Var total = tape.constant(Tensor::zeros({n, 1}));
  for (std::size_t t = 0; t < batch.max_len; ++t) {
    Var logits = dense(m.dec, "out", rolled.h[t], Activation::None);
    Var lp = log_softmax(logits, 1);
    std::vector<int> targets(n);
    Tensor m_t({n, 1});
    for (std::size_t i = 0; i < n; ++i) {
      targets[i] = batch.id_at(i, t);
      m_t[i] = batch.mask_at(i, t);
    }
    total = add(total, mul(pick(lp, targets), tape.constant(std::move(m_t))));
  }
  return total;
}

std::vector<BoundReport> read_bound_reports(const BoundVars& b) {
  const Tensor& bound = b.bound.value();
  const Tensor& recon = b.recon.value();
  const Tensor& kl = b.kl.value();
  std::vector<BoundReport> out(bound.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = {recon[i], kl[i], b.log_prior_y, bound[i]};
  }
  return out;
}

BoundVars labeled_bound_with(Tape& tape, const ModelBound& m, const ModelConfig& cfg,
                             const Batch& batch, const Tensor& y, double kl_weight,
                             const Tensor& eps, const std::vector<int>& decoder_inputs,
                             TrainMode mode) {
  if (kl_weight < 0.0 || kl_weight > 1.0) {
    throw std::invalid_argument("model: kl_weight " + std::to_string(kl_weight) +
                                " outside [0,1]");
  }
  Posterior post = encode(tape, m, cfg, batch, y, mode);
  Var z = reparameterize(post, eps);
  Var kl = gaussian_kl(post);
  Var recon = decode_logprob(tape, m, cfg, cfg.decoder_cell, batch, y, z, decoder_inputs, mode);
  const double log_prior = cfg.log_prior_y();
  Var prior = tape.constant(Tensor::full({batch.n, 1}, log_prior));
  Var bound = sub(add(recon, prior), scale(kl, kl_weight));
  return {bound, recon, kl, log_prior};
}

BoundVars labeled_bound(Tape& tape, const ModelBound& m, const ModelConfig& cfg,
                        const Batch& batch, const Tensor& y, double kl_weight, RngStream& rng,
                        TrainMode mode) {
  Tensor eps = rng.draw_normal({batch.n, cfg.latent_width});
  std::vector<int> dec_in = shifted_decoder_inputs(batch);
  if (mode.training && mode.word_dropout > 0.0) {
    dec_in = word_dropout(dec_in, mode.word_dropout, kUnkId, rng);
  }
  return labeled_bound_with(tape, m, cfg, batch, y, kl_weight, eps, dec_in, mode);
}

Var categorical_entropy(Var log_probs) {
  return scale(row_sum(mul(exp(log_probs), log_probs)), -1.0);
}

UnlabeledVars unlabeled_bound_enumerated(Tape& tape, const ModelBound& m, const ModelConfig& cfg,
                                         const Batch& batch, Var log_q, double kl_weight,
                                         const Tensor& eps,
                                         const std::vector<int>& decoder_inputs,
                                         TrainMode mode) {
  Var q = exp(log_q);
  Var acc = tape.constant(Tensor::zeros({batch.n, 1}));
  UnlabeledVars out;
  for (std::size_t c = 0; c < cfg.classes; ++c) {
    Tensor y = one_hot_same(static_cast<int>(c), batch.n, cfg.classes);
    BoundVars b =
        labeled_bound_with(tape, m, cfg, batch, y, kl_weight, eps, decoder_inputs, mode);
    acc = add(acc, mul(slice(q, 1, c, 1), b.bound));
    out.per_label.push_back(b);
  }
  out.entropy = categorical_entropy(log_q);
  out.bound = add(acc, out.entropy);
  return out;
}

Var classifier_cross_entropy(Var log_q, const std::vector<int>& labels) {
  return scale(mean(pick(log_q, labels)), -1.0);
}

}  // namespace ssvae
