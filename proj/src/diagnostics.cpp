#include "ssvae/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace ssvae {

DIndexReport d_index_from_bounds(const std::vector<std::vector<double>>& bounds,
                                 const std::vector<int>& labels) {
  if (bounds.empty() || labels.empty()) {
    throw std::invalid_argument("diagnostics: empty labeled set");
  }
  DIndexReport report;
  report.per_class_correct.assign(bounds.size(), 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < bounds.size(); ++c) {
      if (bounds[c][i] > bounds[best][i]) best = c;  // ties keep the lowest index
    }
    const auto truth = static_cast<std::size_t>(labels[i]);
    if (best == truth) ++report.per_class_correct[truth];
    ++report.total;
  }
  std::size_t correct = 0;
  for (auto c : report.per_class_correct) correct += c;
  report.value = static_cast<double>(correct) / static_cast<double>(report.total);
  return report;
}

DIndexReport discrimination_index(const ModelParams& params, const ModelConfig& cfg,
                                  const std::vector<Batch>& labeled, std::uint64_t eps_seed) {
  DIndexReport report;
  report.per_class_correct.assign(cfg.classes, 0);
  RngStream eps_rng(eps_seed);
  for (const auto& batch : labeled) {
    if (!batch.labels) {
      throw std::invalid_argument("diagnostics: discrimination index needs labeled batches");
    }
    Tape tape;
    ModelBound m = bind_model(tape, params, /*requires_grad=*/false);
    const Tensor eps = eps_rng.draw_normal({batch.n, cfg.latent_width});
    const auto dec_in = shifted_decoder_inputs(batch);
    // bound matrix (C, n), same eps per example across candidate labels
    std::vector<std::vector<double>> bounds(cfg.classes);
    for (std::size_t c = 0; c < cfg.classes; ++c) {
      BoundVars b = labeled_bound_with(tape, m, cfg, batch,
                                       one_hot_same(static_cast<int>(c), batch.n, cfg.classes),
                                       /*kl_weight=*/1.0, eps, dec_in);
      const Tensor& v = b.bound.value();
      bounds[c].assign(v.data().begin(), v.data().end());
    }
    const DIndexReport part = d_index_from_bounds(bounds, *batch.labels);
    for (std::size_t c = 0; c < cfg.classes; ++c) {
      report.per_class_correct[c] += part.per_class_correct[c];
    }
    report.total += part.total;
  }
  if (report.total == 0) throw std::invalid_argument("diagnostics: empty labeled set");
  std::size_t correct = 0;
  for (auto c : report.per_class_correct) correct += c;
  report.value = static_cast<double>(correct) / static_cast<double>(report.total);
  return report;
}

std::vector<double> per_unit_kl(const ModelParams& params, const ModelConfig& cfg,
                                const std::vector<Batch>& batches) {
  std::vector<double> sums(cfg.latent_width, 0.0);
  std::size_t count = 0;
  for (const auto& batch : batches) {
    if (!batch.labels) {
      throw std::invalid_argument("diagnostics: per-unit KL needs labeled batches");
    }
    Tape tape;
    ModelBound m = bind_model(tape, params, /*requires_grad=*/false);
    Posterior post = encode(tape, m, cfg, batch, one_hot(*batch.labels, cfg.classes));
    const Tensor kl = gaussian_kl_matrix(post).value();
    for (std::size_t i = 0; i < batch.n; ++i) {
      for (std::size_t d = 0; d < cfg.latent_width; ++d) sums[d] += kl.at(i, d);
    }
    count += batch.n;
  }
  if (count == 0) throw std::invalid_argument("diagnostics: empty evaluation set");
  for (auto& s : sums) s /= static_cast<double>(count);
  return sums;
}

void dump_latents(const ModelParams& params, const ModelConfig& cfg,
                  const std::vector<Batch>& batches, std::uint64_t seed,
                  const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("diagnostics: cannot write '" + path + "'");
  os.precision(17);
  os << "id,label";
  for (std::size_t d = 0; d < cfg.latent_width; ++d) os << ",z_" << d;
  os << '\n';
  RngStream rng(seed);
  std::size_t next_id = 0;
  for (const auto& batch : batches) {
    if (!batch.labels) throw std::invalid_argument("diagnostics: latent dump needs labels");
    Tape tape;
    ModelBound m = bind_model(tape, params, /*requires_grad=*/false);
    Posterior post = encode(tape, m, cfg, batch, one_hot(*batch.labels, cfg.classes));
    Var z = reparameterize(post, rng.draw_normal({batch.n, cfg.latent_width}));
    const Tensor& zv = z.value();
    for (std::size_t i = 0; i < batch.n; ++i) {
      os << next_id++ << ',' << (*batch.labels)[i];
      for (std::size_t d = 0; d < cfg.latent_width; ++d) os << ',' << zv.at(i, d);
      os << '\n';
    }
  }
}

std::vector<int> generate(const ModelParams& params, const ModelConfig& cfg, int label,
                          const Tensor& z, GenMode mode, double temperature, std::size_t max_len,
                          std::uint64_t seed) {
  if (z.size() != cfg.latent_width) {
    throw std::invalid_argument("diagnostics: z has " + std::to_string(z.size()) +
                                " units, model wants " + std::to_string(cfg.latent_width));
  }
  if (mode == GenMode::Sample && temperature <= 0.0) {
    throw std::invalid_argument("diagnostics: sample mode needs a positive temperature");
  }
  const CellKind kind = cfg.decoder_cell;
  Tape tape;
  BoundParams dec(tape, params.decoder, /*requires_grad=*/false);
  const Tensor y = one_hot_same(label, 1, cfg.classes);
  Var y_const = tape.constant(y);
  Tensor z_row({1, cfg.latent_width});
  for (std::size_t d = 0; d < cfg.latent_width; ++d) z_row[d] = z[d];
  Var z_var = tape.constant(std::move(z_row));
  Var init_in = kind == CellKind::Vanilla ? concat(y_const, z_var, 1) : z_var;
  CellVars state{dense(dec, "init_h", init_in, Activation::Tanh),
                 dense(dec, "init_c", init_in, Activation::Tanh)};

  RngStream rng(seed);
  std::vector<int> out;
  int prev = kBosId;
  for (std::size_t t = 0; t < max_len; ++t) {
    Var w = embedding_gather(dec["emb"], {prev});
    state = kind == CellKind::Vanilla ? lstm_step(dec, "lstm", w, state)
            : kind == CellKind::Clstm1 ? clstm1_step(dec, "lstm", w, y_const, state)
                                       : clstm2_step(dec, "lstm", w, y_const, state);
    const Tensor logits = dense(dec, "out", state.h, Activation::None).value();
    int chosen = 0;
    if (mode == GenMode::Greedy) {
      for (std::size_t v = 1; v < cfg.vocab_size; ++v) {
        if (logits[v] > logits[static_cast<std::size_t>(chosen)]) chosen = static_cast<int>(v);
      }
    } else {
      double mx = -1e300;
      for (std::size_t v = 0; v < cfg.vocab_size; ++v) {
        mx = std::max(mx, logits[v] / temperature);
      }
      std::vector<double> p(cfg.vocab_size);
      double total = 0.0;
      for (std::size_t v = 0; v < cfg.vocab_size; ++v) {
        p[v] = std::exp(logits[v] / temperature - mx);
        total += p[v];
      }
      for (auto& pv : p) pv /= total;
      chosen = rng.categorical(p);
    }
    if (chosen == kEosId) break;
    out.push_back(chosen);
    prev = chosen;
  }
  return out;
}

}  // namespace ssvae
