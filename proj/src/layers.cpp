#include "ssvae/layers.hpp"

#include <stdexcept>

namespace ssvae {

CellKind cell_kind_from_string(const std::string& s) {
  if (s == "vanilla") return CellKind::Vanilla;
  if (s == "clstm1") return CellKind::Clstm1;
  if (s == "clstm2") return CellKind::Clstm2;
  throw std::invalid_argument("layers: unknown cell kind '" + s + "'");
}

std::string to_string(CellKind k) {
  switch (k) {
    case CellKind::Vanilla: return "vanilla";
    case CellKind::Clstm1: return "clstm1";
    case CellKind::Clstm2: return "clstm2";
  }
  return "?";
}

Var dense(const BoundParams& p, const std::string& prefix, Var x, Activation act) {
  Var z = affine(x, p[prefix + ".W"], p[prefix + ".b"]);
  switch (act) {
    case Activation::None: return z;
    case Activation::Tanh: return tanh(z);
    case Activation::Sigmoid: return sigmoid(z);
  }
  return z;
}

std::vector<ParamSpecEntry> dense_param_spec(const std::string& prefix, std::size_t in,
                                             std::size_t out) {
  return {{prefix + ".W", {in, out}, Init::Glorot, 0.0},
          {prefix + ".b", {out}, Init::Zeros, 0.0}};
}

std::vector<ParamSpecEntry> lstm_param_spec(const std::string& prefix, std::size_t in,
                                            std::size_t cell, bool label_to_cell,
                                            std::size_t classes) {
  std::vector<ParamSpecEntry> spec;
  for (const char* g : {"i", "f", "o", "c"}) {
    spec.push_back({prefix + ".W_w" + g, {in, cell}, Init::Glorot, 0.0});
    spec.push_back({prefix + ".W_h" + g, {cell, cell}, Init::Glorot, 0.0});
    // forget bias +1 keeps early memory open
    spec.push_back({prefix + ".b_" + g, {cell},
                    g[0] == 'f' ? Init::Const : Init::Zeros, 1.0});
  }
  if (label_to_cell) {
    spec.push_back({prefix + ".W_yc", {classes, cell}, Init::Glorot, 0.0});
  }
  return spec;
}

namespace {

Var gate(const BoundParams& p, const std::string& prefix, const char* g, Var w_t, Var h) {
  Var pre = add(matmul(w_t, p[prefix + ".W_w" + g]), matmul(h, p[prefix + ".W_h" + g]));
  Var b = p[prefix + ".b_" + g];
  return add(pre, broadcast(b, pre.value().shape()));
}

CellVars cell_update(const BoundParams& p, const std::string& prefix, Var w_t, CellVars s,
                     std::optional<Var> label_term_y) {
  Var i = sigmoid(gate(p, prefix, "i", w_t, s.h));
  Var f = sigmoid(gate(p, prefix, "f", w_t, s.h));
  Var o = sigmoid(gate(p, prefix, "o", w_t, s.h));
  Var chat = tanh(gate(p, prefix, "c", w_t, s.h));
  Var c = add(mul(f, s.c), mul(i, chat));
  if (label_term_y) {
    c = add(c, tanh(matmul(*label_term_y, p[prefix + ".W_yc"])));
  }
  return {mul(o, tanh(c)), c};
}

}  // namespace

CellVars lstm_step(const BoundParams& p, const std::string& prefix, Var w_t, CellVars state) {
  return cell_update(p, prefix, w_t, state, std::nullopt);
}

CellVars clstm1_step(const BoundParams& p, const std::string& prefix, Var w_t, Var y,
                     CellVars state) {
  return cell_update(p, prefix, concat(w_t, y, 1), state, std::nullopt);
}

CellVars clstm2_step(const BoundParams& p, const std::string& prefix, Var w_t, Var y,
                     CellVars state) {
  return cell_update(p, prefix, w_t, state, y);
}

std::vector<int> word_dropout(const std::vector<int>& ids, double rate, int unk_id,
                              RngStream& rng) {
  if (rate < 0.0 || rate > 1.0) {
    throw std::invalid_argument("layers: word_dropout rate " + std::to_string(rate));
  }
  std::vector<int> out = ids;
  if (rate == 0.0) return out;
  for (auto& id : out) {
    if (rng.bernoulli(rate)) id = unk_id;
  }
  return out;
}

Var dropout(Var x, double rate, RngStream& rng, bool training) {
  if (!training || rate == 0.0) return x;
  if (rate < 0.0 || rate >= 1.0) {
    throw std::invalid_argument("layers: dropout rate " + std::to_string(rate));
  }
  Tensor m(x.value().shape());
  const double keep = 1.0 - rate;
  for (auto& v : m.data()) v = rng.bernoulli(keep) / keep;
  return mul(x, x.tape->constant(std::move(m)));
}

UnrollOut unroll(Tape& tape, CellKind kind, const BoundParams& p, const std::string& emb_name,
                 const std::string& lstm_prefix, const std::vector<int>& ids,
                 const std::vector<double>& mask, std::size_t n, std::size_t steps,
                 std::optional<Var> y, std::optional<CellVars> initial, double emb_dropout,
                 RngStream* dropout_rng, bool training) {
  if (kind != CellKind::Vanilla && !y) {
    throw std::invalid_argument("layers: conditional cell " + to_string(kind) +
                                " requires a label vector");
  }
  const std::size_t cell = p[lstm_prefix + ".W_hi"].value().cols();
  CellVars state = initial ? *initial
                           : CellVars{tape.constant(Tensor::zeros({n, cell})),
                                      tape.constant(Tensor::zeros({n, cell}))};
  UnrollOut out;
  out.h.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    std::vector<int> step_ids(n);
    Tensor m({n, 1});
    for (std::size_t i = 0; i < n; ++i) {
      step_ids[i] = ids[i * steps + t];
      m[i] = mask[i * steps + t];
    }
    Var w_t = embedding_gather(p[emb_name], step_ids);
    if (emb_dropout > 0.0 && training && dropout_rng != nullptr) {
      w_t = dropout(w_t, emb_dropout, *dropout_rng, training);
    }
    CellVars next = kind == CellKind::Vanilla ? lstm_step(p, lstm_prefix, w_t, state)
                    : kind == CellKind::Clstm1 ? clstm1_step(p, lstm_prefix, w_t, *y, state)
                                               : clstm2_step(p, lstm_prefix, w_t, *y, state);
    // padding is a no-op: masked rows carry the previous state through
    Var keep = broadcast(tape.constant(m), Shape{n, cell});
    Tensor inv_m({n, 1});
    for (std::size_t i = 0; i < n; ++i) inv_m[i] = 1.0 - m[i];
    Var drop = broadcast(tape.constant(std::move(inv_m)), Shape{n, cell});
    state = {add(mul(keep, next.h), mul(drop, state.h)),
             add(mul(keep, next.c), mul(drop, state.c))};
    out.h.push_back(state.h);
  }
  out.final_state = state;
  return out;
}

UnrollOut unroll(Tape& tape, CellKind kind, const BoundParams& p, const std::string& emb_name,
                 const std::string& lstm_prefix, const Batch& batch, std::optional<Var> y,
                 std::optional<CellVars> initial, double emb_dropout, RngStream* dropout_rng,
                 bool training) {
  return unroll(tape, kind, p, emb_name, lstm_prefix, batch.ids, batch.mask, batch.n,
                batch.max_len, y, initial, emb_dropout, dropout_rng, training);
}

}  // namespace ssvae
