#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ssvae/autodiff.hpp"
#include "ssvae/batch.hpp"
#include "ssvae/params.hpp"
#include "ssvae/rng.hpp"

namespace ssvae {

enum class CellKind { Vanilla, Clstm1, Clstm2 };

CellKind cell_kind_from_string(const std::string& s);
std::string to_string(CellKind k);

struct CellVars {
  Var h;
  Var c;
};

enum class Activation { None, Tanh, Sigmoid };

// Wx + b under `prefix`.W / `prefix`.b, then activation.
Var dense(const BoundParams& p, const std::string& prefix, Var x, Activation act);

std::vector<ParamSpecEntry> dense_param_spec(const std::string& prefix, std::size_t in,
                                             std::size_t out);

// Gate matrices W_w*/W_h* plus biases under `prefix`.; forget bias starts
// at +1. `label_to_cell` adds W_yc (classes x cell) for the CLSTM-II path.
std::vector<ParamSpecEntry> lstm_param_spec(const std::string& prefix, std::size_t in,
                                            std::size_t cell, bool label_to_cell = false,
                                            std::size_t classes = 0);

// One step of a standard LSTM:
//   i = sig(w W_wi + h W_hi + b_i)     f = sig(w W_wf + h W_hf + b_f)
//   o = sig(w W_wo + h W_ho + b_o)     chat = tanh(w W_wc + h W_hc + b_c)
//   c' = f (*) c + i (*) chat          h' = o (*) tanh(c')
CellVars lstm_step(const BoundParams& p, const std::string& prefix, Var w_t, CellVars state);

// CLSTM-I: label vector concatenated with the word embedding each step.
CellVars clstm1_step(const BoundParams& p, const std::string& prefix, Var w_t, Var y,
                     CellVars state);

// CLSTM-II: gates see only (w_t, h); the label enters the memory cell,
//   c' = f (*) c + i (*) chat + tanh(y W_yc)
CellVars clstm2_step(const BoundParams& p, const std::string& prefix, Var w_t, Var y,
                     CellVars state);

// Token-id replacement with UNK at the given rate; loss targets are never
// touched (this runs on decoder inputs only).
std::vector<int> word_dropout(const std::vector<int>& ids, double rate, int unk_id,
                              RngStream& rng);

// Inverted dropout; identity when not training or rate is zero.
Var dropout(Var x, double rate, RngStream& rng, bool training);

struct UnrollOut {
  std::vector<Var> h;  // one per step
  CellVars final_state;
};

// Masked unrolling over a batch: embeds `ids` via `emb_name`, steps the
// cell, and carries state through masked positions unchanged.
// `y` is required iff the cell kind is conditional.
UnrollOut unroll(Tape& tape, CellKind kind, const BoundParams& p, const std::string& emb_name,
                 const std::string& lstm_prefix, const std::vector<int>& ids,
                 const std::vector<double>& mask, std::size_t n, std::size_t steps,
                 std::optional<Var> y, std::optional<CellVars> initial = {},
                 double emb_dropout = 0.0, RngStream* dropout_rng = nullptr,
                 bool training = false);

UnrollOut unroll(Tape& tape, CellKind kind, const BoundParams& p, const std::string& emb_name,
                 const std::string& lstm_prefix, const Batch& batch, std::optional<Var> y,
                 std::optional<CellVars> initial = {}, double emb_dropout = 0.0,
                 RngStream* dropout_rng = nullptr, bool training = false);

}  // namespace ssvae
