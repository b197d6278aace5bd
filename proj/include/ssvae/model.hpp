#pragma once

#include <optional>
#include <vector>

#include "ssvae/batch.hpp"
#include "ssvae/layers.hpp"
#include "ssvae/params.hpp"
#include "ssvae/rng.hpp"

namespace ssvae {

// Reserved vocabulary ids shared by the data pipeline and the decoder.
constexpr int kPadId = 0;
constexpr int kUnkId = 1;
constexpr int kBosId = 2;
constexpr int kEosId = 3;

struct ModelConfig {
  std::size_t vocab_size = 2000;
  std::size_t classes = 2;
  std::size_t embed_width = 32;
  std::size_t cell_width = 64;
  std::size_t latent_width = 16;
  CellKind decoder_cell = CellKind::Clstm2;
  double dropout = 0.2;

  double log_prior_y() const;  // uniform label prior, -ln C
};

ModelParams init_model(const ModelConfig& cfg, RngStream& rng);

// One-hot rows, width = class count.
Tensor one_hot(const std::vector<int>& labels, std::size_t classes);
Tensor one_hot_same(int label, std::size_t n, std::size_t classes);

struct ModelBound {
  BoundParams enc;
  BoundParams dec;
  BoundParams clf;
};

ModelBound bind_model(Tape& tape, const ModelParams& params, bool requires_grad = true);

// Regularization switches for one forward pass. Default is evaluation
// mode: no dropout, no word dropout.
struct TrainMode {
  bool training = false;
  double dropout = 0.0;
  double word_dropout = 0.0;
  RngStream* rng = nullptr;  // consumed for dropout masks when training
};

struct Posterior {
  Var mu;
  Var log_var;
};

// x_hat = final LSTM state over x; mu / log_var heads over concat(x_hat, y).
Posterior encode(Tape& tape, const ModelBound& m, const ModelConfig& cfg, const Batch& batch,
                 const Tensor& y, TrainMode mode = {});

// z = mu + exp(0.5 log_var) (*) eps; gradient reaches mu and log_var only.
Var reparameterize(const Posterior& post, const Tensor& eps);

// Per-unit KL against the standard normal prior, (n, latent):
//   0.5 (mu^2 + sigma^2 - log sigma^2 - 1)
Var gaussian_kl_matrix(const Posterior& post);
Var gaussian_kl(const Posterior& post);  // row sums, (n, 1)

// Final LSTM state -> dense -> log_softmax over classes, (n, C).
Var classify(Tape& tape, const ModelBound& m, const ModelConfig& cfg, const Batch& batch,
             TrainMode mode = {});

// Teacher-forcing inputs: gold tokens shifted right behind BOS.
std::vector<int> shifted_decoder_inputs(const Batch& batch);

// Sum_t mask_t * log_softmax(logits_t)[x_t], (n, 1). Initial state is a
// dense projection of concat(y, z) for the vanilla cell, of z alone for
// the conditional cells (y then enters per step).
Var decode_logprob(Tape& tape, const ModelBound& m, const ModelConfig& cfg, CellKind kind,
                   const Batch& batch, const Tensor& y, Var z,
                   const std::vector<int>& decoder_inputs, TrainMode mode = {});

struct BoundVars {
  Var bound;  // (n,1): recon + log_prior_y - kl_weight * kl
  Var recon;  // (n,1)
  Var kl;     // (n,1)
  double log_prior_y = 0.0;
};

// Per-example labeled bound, -L(x,y). The BoundReport decomposition is
// read off the Vars after the forward pass.
struct BoundReport {
  double recon;
  double kl;
  double log_prior_y;
  double bound;
};

std::vector<BoundReport> read_bound_reports(const BoundVars& b);

// Core form with the noise and decoder inputs supplied by the caller, so
// enumeration and sampling can share one eps draw across labels.
BoundVars labeled_bound_with(Tape& tape, const ModelBound& m, const ModelConfig& cfg,
                             const Batch& batch, const Tensor& y, double kl_weight,
                             const Tensor& eps, const std::vector<int>& decoder_inputs,
                             TrainMode mode = {});

// Convenience form: one z sample per example drawn from `rng`, word
// dropout applied to the decoder inputs when training.
BoundVars labeled_bound(Tape& tape, const ModelBound& m, const ModelConfig& cfg,
                        const Batch& batch, const Tensor& y, double kl_weight, RngStream& rng,
                        TrainMode mode = {});

// -sum_c p log p per row from normalized log-probabilities, (n, 1).
Var categorical_entropy(Var log_probs);

struct UnlabeledVars {
  Var bound;    // (n,1): sum_y q(y|x) (-L(x,y)) + H(q(y|x))
  Var entropy;  // (n,1)
  std::vector<BoundVars> per_label;
};

// Exact label enumeration; the same eps draw is shared across all labels
// of a given example.
UnlabeledVars unlabeled_bound_enumerated(Tape& tape, const ModelBound& m, const ModelConfig& cfg,
                                         const Batch& batch, Var log_q, double kl_weight,
                                         const Tensor& eps,
                                         const std::vector<int>& decoder_inputs,
                                         TrainMode mode = {});

// Mean cross-entropy of the classifier on a labeled batch, scalar.
Var classifier_cross_entropy(Var log_q, const std::vector<int>& labels);

}  // namespace ssvae
