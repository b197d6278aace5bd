#pragma once

#include <map>
#include <string>
#include <vector>

#include "ssvae/autodiff.hpp"
#include "ssvae/rng.hpp"
#include "ssvae/tensor.hpp"

namespace ssvae {

// Named gradient tensors, keyed like the ParamSet they belong to.
using GradMap = std::map<std::string, Tensor>;

enum class Init { Glorot, Zeros, Const };

struct ParamSpecEntry {
  std::string name;
  Shape shape;
  Init init = Init::Glorot;
  double const_value = 0.0;
};

// Named collection of learnable tensors for one network. Names are unique
// and shapes are fixed after construction.
class ParamSet {
 public:
  void add(std::string name, Tensor value);
  bool has(const std::string& name) const { return entries_.count(name) != 0; }
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;

  const std::map<std::string, Tensor>& entries() const { return entries_; }
  std::map<std::string, Tensor>& entries() { return entries_; }
  std::size_t total_size() const;

 private:
  std::map<std::string, Tensor> entries_;
};

// Weights ~ uniform(-s, s) with s = sqrt(6 / (fan_in + fan_out)); biases
// zero; Init::Const entries (forget-gate bias) take their stated value.
ParamSet init_params(const std::vector<ParamSpecEntry>& spec, RngStream& rng);

// Per-tape leaf bindings for one ParamSet.
class BoundParams {
 public:
  BoundParams() = default;
  BoundParams(Tape& tape, const ParamSet& params, bool requires_grad);

  Var operator[](const std::string& name) const;
  GradMap collect_grads(const ParamSet& params) const;

 private:
  Tape* tape_ = nullptr;
  std::map<std::string, Var> vars_;
};

// The four networks of the model. `baseline` holds the S1 regression
// scalar and is present only when that estimator is active.
struct ModelParams {
  ParamSet encoder;
  ParamSet decoder;
  ParamSet classifier;
  ParamSet baseline;

  std::vector<std::pair<std::string, ParamSet*>> groups();
  std::vector<std::pair<std::string, const ParamSet*>> groups() const;
};

// Gradients for every group, keyed by group name.
using GradGroups = std::map<std::string, GradMap>;

// Checkpoint container: "SSVP" magic + u32 version, then per group a name,
// entry count and (name, rank, dims, float64 payload) triples. Exact layout
// in README.md. Little-endian throughout.
void save_checkpoint(const ModelParams& params, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

// FNV-1a over every value byte, for no-mutation assertions.
std::uint64_t params_fingerprint(const ModelParams& params);

}  // namespace ssvae
