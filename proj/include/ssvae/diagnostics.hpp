#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ssvae/model.hpp"

namespace ssvae {

struct DIndexReport {
  double value = 0.0;  // fraction in [0,1]
  std::vector<std::size_t> per_class_correct;
  std::size_t total = 0;
};

// Fraction of labeled examples whose true label maximizes the per-label
// bound -L(x,y), at kl_weight 1 with one eps draw shared across the
// candidate labels of each example. Ties break toward the lowest index.
DIndexReport discrimination_index(const ModelParams& params, const ModelConfig& cfg,
                                  const std::vector<Batch>& labeled, std::uint64_t eps_seed);

// Tally step on a precomputed bound matrix: bounds[c][i] = -L(x_i, c).
DIndexReport d_index_from_bounds(const std::vector<std::vector<double>>& bounds,
                                 const std::vector<int>& labels);

// Unit-wise KL terms averaged over the evaluation set; sums to the total
// mean KL by construction.
std::vector<double> per_unit_kl(const ModelParams& params, const ModelConfig& cfg,
                                const std::vector<Batch>& batches);

// CSV with header id,label,z_0..z_{d-1}; one posterior draw per example.
void dump_latents(const ModelParams& params, const ModelConfig& cfg,
                  const std::vector<Batch>& batches, std::uint64_t seed,
                  const std::string& path);

enum class GenMode { Greedy, Sample };

// Free-running generation from (y, z): feeds its own previous token,
// stops at EOS or max_len. Greedy takes the argmax; Sample draws from the
// temperature-scaled softmax.
std::vector<int> generate(const ModelParams& params, const ModelConfig& cfg, int label,
                          const Tensor& z, GenMode mode, double temperature, std::size_t max_len,
                          std::uint64_t seed);

}  // namespace ssvae
