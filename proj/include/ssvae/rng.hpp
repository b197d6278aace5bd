#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ssvae/tensor.hpp"

namespace ssvae {

// Counter-based pseudorandom stream (SplitMix64 over seed+counter).
// Identical (seed, draw sequence) reproduces identical values bit-for-bit
// across runs and platforms; a copy replays the same draws.
class RngStream {
 public:
  RngStream() = default;
  explicit RngStream(std::uint64_t seed, std::uint64_t counter = 0)
      : seed_(seed), counter_(counter) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t next_u64();
  double uniform();  // [0, 1)
  double standard_normal();
  int categorical(std::span<const double> probs);  // probs sum to 1 within 1e-9
  int bernoulli(double rate);                      // rate in [0, 1]

  Tensor draw_normal(Shape shape);
  Tensor draw_bernoulli(Shape shape, double rate);

  // Independent stream for a named purpose; detached from this stream's
  // counter so consumption order elsewhere cannot perturb it.
  RngStream fork(std::uint64_t tag) const;

 private:
  std::uint64_t seed_ = 0;
  std::uint64_t counter_ = 0;
};

// Deterministic seed derivation for (purpose, epoch, step)-style keys.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0);

}  // namespace ssvae
