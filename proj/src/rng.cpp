#include "ssvae/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace ssvae {

namespace {
std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}
}  // namespace

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return splitmix64(splitmix64(splitmix64(a) ^ b) ^ c);
}

std::uint64_t RngStream::next_u64() {
  return splitmix64(seed_ + 0x9E3779B97F4A7C15ULL * ++counter_);
}

double RngStream::uniform() {
  // 53 mantissa bits -> [0, 1)
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::standard_normal() {
  // Box-Muller; u1 nudged away from 0 so log stays finite
  double u1 = uniform();
  double u2 = uniform();
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

int RngStream::categorical(std::span<const double> probs) {
  double total = 0.0;
  for (double p : probs) {
    if (p < 0.0) throw std::invalid_argument("categorical: negative probability");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw std::invalid_argument("categorical: probabilities sum to " + std::to_string(total));
  }
  double u = uniform();
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(probs.size()) - 1;
}

int RngStream::bernoulli(double rate) {
  if (rate < 0.0 || rate > 1.0) {
    throw std::invalid_argument("bernoulli: rate " + std::to_string(rate) + " outside [0,1]");
  }
  return uniform() < rate ? 1 : 0;
}

Tensor RngStream::draw_normal(Shape shape) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = standard_normal();
  return t;
}

Tensor RngStream::draw_bernoulli(Shape shape, double rate) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<double>(bernoulli(rate));
  return t;
}

RngStream RngStream::fork(std::uint64_t tag) const {
  return RngStream(mix_seed(seed_, tag, counter_));
}

}  // namespace ssvae
