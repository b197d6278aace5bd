#pragma once

#include <cstddef>
#include <optional>
#include <vector>

namespace ssvae {

// Padded token-id matrix plus mask, the unit of training work. Labels are
// structurally absent for unlabeled batches, so no code path can read one.
struct Batch {
  std::size_t n = 0;        // examples
  std::size_t max_len = 0;  // padded length
  std::vector<int> ids;     // n * max_len, row-major, PAD beyond each length
  std::vector<double> mask; // 1 iff position < length
  std::vector<std::size_t> lengths;
  std::optional<std::vector<int>> labels;

  int id_at(std::size_t i, std::size_t t) const { return ids[i * max_len + t]; }
  double mask_at(std::size_t i, std::size_t t) const { return mask[i * max_len + t]; }
};

}  // namespace ssvae
