#include "ssvae/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace ssvae {

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ')';
  return os.str();
}

namespace {
std::size_t numel(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}
}  // namespace

Tensor::Tensor(Shape shape) : shape_(std::move(shape)), values_(numel(shape_), 0.0) {}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (numel(shape_) != values_.size()) {
    throw std::invalid_argument("tensor: shape " + shape_str(shape_) + " does not match " +
                                std::to_string(values_.size()) + " values");
  }
}

Tensor Tensor::scalar(double v) { return Tensor({}, {v}); }

Tensor Tensor::full(Shape shape, double v) {
  Tensor t(std::move(shape));
  for (auto& x : t.values_) x = v;
  return t;
}

std::size_t Tensor::check_rows() const {
  if (rank() <= 1) return 1;
  throw std::invalid_argument("tensor: rows() on rank-" + std::to_string(rank()));
}

std::size_t Tensor::check_cols() const {
  if (rank() == 1) return shape_[0];
  if (rank() == 0) return 1;
  throw std::invalid_argument("tensor: cols() on rank-" + std::to_string(rank()));
}

double Tensor::item() const {
  if (size() != 1) {
    throw std::invalid_argument("tensor: item() on non-scalar of shape " + shape_str(shape_));
  }
  return values_[0];
}

bool Tensor::all_finite() const {
  for (double v : values_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace ssvae
