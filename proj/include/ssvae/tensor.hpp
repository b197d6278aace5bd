#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace ssvae {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);

// Dense row-major tensor of doubles. The only value type that flows
// through the math; rank 0 (scalar), 1 and 2 are what the ops use.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);  // zero-filled
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double v);
  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor ones(Shape shape) { return full(std::move(shape), 1.0); }
  static Tensor full(Shape shape, double v);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return values_.size(); }

  // rank-2 accessors; rank-1 counts as a single row
  std::size_t rows() const { return rank() == 2 ? shape_[0] : check_rows(); }
  std::size_t cols() const { return rank() == 2 ? shape_[1] : check_cols(); }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  double& at(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }

  // value of a size-1 tensor; throws otherwise
  double item() const;

  std::span<const double> data() const { return values_; }
  std::span<double> data() { return values_; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;

 private:
  std::size_t check_rows() const;
  std::size_t check_cols() const;

  Shape shape_;
  std::vector<double> values_;
};

}  // namespace ssvae
