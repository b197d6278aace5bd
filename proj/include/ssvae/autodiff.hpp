#pragma once

#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "ssvae/tensor.hpp"

namespace ssvae {

class Tape;

// Lightweight handle to a node on a tape. Carries its tape so the op
// functions below compose without threading the tape through every call.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const Tensor& value() const;
};

// Define-by-run tape. Rebuilt per forward pass; nodes are appended in
// creation order, so reverse id order is a reverse topological order and
// backward visits each node exactly once.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool requires_grad);
  Var constant(Tensor value) { return leaf(std::move(value), false); }
  Var constant_scalar(double v) { return constant(Tensor::scalar(v)); }

  // Gradient of the last backward() w.r.t. v; zeros if v was not reached.
  Tensor grad(Var v) const;

  // Reverse-mode sweep from a scalar root on this tape.
  void backward(Var root);

  std::size_t node_count() const { return nodes_.size(); }

  // --- internal plumbing for the primitive ops ---
  // Backward rules read saved values off the tape via self/parent ids
  // instead of capturing tensor copies.
  using BackwardFn = std::function<void(Tape&, int self, const Tensor& upstream)>;
  Var emit(Tensor value, std::vector<int> parents, BackwardFn backward);
  const Tensor& value_of(int id) const { return nodes_[id].value; }
  bool needs_grad(int id) const { return nodes_[id].requires_grad; }
  int parent_of(int id, std::size_t slot) const { return nodes_[id].parents[slot]; }
  void accumulate(int id, Tensor g);

 private:
  struct Node {
    Tensor value;
    bool requires_grad = false;
    std::vector<int> parents;
    BackwardFn backward;
  };
  // deque keeps value_of() references stable while new nodes are appended
  std::deque<Node> nodes_;
  std::vector<Tensor> grads_;
  std::vector<bool> has_grad_;
};

// Primitive catalog. Elementwise ops require exactly matching shapes;
// mismatches are reported with the op name and both shapes.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);  // elementwise
Var matmul(Var a, Var b);
Var concat(Var a, Var b, int axis);
Var slice(Var x, int axis, std::size_t start, std::size_t len);
Var sum(Var x);   // -> rank-0 scalar
Var mean(Var x);  // -> rank-0 scalar
Var sigmoid(Var x);
Var tanh(Var x);
Var exp(Var x);
Var log(Var x);                    // domain error on values <= 0
Var log_softmax(Var x, int axis);  // max-shifted stable form
Var embedding_gather(Var table, const std::vector<int>& ids);
Var pick(Var x, const std::vector<int>& col_ids);  // x[i, col_ids[i]] -> (n,1)
Var broadcast(Var x, const Shape& target);

// Convenience compositions of catalog primitives.
Var scale(Var x, double c);       // x * c
Var affine(Var x, Var w, Var b);  // x.w + b (bias broadcast over rows)
Var row_sum(Var x);               // (n,m) -> (n,1) via matmul with ones
Var detach(Var x);                // value copied onto the tape as a constant

}  // namespace ssvae
