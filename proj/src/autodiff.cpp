#include "ssvae/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ssvae {

const Tensor& Var::value() const {
  if (!valid()) throw std::runtime_error("autodiff: value() on invalid Var");
  return tape->value_of(id);
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  nodes_.push_back(Node{std::move(value), requires_grad, {}, nullptr});
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::emit(Tensor value, std::vector<int> parents, BackwardFn backward) {
  bool rg = false;
  for (int p : parents) rg = rg || nodes_[p].requires_grad;
  nodes_.push_back(
      Node{std::move(value), rg, std::move(parents), rg ? std::move(backward) : nullptr});
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

void Tape::accumulate(int id, Tensor g) {
  if (!nodes_[id].requires_grad) return;
  if (!has_grad_[id]) {
    grads_[id] = std::move(g);
    has_grad_[id] = true;
  } else {
    auto dst = grads_[id].data();
    auto src = g.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }
}

Tensor Tape::grad(Var v) const {
  if (v.tape != this || v.id < 0 || v.id >= static_cast<int>(nodes_.size())) {
    throw std::runtime_error("autodiff: grad() for a Var not on this tape");
  }
  if (v.id < static_cast<int>(has_grad_.size()) && has_grad_[v.id]) return grads_[v.id];
  return Tensor::zeros(nodes_[v.id].value.shape());
}

void Tape::backward(Var root) {
  if (root.tape != this || root.id < 0 || root.id >= static_cast<int>(nodes_.size())) {
    throw std::runtime_error("autodiff: backward root not on the active tape");
  }
  const Tensor& rv = nodes_[root.id].value;
  if (rv.size() != 1) {
    throw std::runtime_error("autodiff: backward root must be scalar, got shape " +
                             shape_str(rv.shape()));
  }
  grads_.assign(nodes_.size(), Tensor());
  has_grad_.assign(nodes_.size(), false);
  grads_[root.id] = Tensor::full(rv.shape(), 1.0);
  has_grad_[root.id] = true;
  for (int id = root.id; id >= 0; --id) {
    if (!has_grad_[id] || !nodes_[id].backward) continue;
    nodes_[id].backward(*this, id, grads_[id]);
  }
}

namespace {

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw std::invalid_argument(std::string("autodiff: ") + op + ": shapes " +
                              shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                              " do not conform");
}

void check_same_tape(const char* op, Var a, Var b) {
  if (a.tape == nullptr || a.tape != b.tape) {
    throw std::invalid_argument(std::string("autodiff: ") + op + ": inputs on different tapes");
  }
}

}  // namespace

Var add(Var a, Var b) {
  check_same_tape("add", a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (!av.same_shape(bv)) shape_error("add", av, bv);
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return a.tape->emit(std::move(out), {a.id, b.id},
                      [](Tape& t, int self, const Tensor& g) {
                        t.accumulate(t.parent_of(self, 0), g);
                        t.accumulate(t.parent_of(self, 1), g);
                      });
}

Var sub(Var a, Var b) {
  check_same_tape("sub", a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (!av.same_shape(bv)) shape_error("sub", av, bv);
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return a.tape->emit(std::move(out), {a.id, b.id},
                      [](Tape& t, int self, const Tensor& g) {
                        t.accumulate(t.parent_of(self, 0), g);
                        Tensor gb(g.shape());
                        for (std::size_t i = 0; i < g.size(); ++i) gb[i] = -g[i];
                        t.accumulate(t.parent_of(self, 1), std::move(gb));
                      });
}

Var mul(Var a, Var b) {
  check_same_tape("mul", a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (!av.same_shape(bv)) shape_error("mul", av, bv);
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return a.tape->emit(std::move(out), {a.id, b.id},
                      [](Tape& t, int self, const Tensor& g) {
                        const int aid = t.parent_of(self, 0);
                        const int bid = t.parent_of(self, 1);
                        if (t.needs_grad(aid)) {
                          const Tensor& bv = t.value_of(bid);
                          Tensor ga(g.shape());
                          for (std::size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * bv[i];
                          t.accumulate(aid, std::move(ga));
                        }
                        if (t.needs_grad(bid)) {
                          const Tensor& av = t.value_of(aid);
                          Tensor gb(g.shape());
                          for (std::size_t i = 0; i < g.size(); ++i) gb[i] = g[i] * av[i];
                          t.accumulate(bid, std::move(gb));
                        }
                      });
}

namespace {

// C (n,m) += A (n,k) . B (k,m), raw row-major kernel
void matmul_accum(const double* A, const double* B, double* C, std::size_t n, std::size_t k,
                  std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* a_row = A + i * k;
    double* c_row = C + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a_row[p];
      if (aip == 0.0) continue;
      const double* b_row = B + p * m;
      for (std::size_t j = 0; j < m; ++j) c_row[j] += aip * b_row[j];
    }
  }
}

// C (n,k) += G (n,m) . B^T (m,k view of (k,m))
void matmul_bt_accum(const double* G, const double* B, double* C, std::size_t n, std::size_t k,
                     std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* g_row = G + i * m;
    double* c_row = C + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double* b_row = B + p * m;
      double acc = 0.0;
      for (std::size_t j = 0; j < m; ++j) acc += g_row[j] * b_row[j];
      c_row[p] += acc;
    }
  }
}

}  // namespace

Var matmul(Var a, Var b) {
  check_same_tape("matmul", a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.cols() != bv.rows()) shape_error("matmul", av, bv);
  const std::size_t n = av.rows(), k = av.cols(), m = bv.cols();
  Tensor out({n, m});
  matmul_accum(av.data().data(), bv.data().data(), out.data().data(), n, k, m);
  return a.tape->emit(
      std::move(out), {a.id, b.id}, [n, k, m](Tape& t, int self, const Tensor& g) {
        const int aid = t.parent_of(self, 0);
        const int bid = t.parent_of(self, 1);
        if (t.needs_grad(aid)) {
          Tensor ga({n, k});  // g . b^T
          matmul_bt_accum(g.data().data(), t.value_of(bid).data().data(), ga.data().data(), n, k,
                          m);
          t.accumulate(aid, std::move(ga));
        }
        if (t.needs_grad(bid)) {
          const Tensor& av = t.value_of(aid);
          Tensor gb({k, m});  // a^T . g
          const double* A = av.data().data();
          const double* G = g.data().data();
          double* C = gb.data().data();
          for (std::size_t i = 0; i < n; ++i) {
            const double* a_row = A + i * k;
            const double* g_row = G + i * m;
            for (std::size_t p = 0; p < k; ++p) {
              const double aip = a_row[p];
              if (aip == 0.0) continue;
              double* c_row = C + p * m;
              for (std::size_t j = 0; j < m; ++j) c_row[j] += aip * g_row[j];
            }
          }
          t.accumulate(bid, std::move(gb));
        }
      });
}

Var concat(Var a, Var b, int axis) {
  check_same_tape("concat", a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() == 1 && bv.rank() == 1 && axis == 0) {
    const std::size_t na = av.size(), nb = bv.size();
    Tensor out({na + nb});
    for (std::size_t i = 0; i < na; ++i) out[i] = av[i];
    for (std::size_t i = 0; i < nb; ++i) out[na + i] = bv[i];
    return a.tape->emit(std::move(out), {a.id, b.id},
                        [na, nb](Tape& t, int self, const Tensor& g) {
                          Tensor ga({na}), gb({nb});
                          for (std::size_t i = 0; i < na; ++i) ga[i] = g[i];
                          for (std::size_t i = 0; i < nb; ++i) gb[i] = g[na + i];
                          t.accumulate(t.parent_of(self, 0), std::move(ga));
                          t.accumulate(t.parent_of(self, 1), std::move(gb));
                        });
  }
  if (av.rank() != 2 || bv.rank() != 2) shape_error("concat", av, bv);
  if (axis == 1) {
    if (av.rows() != bv.rows()) shape_error("concat", av, bv);
    const std::size_t n = av.rows(), ca = av.cols(), cb = bv.cols();
    Tensor out({n, ca + cb});
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < ca; ++j) out.at(i, j) = av.at(i, j);
      for (std::size_t j = 0; j < cb; ++j) out.at(i, ca + j) = bv.at(i, j);
    }
    return a.tape->emit(std::move(out), {a.id, b.id},
                        [n, ca, cb](Tape& t, int self, const Tensor& g) {
                          Tensor ga({n, ca}), gb({n, cb});
                          for (std::size_t i = 0; i < n; ++i) {
                            for (std::size_t j = 0; j < ca; ++j) ga.at(i, j) = g.at(i, j);
                            for (std::size_t j = 0; j < cb; ++j) gb.at(i, j) = g.at(i, ca + j);
                          }
                          t.accumulate(t.parent_of(self, 0), std::move(ga));
                          t.accumulate(t.parent_of(self, 1), std::move(gb));
                        });
  }
  if (axis == 0) {
    if (av.cols() != bv.cols()) shape_error("concat", av, bv);
    const std::size_t ra = av.rows(), rb = bv.rows(), c = av.cols();
    Tensor out({ra + rb, c});
    for (std::size_t i = 0; i < ra * c; ++i) out[i] = av[i];
    for (std::size_t i = 0; i < rb * c; ++i) out[ra * c + i] = bv[i];
    return a.tape->emit(std::move(out), {a.id, b.id},
                        [ra, rb, c](Tape& t, int self, const Tensor& g) {
                          Tensor ga({ra, c}), gb({rb, c});
                          for (std::size_t i = 0; i < ra * c; ++i) ga[i] = g[i];
                          for (std::size_t i = 0; i < rb * c; ++i) gb[i] = g[ra * c + i];
                          t.accumulate(t.parent_of(self, 0), std::move(ga));
                          t.accumulate(t.parent_of(self, 1), std::move(gb));
                        });
  }
  throw std::invalid_argument("autodiff: concat: unsupported axis " + std::to_string(axis));
}

Var slice(Var x, int axis, std::size_t start, std::size_t len) {
  const Tensor& xv = x.value();
  if (xv.rank() == 1) {
    if (axis != 0 || start + len > xv.size()) {
      throw std::invalid_argument("autodiff: slice: range [" + std::to_string(start) + "," +
                                  std::to_string(start + len) + ") outside " +
                                  shape_str(xv.shape()));
    }
    Tensor out({len});
    for (std::size_t i = 0; i < len; ++i) out[i] = xv[start + i];
    Shape xshape = xv.shape();
    return x.tape->emit(std::move(out), {x.id},
                        [xshape, start, len](Tape& t, int self, const Tensor& g) {
                          Tensor gx(xshape);
                          for (std::size_t i = 0; i < len; ++i) gx[start + i] = g[i];
                          t.accumulate(t.parent_of(self, 0), std::move(gx));
                        });
  }
  if (xv.rank() != 2 || (axis != 0 && axis != 1)) {
    throw std::invalid_argument("autodiff: slice: rank " + std::to_string(xv.rank()) + " axis " +
                                std::to_string(axis) + " unsupported");
  }
  const std::size_t n = xv.rows(), m = xv.cols();
  const std::size_t extent = (axis == 0) ? n : m;
  if (start + len > extent) {
    throw std::invalid_argument("autodiff: slice: range [" + std::to_string(start) + "," +
                                std::to_string(start + len) + ") outside " +
                                shape_str(xv.shape()));
  }
  Shape oshape = (axis == 0) ? Shape{len, m} : Shape{n, len};
  Tensor out(oshape);
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j)
      out.at(i, j) = (axis == 0) ? xv.at(start + i, j) : xv.at(i, start + j);
  return x.tape->emit(std::move(out), {x.id},
                      [n, m, axis, start](Tape& t, int self, const Tensor& g) {
                        Tensor gx({n, m});
                        for (std::size_t i = 0; i < g.rows(); ++i)
                          for (std::size_t j = 0; j < g.cols(); ++j) {
                            if (axis == 0)
                              gx.at(start + i, j) = g.at(i, j);
                            else
                              gx.at(i, start + j) = g.at(i, j);
                          }
                        t.accumulate(t.parent_of(self, 0), std::move(gx));
                      });
}

namespace {
Var reduce_all(Var x, bool take_mean) {
  const Tensor& xv = x.value();
  double total = 0.0;
  for (std::size_t i = 0; i < xv.size(); ++i) total += xv[i];
  const double denom = take_mean ? static_cast<double>(std::max<std::size_t>(1, xv.size())) : 1.0;
  return x.tape->emit(Tensor::scalar(total / denom), {x.id},
                      [denom](Tape& t, int self, const Tensor& g) {
                        const int xid = t.parent_of(self, 0);
                        t.accumulate(xid, Tensor::full(t.value_of(xid).shape(), g.item() / denom));
                      });
}
}  // namespace

Var sum(Var x) { return reduce_all(x, false); }
Var mean(Var x) { return reduce_all(x, true); }

namespace {
// Elementwise with derivative expressed through the op's own output.
template <typename F, typename DF>
Var unary(Var x, F f, DF df_from_y) {
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xv[i]);
  return x.tape->emit(std::move(out), {x.id},
                      [df_from_y](Tape& t, int self, const Tensor& g) {
                        const Tensor& yv = t.value_of(self);
                        Tensor gx(g.shape());
                        for (std::size_t i = 0; i < g.size(); ++i) gx[i] = g[i] * df_from_y(yv[i]);
                        t.accumulate(t.parent_of(self, 0), std::move(gx));
                      });
}
}  // namespace

Var sigmoid(Var x) {
  return unary(
      x,
      [](double v) {
        return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
      },
      [](double y) { return y * (1.0 - y); });
}

Var tanh(Var x) {
  return unary(x, [](double v) { return std::tanh(v); }, [](double y) { return 1.0 - y * y; });
}

Var exp(Var x) {
  return unary(x, [](double v) { return std::exp(v); }, [](double y) { return y; });
}

Var log(Var x) {
  const Tensor& xv = x.value();
  for (std::size_t i = 0; i < xv.size(); ++i) {
    if (xv[i] <= 0.0) {
      throw std::domain_error("autodiff: log of nonpositive value " + std::to_string(xv[i]));
    }
  }
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(xv[i]);
  return x.tape->emit(std::move(out), {x.id},
                      [](Tape& t, int self, const Tensor& g) {
                        const int xid = t.parent_of(self, 0);
                        const Tensor& xv = t.value_of(xid);
                        Tensor gx(g.shape());
                        for (std::size_t i = 0; i < g.size(); ++i) gx[i] = g[i] / xv[i];
                        t.accumulate(xid, std::move(gx));
                      });
}

Var log_softmax(Var x, int axis) {
  const Tensor& xv = x.value();
  const bool rank1 = xv.rank() == 1;
  if (!rank1 && xv.rank() != 2) {
    throw std::invalid_argument("autodiff: log_softmax: rank " + std::to_string(xv.rank()));
  }
  if ((rank1 && axis != 0) || (!rank1 && axis != 1)) {
    throw std::invalid_argument("autodiff: log_softmax: axis " + std::to_string(axis) +
                                " on shape " + shape_str(xv.shape()));
  }
  const std::size_t n = rank1 ? 1 : xv.rows();
  const std::size_t m = rank1 ? xv.size() : xv.cols();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < n; ++i) {
    double mx = -1e300;
    for (std::size_t j = 0; j < m; ++j) mx = std::max(mx, xv[i * m + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < m; ++j) z += std::exp(xv[i * m + j] - mx);
    const double lz = mx + std::log(z);
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] = xv[i * m + j] - lz;
  }
  return x.tape->emit(std::move(out), {x.id},
                      [n, m](Tape& t, int self, const Tensor& g) {
                        // dx = g - softmax(x) * rowsum(g)
                        const Tensor& yv = t.value_of(self);
                        Tensor gx(g.shape());
                        for (std::size_t i = 0; i < n; ++i) {
                          double gs = 0.0;
                          for (std::size_t j = 0; j < m; ++j) gs += g[i * m + j];
                          for (std::size_t j = 0; j < m; ++j)
                            gx[i * m + j] = g[i * m + j] - std::exp(yv[i * m + j]) * gs;
                        }
                        t.accumulate(t.parent_of(self, 0), std::move(gx));
                      });
}

Var embedding_gather(Var table, const std::vector<int>& ids) {
  const Tensor& tv = table.value();
  if (tv.rank() != 2) {
    throw std::invalid_argument("autodiff: embedding_gather: table must be rank-2, got " +
                                shape_str(tv.shape()));
  }
  const std::size_t v = tv.rows(), e = tv.cols(), n = ids.size();
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= v) {
      throw std::invalid_argument("autodiff: embedding_gather: id " + std::to_string(id) +
                                  " outside table of " + std::to_string(v) + " rows");
    }
  }
  Tensor out({n, e});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < e; ++j) out.at(i, j) = tv.at(static_cast<std::size_t>(ids[i]), j);
  return table.tape->emit(std::move(out), {table.id},
                          [ids, v, e](Tape& t, int self, const Tensor& g) {
                            Tensor gt({v, e});
                            for (std::size_t i = 0; i < ids.size(); ++i)
                              for (std::size_t j = 0; j < e; ++j)
                                gt.at(static_cast<std::size_t>(ids[i]), j) += g.at(i, j);
                            t.accumulate(t.parent_of(self, 0), std::move(gt));
                          });
}

Var pick(Var x, const std::vector<int>& col_ids) {
  const Tensor& xv = x.value();
  if (xv.rank() != 2 || xv.rows() != col_ids.size()) {
    throw std::invalid_argument("autodiff: pick: shape " + shape_str(xv.shape()) + " with " +
                                std::to_string(col_ids.size()) + " row indices");
  }
  const std::size_t n = xv.rows(), m = xv.cols();
  for (int c : col_ids) {
    if (c < 0 || static_cast<std::size_t>(c) >= m) {
      throw std::invalid_argument("autodiff: pick: column " + std::to_string(c) + " outside " +
                                  shape_str(xv.shape()));
    }
  }
  Tensor out({n, 1});
  for (std::size_t i = 0; i < n; ++i) out[i] = xv.at(i, static_cast<std::size_t>(col_ids[i]));
  return x.tape->emit(std::move(out), {x.id},
                      [col_ids, n, m](Tape& t, int self, const Tensor& g) {
                        Tensor gx({n, m});
                        for (std::size_t i = 0; i < n; ++i)
                          gx.at(i, static_cast<std::size_t>(col_ids[i])) = g[i];
                        t.accumulate(t.parent_of(self, 0), std::move(gx));
                      });
}

Var broadcast(Var x, const Shape& target) {
  const Tensor& xv = x.value();
  if (xv.shape() == target) return x;
  Tensor out(target);
  Shape xshape = xv.shape();
  if (xv.size() == 1) {
    const double v = xv[0];
    for (auto& o : out.data()) o = v;
    return x.tape->emit(std::move(out), {x.id},
                        [xshape](Tape& t, int self, const Tensor& g) {
                          double s = 0.0;
                          for (std::size_t i = 0; i < g.size(); ++i) s += g[i];
                          Tensor gx(xshape);
                          gx[0] = s;
                          t.accumulate(t.parent_of(self, 0), std::move(gx));
                        });
  }
  if (target.size() != 2) {
    throw std::invalid_argument("autodiff: broadcast: " + shape_str(xv.shape()) + " -> " +
                                shape_str(target) + " unsupported");
  }
  const std::size_t n = target[0], m = target[1];
  const bool col = xv.rank() == 2 && xv.rows() == n && xv.cols() == 1;    // (n,1) -> (n,m)
  const bool row = (xv.rank() == 1 && xv.size() == m) ||
                   (xv.rank() == 2 && xv.rows() == 1 && xv.cols() == m);  // (m)/(1,m) -> (n,m)
  if (!col && !row) {
    throw std::invalid_argument("autodiff: broadcast: " + shape_str(xv.shape()) + " -> " +
                                shape_str(target) + " unsupported");
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out.at(i, j) = col ? xv[i] : xv[j];
  return x.tape->emit(std::move(out), {x.id},
                      [xshape, n, m, col](Tape& t, int self, const Tensor& g) {
                        Tensor gx(xshape);
                        for (std::size_t i = 0; i < n; ++i)
                          for (std::size_t j = 0; j < m; ++j) gx[col ? i : j] += g.at(i, j);
                        t.accumulate(t.parent_of(self, 0), std::move(gx));
                      });
}

Var scale(Var x, double c) {
  return mul(x, broadcast(x.tape->constant_scalar(c), x.value().shape()));
}

Var affine(Var x, Var w, Var b) {
  Var xw = matmul(x, w);
  return add(xw, broadcast(b, xw.value().shape()));
}

Var row_sum(Var x) {
  const Tensor& xv = x.value();
  if (xv.rank() != 2) {
    throw std::invalid_argument("autodiff: row_sum: need rank-2, got " + shape_str(xv.shape()));
  }
  return matmul(x, x.tape->constant(Tensor::ones({xv.cols(), 1})));
}

Var detach(Var x) { return x.tape->constant(x.value()); }

}  // namespace ssvae
