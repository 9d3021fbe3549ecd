#pragma once

// Dense tensors with define-by-run reverse-mode differentiation.
//
// A Tensor is a shared handle to a graph node: copying a Tensor aliases the
// same storage, exactly like a framework variable. Every op whose inputs
// include a requires_grad tensor records its inputs and a backward rule in
// the result node, so the graph reachable from a scalar loss is the
// computation record for that forward pass. Nothing is global: two threads
// can build and differentiate disjoint graphs concurrently.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "arn/errors.hpp"

namespace arn {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

namespace detail {

template <std::floating_point T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;  // reads grad, accumulates into inputs

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
  }
  bool is_leaf() const { return !backward; }
};

}  // namespace detail

template <std::floating_point T>
class Tensor {
 public:
  using value_type = T;
  using NodePtr = std::shared_ptr<detail::Node<T>>;

  // Rank-0 zero.
  Tensor() : Tensor(Shape{}, std::vector<T>{T(0)}) {}

  Tensor(Shape shape, std::vector<T> values, bool requires_grad = false)
      : node_(std::make_shared<detail::Node<T>>()) {
    for (std::size_t e : shape) {
      if (e == 0) throw ShapeError("Tensor: zero extent in shape " + to_string(shape));
    }
    if (numel(shape) != values.size()) {
      throw ShapeError("Tensor: shape " + to_string(shape) + " needs " +
                       std::to_string(numel(shape)) + " values, got " +
                       std::to_string(values.size()));
    }
    node_->shape = std::move(shape);
    node_->value = std::move(values);
    node_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const std::size_t n = numel(shape);
    return Tensor(std::move(shape), std::vector<T>(n, T(0)), requires_grad);
  }
  static Tensor full(Shape shape, T v) {
    const std::size_t n = numel(shape);
    return Tensor(std::move(shape), std::vector<T>(n, v));
  }
  static Tensor scalar(T v, bool requires_grad = false) {
    return Tensor(Shape{}, std::vector<T>{v}, requires_grad);
  }
  static Tensor vector(std::vector<T> v, bool requires_grad = false) {
    const std::size_t n = v.size();
    return Tensor(Shape{n}, std::move(v), requires_grad);
  }

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->value.size(); }
  std::size_t rows() const { return rank() == 2 ? shape()[0] : 1; }
  std::size_t cols() const { return rank() == 0 ? 1 : shape().back(); }

  std::span<const T> data() const { return node_->value; }
  // Direct storage access for optimizers and checkpoint loading. Mutating
  // values that an existing graph already consumed invalidates that graph.
  std::span<T> mutable_data() { return node_->value; }

  T item() const {
    if (size() != 1) throw RankError("Tensor::item on shape " + to_string(shape()));
    return node_->value[0];
  }
  T operator[](std::size_t i) const { return node_->value[i]; }
  T at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  void zero_grad() { node_->grad.clear(); }

  // Same values, no history, no gradient.
  Tensor detach() const { return Tensor(shape(), node_->value, false); }
  // Independent leaf with copied values and the same requires_grad flag.
  Tensor clone() const { return Tensor(shape(), node_->value, requires_grad()); }

  bool same_node(const Tensor& other) const { return node_ == other.node_; }
  const NodePtr& node() const { return node_; }

  // Builds an op result; records history only if some input needs gradients.
  static Tensor make(Shape shape, std::vector<T> values, std::vector<Tensor> inputs,
                     std::function<void(detail::Node<T>&)> backward) {
    Tensor out(std::move(shape), std::move(values));
    bool any = false;
    for (const auto& in : inputs) any = any || in.requires_grad();
    if (any) {
      out.node_->requires_grad = true;
      out.node_->inputs.reserve(inputs.size());
      for (auto& in : inputs) out.node_->inputs.push_back(in.node_);
      out.node_->backward = std::move(backward);
    }
    return out;
  }

 private:
  NodePtr node_;
};

namespace detail {

template <class T>
inline void accumulate(Node<T>& self, std::size_t input, auto&& fn) {
  auto& in = *self.inputs[input];
  if (!in.requires_grad) return;
  in.ensure_grad();
  fn(in.grad);
}

template <class T>
inline void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
}

template <class T>
inline void require_rank(const Tensor<T>& a, std::size_t r, const char* op) {
  if (a.rank() != r) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(r) + ", got " +
                     to_string(a.shape()));
  }
}

template <class T, class F, class G>
Tensor<T> unary(const Tensor<T>& a, F forward, G derivative_from_in_out) {
  std::vector<T> out(a.size());
  auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = forward(x[i]);
  return Tensor<T>::make(a.shape(), std::move(out), {a}, [derivative_from_in_out](Node<T>& self) {
    const auto& xin = self.inputs[0]->value;
    accumulate(self, 0, [&](std::vector<T>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        g[i] += self.grad[i] * derivative_from_in_out(xin[i], self.value[i]);
      }
    });
  });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return Tensor<T>::make(a.shape(), std::move(out), {a, b}, [](detail::Node<T>& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      detail::accumulate(self, k, [&](std::vector<T>& g) {
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
      });
    }
  });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "sub");
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return Tensor<T>::make(a.shape(), std::move(out), {a, b}, [](detail::Node<T>& self) {
    detail::accumulate(self, 0, [&](std::vector<T>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
    detail::accumulate(self, 1, [&](std::vector<T>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    });
  });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "mul");
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return Tensor<T>::make(a.shape(), std::move(out), {a, b}, [](detail::Node<T>& self) {
    const auto& av = self.inputs[0]->value;
    const auto& bv = self.inputs[1]->value;
    detail::accumulate(self, 0, [&](std::vector<T>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bv[i];
    });
    detail::accumulate(self, 1, [&](std::vector<T>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * av[i];
    });
  });
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T c) {
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * c;
  return Tensor<T>::make(a.shape(), std::move(out), {a}, [c](detail::Node<T>& self) {
    detail::accumulate(self, 0, [&](std::vector<T>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * c;
    });
  });
}

template <class T>
Tensor<T> neg(const Tensor<T>& a) {
  return scale(a, T(-1));
}

template <class T>
Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return add(a, b); }
template <class T>
Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return sub(a, b); }
template <class T>
Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return mul(a, b); }
template <class T>
Tensor<T> operator-(const Tensor<T>& a) { return neg(a); }

// ---------------------------------------------------------------------------
// Linear algebra and layout

// [m x k] * [k x n] -> [m x n]
template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_rank(a, 2, "matmul");
  detail::require_rank(b, 2, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw ShapeError("matmul: inner dimensions differ " + to_string(a.shape()) + " x " +
                     to_string(b.shape()));
  }
  std::vector<T> out(m * n, T(0));
  auto av = a.data();
  auto bv = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    T* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T s = av[i * k + p];
      const T* brow = bv.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += s * brow[j];
    }
  }
  return Tensor<T>::make(Shape{m, n}, std::move(out), {a, b}, [m, k, n](detail::Node<T>& self) {
    const auto& av = self.inputs[0]->value;
    const auto& bv = self.inputs[1]->value;
    const auto& go = self.grad;
    // dA = dC * B^T
    detail::accumulate(self, 0, [&](std::vector<T>& g) {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          T s = T(0);
          for (std::size_t j = 0; j < n; ++j) s += go[i * n + j] * bv[p * n + j];
          g[i * k + p] += s;
        }
      }
    });
    // dB = A^T * dC
    detail::accumulate(self, 1, [&](std::vector<T>& g) {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const T s = av[i * k + p];
          for (std::size_t j = 0; j < n; ++j) g[p * n + j] += s * go[i * n + j];
        }
      }
    });
  });
}

// Concatenation along the last axis; leading extents must agree.
template <class T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts[0].shape();
  if (first.empty()) throw ShapeError("concat: rank-0 input");
  const Shape lead(first.begin(), first.end() - 1);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size() || !std::equal(lead.begin(), lead.end(), s.begin())) {
      throw ShapeError("concat: leading extents differ " + to_string(first) + " vs " +
                       to_string(s));
    }
    widths.push_back(s.back());
    total += s.back();
  }
  const std::size_t outer = numel(lead);
  std::vector<T> out(outer * total);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto v = parts[k].data();
    for (std::size_t r = 0; r < outer; ++r) {
      std::copy_n(v.data() + r * widths[k], widths[k], out.data() + r * total + offset);
    }
    offset += widths[k];
  }
  Shape shape = lead;
  shape.push_back(total);
  return Tensor<T>::make(shape, std::move(out), parts,
                         [widths, total, outer](detail::Node<T>& self) {
                           std::size_t off = 0;
                           for (std::size_t k = 0; k < widths.size(); ++k) {
                             detail::accumulate(self, k, [&](std::vector<T>& g) {
                               for (std::size_t r = 0; r < outer; ++r) {
                                 for (std::size_t j = 0; j < widths[k]; ++j) {
                                   g[r * widths[k] + j] += self.grad[r * total + off + j];
                                 }
                               }
                             });
                             off += widths[k];
                           }
                         });
}

// Columns [begin, end) of the last axis.
template <class T>
Tensor<T> slice(const Tensor<T>& a, std::size_t begin, std::size_t end) {
  if (a.rank() == 0) throw ShapeError("slice: rank-0 input");
  const std::size_t width = a.shape().back();
  if (begin >= end || end > width) {
    throw ShapeError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") outside width " + std::to_string(width));
  }
  const std::size_t outer = a.size() / width;
  const std::size_t w = end - begin;
  std::vector<T> out(outer * w);
  auto v = a.data();
  for (std::size_t r = 0; r < outer; ++r) {
    std::copy_n(v.data() + r * width + begin, w, out.data() + r * w);
  }
  Shape shape = a.shape();
  shape.back() = w;
  return Tensor<T>::make(shape, std::move(out), {a}, [=](detail::Node<T>& self) {
    detail::accumulate(self, 0, [&](std::vector<T>& g) {
      for (std::size_t r = 0; r < outer; ++r) {
        for (std::size_t j = 0; j < w; ++j) g[r * width + begin + j] += self.grad[r * w + j];
      }
    });
  });
}

// ---------------------------------------------------------------------------
// Reductions

template <class T>
Tensor<T> sum(const Tensor<T>& a) {
  T s = T(0);
  for (T x : a.data()) s += x;
  return Tensor<T>::make(Shape{}, {s}, {a}, [](detail::Node<T>& self) {
    detail::accumulate(self, 0, [&](std::vector<T>& g) {
      for (auto& x : g) x += self.grad[0];
    });
  });
}

template <class T>
Tensor<T> mean(const Tensor<T>& a) {
  return scale(sum(a), T(1) / static_cast<T>(a.size()));
}

// Sum over the last axis: [n x m] -> [n].
template <class T>
Tensor<T> sum_rows(const Tensor<T>& a) {
  detail::require_rank(a, 2, "sum_rows");
  const std::size_t n = a.shape()[0], m = a.shape()[1];
  std::vector<T> out(n, T(0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) out[i] += a[i * m + j];
  }
  return Tensor<T>::make(Shape{n}, std::move(out), {a}, [n, m](detail::Node<T>& self) {
    detail::accumulate(self, 0, [&](std::vector<T>& g) {
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) g[i * m + j] += self.grad[i];
      }
    });
  });
}

// ---------------------------------------------------------------------------
// Pointwise nonlinearities

template <class T>
Tensor<T> exp(const Tensor<T>& a) {
  return detail::unary(
      a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <class T>
Tensor<T> log(const Tensor<T>& a) {
  for (T x : a.data()) {
    if (!(x > T(0))) throw DomainError("log: non-positive input " + std::to_string(x));
  }
  return detail::unary(
      a, [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
}

template <class T>
Tensor<T> tanh(const Tensor<T>& a) {
  return detail::unary(
      a, [](T x) { return std::tanh(x); }, [](T, T y) { return T(1) - y * y; });
}

template <class T>
T sigmoid_value(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  return detail::unary(
      a, [](T x) { return sigmoid_value(x); }, [](T, T y) { return y * (T(1) - y); });
}

// ---------------------------------------------------------------------------
// Normalizers over the last axis (max-shifted before exponentiation)

template <class T>
Tensor<T> softmax(const Tensor<T>& a) {
  if (a.rank() == 0) throw ShapeError("softmax: rank-0 input");
  const std::size_t m = a.shape().back();
  const std::size_t n = a.size() / m;
  std::vector<T> out(a.size());
  auto v = a.data();
  for (std::size_t r = 0; r < n; ++r) {
    const T* x = v.data() + r * m;
    T* y = out.data() + r * m;
    const T mx = *std::max_element(x, x + m);
    T z = T(0);
    for (std::size_t j = 0; j < m; ++j) z += (y[j] = std::exp(x[j] - mx));
    for (std::size_t j = 0; j < m; ++j) y[j] /= z;
  }
  return Tensor<T>::make(a.shape(), std::move(out), {a}, [n, m](detail::Node<T>& self) {
    detail::accumulate(self, 0, [&](std::vector<T>& g) {
      for (std::size_t r = 0; r < n; ++r) {
        const T* y = self.value.data() + r * m;
        const T* gy = self.grad.data() + r * m;
        T dot = T(0);
        for (std::size_t j = 0; j < m; ++j) dot += gy[j] * y[j];
        for (std::size_t j = 0; j < m; ++j) g[r * m + j] += y[j] * (gy[j] - dot);
      }
    });
  });
}

template <class T>
Tensor<T> log_softmax(const Tensor<T>& a) {
  if (a.rank() == 0) throw ShapeError("log_softmax: rank-0 input");
  const std::size_t m = a.shape().back();
  const std::size_t n = a.size() / m;
  std::vector<T> out(a.size());
  auto v = a.data();
  for (std::size_t r = 0; r < n; ++r) {
    const T* x = v.data() + r * m;
    const T mx = *std::max_element(x, x + m);
    T z = T(0);
    for (std::size_t j = 0; j < m; ++j) z += std::exp(x[j] - mx);
    const T lse = mx + std::log(z);
    for (std::size_t j = 0; j < m; ++j) out[r * m + j] = x[j] - lse;
  }
  return Tensor<T>::make(a.shape(), std::move(out), {a}, [n, m](detail::Node<T>& self) {
    detail::accumulate(self, 0, [&](std::vector<T>& g) {
      for (std::size_t r = 0; r < n; ++r) {
        const T* ly = self.value.data() + r * m;
        const T* gy = self.grad.data() + r * m;
        T gsum = T(0);
        for (std::size_t j = 0; j < m; ++j) gsum += gy[j];
        for (std::size_t j = 0; j < m; ++j) g[r * m + j] += gy[j] - std::exp(ly[j]) * gsum;
      }
    });
  });
}

// ---------------------------------------------------------------------------
// Indexing

// Rows of a [V x d] table: ids -> [n x d].
template <class T>
Tensor<T> gather_rows(const Tensor<T>& table, std::span<const std::size_t> ids) {
  detail::require_rank(table, 2, "gather_rows");
  const std::size_t rows = table.shape()[0], d = table.shape()[1];
  if (ids.empty()) throw ShapeError("gather_rows: no ids");
  std::vector<T> out(ids.size() * d);
  auto v = table.data();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= rows) {
      throw ShapeError("gather_rows: id " + std::to_string(ids[i]) + " outside " +
                       std::to_string(rows) + " rows");
    }
    std::copy_n(v.data() + ids[i] * d, d, out.data() + i * d);
  }
  std::vector<std::size_t> idx(ids.begin(), ids.end());
  return Tensor<T>::make(Shape{ids.size(), d}, std::move(out), {table},
                         [idx = std::move(idx), d](detail::Node<T>& self) {
                           detail::accumulate(self, 0, [&](std::vector<T>& g) {
                             for (std::size_t i = 0; i < idx.size(); ++i) {
                               for (std::size_t j = 0; j < d; ++j) {
                                 g[idx[i] * d + j] += self.grad[i * d + j];
                               }
                             }
                           });
                         });
}

// One entry per row: out[i] = x[i, cols[i]].
template <class T>
Tensor<T> pick(const Tensor<T>& x, std::span<const std::size_t> cols) {
  detail::require_rank(x, 2, "pick");
  const std::size_t n = x.shape()[0], m = x.shape()[1];
  if (cols.size() != n) throw ShapeError("pick: need one column per row");
  std::vector<T> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (cols[i] >= m) throw ShapeError("pick: column out of range");
    out[i] = x.at(i, cols[i]);
  }
  std::vector<std::size_t> idx(cols.begin(), cols.end());
  return Tensor<T>::make(Shape{n}, std::move(out), {x},
                         [idx = std::move(idx), m](detail::Node<T>& self) {
                           detail::accumulate(self, 0, [&](std::vector<T>& g) {
                             for (std::size_t i = 0; i < idx.size(); ++i) {
                               g[i * m + idx[i]] += self.grad[i];
                             }
                           });
                         });
}

// [n x d] + bias[d], broadcast over rows.
template <class T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias) {
  detail::require_rank(x, 2, "add_bias");
  detail::require_rank(bias, 1, "add_bias");
  const std::size_t n = x.shape()[0], d = x.shape()[1];
  if (bias.size() != d) {
    throw ShapeError("add_bias: bias " + to_string(bias.shape()) + " vs rows of width " +
                     std::to_string(d));
  }
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = x[i * d + j] + bias[j];
  }
  return Tensor<T>::make(x.shape(), std::move(out), {x, bias}, [n, d](detail::Node<T>& self) {
    detail::accumulate(self, 0, [&](std::vector<T>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
    detail::accumulate(self, 1, [&](std::vector<T>& g) {
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) g[j] += self.grad[i * d + j];
      }
    });
  });
}

// Forward value is `hard`; gradient passes to `soft` unchanged.
template <class T>
Tensor<T> straight_through(const Tensor<T>& soft, const Tensor<T>& hard) {
  detail::require_same_shape(soft, hard, "straight_through");
  std::vector<T> out(hard.data().begin(), hard.data().end());
  return Tensor<T>::make(soft.shape(), std::move(out), {soft}, [](detail::Node<T>& self) {
    detail::accumulate(self, 0, [&](std::vector<T>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
  });
}

template <class T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (numel(shape) != a.size()) {
    throw ShapeError("reshape: " + to_string(a.shape()) + " -> " + to_string(shape));
  }
  std::vector<T> out(a.data().begin(), a.data().end());
  return Tensor<T>::make(std::move(shape), std::move(out), {a}, [](detail::Node<T>& self) {
    detail::accumulate(self, 0, [&](std::vector<T>& g) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
  });
}

// ---------------------------------------------------------------------------
// Reverse pass

// Populates grad on every requires_grad ancestor of a scalar root. Leaf
// gradients accumulate across calls; interior gradients are recomputed.
template <class T>
void backward(const Tensor<T>& root) {
  if (root.size() != 1) throw RankError("backward: root must be scalar, got " + to_string(root.shape()));
  if (!root.requires_grad()) return;

  using NodeT = detail::Node<T>;
  // Iterative post-order DFS; the order depends only on graph structure.
  std::vector<NodeT*> order;
  std::unordered_set<NodeT*> seen;
  std::vector<std::pair<NodeT*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      NodeT* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  for (NodeT* n : order) {
    if (!n->is_leaf()) n->grad.assign(n->value.size(), T(0));
  }
  root.node()->ensure_grad();
  root.node()->grad[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if (!(*it)->is_leaf()) (*it)->backward(**it);
  }
}

}  // namespace arn
