#pragma once

// Reverse-mode automatic differentiation over dense row-major tensors.
//
// A Tape owns every node created while building one computation. Nodes are
// appended in evaluation order, so reverse creation order is a valid
// topological order for the backward sweep. Values are cheap handles into a
// tape; they are only valid while the tape lives.

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstddef>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "agni/error.hpp"

namespace agni::ag {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "," : "") + std::to_string(shape[i]);
  return s + "]";
}

// Tensor storage. Eigen picks its vectorized loop split from the buffer
// address, so over-aligned storage keeps floating-point results independent
// of where the allocator happens to place each buffer.
template <class S>
using Buffer = std::vector<S, Eigen::aligned_allocator<S>>;

template <class S>
struct Tensor {
  Shape shape;
  Buffer<S> data;

  Tensor() = default;
  explicit Tensor(Shape s, S fill = S{0}) : shape(std::move(s)), data(numel(shape), fill) {}
  Tensor(Shape s, Buffer<S> values) : shape(std::move(s)), data(std::move(values)) {
    if (data.size() != numel(shape)) {
      throw ShapeError("Tensor: " + std::to_string(data.size()) + " values for shape " + shape_str(shape));
    }
  }  template <class A>
  Tensor(Shape s, const std::vector<S, A>& values) : Tensor(std::move(s), Buffer<S>(values.begin(), values.end())) {}

  std::size_t size() const { return data.size(); }
  bool operator==(const Tensor&) const = default;
};

template <class S>
class Tape;

template <class S>
class Value {
 public:
  Value() = default;
  Value(Tape<S>* tape, int id) : tape_(tape), id_(id) {}

  Tape<S>& tape() const { return *tape_; }
  int id() const { return id_; }
  const Shape& shape() const { return tape_->shape(id_); }
  std::size_t size() const { return numel(shape()); }
  std::span<const S> data() const { return tape_->data(id_); }
  S item() const { return data()[0]; }
  bool requires_grad() const { return tape_->requires_grad(id_); }

 private:
  Tape<S>* tape_ = nullptr;
  int id_ = -1;
};

template <class S>
class Tape {
 public:
  using Backward = std::function<void()>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Value<S> constant(Tensor<S> t) { return push(std::move(t.shape), std::move(t.data), false); }
  Value<S> constant(Shape shape, Buffer<S> data) { return constant(Tensor<S>(std::move(shape), std::move(data))); }
  template <class A>
  Value<S> constant(Shape shape, const std::vector<S, A>& data) { return constant(Tensor<S>(std::move(shape), data)); }
  Value<S> scalar(S v) { return push({}, {v}, false); }

  // Leaf owning its data; its gradient is read back with gradient().
  Value<S> leaf(Tensor<S> t, bool requires_grad = true) {
    return push(std::move(t.shape), std::move(t.data), requires_grad);
  }

  // Leaf viewing external storage; gradients accumulate into `grad`, which
  // must have the same shape. Both must outlive the tape.
  Value<S> parameter(const Tensor<S>& value, Tensor<S>& grad) {
    if (grad.size() != value.size()) throw ShapeError("Tape::parameter: gradient buffer shape mismatch");
    Node n;
    n.shape = value.shape;
    n.external = value.data.data();
    n.external_grad = grad.data.data();
    n.requires_grad = true;
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size()) - 1};
  }

  // Records an op result. `backward` runs once the result's gradient is final.
  Value<S> record(Shape shape, Buffer<S> data, std::initializer_list<Value<S>> parents, Backward backward) {
    bool needs = false;
    for (const auto& p : parents) needs = needs || requires_grad(p.id());
    Value<S> v = push(std::move(shape), std::move(data), needs);
    if (needs) nodes_.back().backward = std::move(backward);
    return v;
  }
  Value<S> record(Shape shape, Buffer<S> data, const std::vector<Value<S>>& parents, Backward backward) {
    bool needs = false;
    for (const auto& p : parents) needs = needs || requires_grad(p.id());
    Value<S> v = push(std::move(shape), std::move(data), needs);
    if (needs) nodes_.back().backward = std::move(backward);
    return v;
  }

  const Shape& shape(int id) const { return nodes_[id].shape; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  std::span<const S> data(int id) const {
    const Node& n = nodes_[id];
    return n.external ? std::span<const S>(n.external, numel(n.shape)) : std::span<const S>(n.value);
  }

  // Gradient accumulator for a node, allocated on first use.
  std::span<S> grad(int id) {
    Node& n = nodes_[id];
    if (n.external_grad) return {n.external_grad, numel(n.shape)};
    if (n.grad.empty()) n.grad.assign(numel(n.shape), S{0});
    return n.grad;
  }
  bool has_grad(int id) const { return nodes_[id].external_grad || !nodes_[id].grad.empty(); }

  // Reverse sweep from a scalar root.
  void backward(const Value<S>& root) {
    if (root.size() != 1) {
      throw ContractError("backward: root must be a scalar, got shape " + shape_str(root.shape()));
    }
    if (!requires_grad(root.id())) return;
    grad(root.id())[0] += S{1};
    for (int id = root.id(); id >= 0; --id) {
      Node& n = nodes_[id];
      if (n.backward && !n.grad.empty()) n.backward();
    }
  }

  // Copy of a node's gradient; zeros when the node was not reached.
  Tensor<S> gradient(const Value<S>& v) const {
    const Node& n = nodes_[v.id()];
    Tensor<S> t(n.shape);
    if (n.external_grad) {
      std::copy_n(n.external_grad, t.size(), t.data.begin());
    } else if (!n.grad.empty()) {
      t.data = n.grad;
    }
    return t;
  }

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Shape shape;
    Buffer<S> value;
    const S* external = nullptr;
    Buffer<S> grad;
    S* external_grad = nullptr;
    bool requires_grad = false;
    Backward backward;
  };

  Value<S> push(Shape shape, Buffer<S> data, bool requires_grad) {
    if (data.size() != numel(shape)) throw ShapeError("Tape: data size does not match shape " + shape_str(shape));
    Node n;
    n.shape = std::move(shape);
    n.value = std::move(data);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return {this, static_cast<int>(nodes_.size()) - 1};
  }

  std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Elementwise ops

namespace detail {

template <class S>
void require_same_shape(const char* op, const Value<S>& a, const Value<S>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

template <class S>
using RowMatrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class S>
using ConstMap = Eigen::Map<const RowMatrix<S>>;
template <class S>
using MutMap = Eigen::Map<RowMatrix<S>>;

// Rows/cols of a rank-1 (treated as one row) or rank-2 value.
template <class S>
std::pair<std::size_t, std::size_t> as_matrix(const char* op, const Value<S>& v) {
  const Shape& s = v.shape();
  if (s.size() == 1) return {1, s[0]};
  if (s.size() == 2) return {s[0], s[1]};
  throw ShapeError(std::string(op) + ": expected a vector or matrix, got " + shape_str(s));
}

}  // namespace detail

// Elementwise map with a caller-supplied derivative df(x, f(x)).
template <class S, class F, class DF>
Value<S> map(const Value<S>& a, F f, DF df) {
  Tape<S>& tape = a.tape();
  const auto in = a.data();
  Buffer<S> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  const int ia = a.id();
  const int id = static_cast<int>(tape.node_count());
  return tape.record(a.shape(), std::move(out), {a}, [&tape, ia, id, df] {
    const auto x = tape.data(ia);
    const auto y = tape.data(id);
    const auto gy = tape.grad(id);
    auto gx = tape.grad(ia);
    for (std::size_t i = 0; i < x.size(); ++i) gx[i] += gy[i] * df(x[i], y[i]);
  });
}

template <class S>
Value<S> sigmoid(const Value<S>& a) {
  // Clamped so the output stays strictly inside (0, 1) in finite precision.
  return map(
      a,
      [](S x) {
        const S y = x >= 0 ? S{1} / (S{1} + std::exp(-x)) : std::exp(x) / (S{1} + std::exp(x));
        return std::clamp(y, std::numeric_limits<S>::min(), S{1} - std::numeric_limits<S>::epsilon() / 2);
      },
      [](S, S y) { return y * (S{1} - y); });
}

template <class S>
Value<S> tanh(const Value<S>& a) {
  return map(a, [](S x) { return std::tanh(x); }, [](S, S y) { return S{1} - y * y; });
}

template <class S>
Value<S> relu(const Value<S>& a) {
  return map(a, [](S x) { return x > 0 ? x : S{0}; }, [](S x, S) { return x > 0 ? S{1} : S{0}; });
}

// |x| with subgradient 0 at x = 0.
template <class S>
Value<S> abs(const Value<S>& a) {
  return map(
      a, [](S x) { return std::abs(x); }, [](S x, S) { return x > 0 ? S{1} : (x < 0 ? S{-1} : S{0}); });
}

template <class S>
Value<S> scale(const Value<S>& a, S factor) {
  return map(a, [factor](S x) { return factor * x; }, [factor](S, S) { return factor; });
}

namespace detail {

template <class S, class Op, class DA, class DB>
Value<S> binary(const char* name, const Value<S>& a, const Value<S>& b, Op op, DA da, DB db) {
  require_same_shape(name, a, b);
  Tape<S>& tape = a.tape();
  const auto x = a.data();
  const auto y = b.data();
  Buffer<S> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = op(x[i], y[i]);
  const int ia = a.id(), ib = b.id();
  const int id = static_cast<int>(tape.node_count());
  return tape.record(a.shape(), std::move(out), {a, b}, [&tape, ia, ib, id, da, db] {
    const auto gy = tape.grad(id);
    const auto x = tape.data(ia);
    const auto y = tape.data(ib);
    if (tape.requires_grad(ia)) {
      auto gx = tape.grad(ia);
      for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * da(x[i], y[i]);
    }
    if (tape.requires_grad(ib)) {
      auto gz = tape.grad(ib);
      for (std::size_t i = 0; i < gy.size(); ++i) gz[i] += gy[i] * db(x[i], y[i]);
    }
  });
}

}  // namespace detail

template <class S>
Value<S> add(const Value<S>& a, const Value<S>& b) {
  return detail::binary(
      "add", a, b, [](S x, S y) { return x + y; }, [](S, S) { return S{1}; }, [](S, S) { return S{1}; });
}

template <class S>
Value<S> sub(const Value<S>& a, const Value<S>& b) {
  return detail::binary(
      "sub", a, b, [](S x, S y) { return x - y; }, [](S, S) { return S{1}; }, [](S, S) { return S{-1}; });
}

template <class S>
Value<S> mul(const Value<S>& a, const Value<S>& b) {
  return detail::binary(
      "mul", a, b, [](S x, S y) { return x * y; }, [](S, S y) { return y; }, [](S x, S) { return x; });
}

// Sum of all elements, as a scalar.
template <class S>
Value<S> sum(const Value<S>& a) {
  Tape<S>& tape = a.tape();
  const auto x = a.data();
  S total = std::accumulate(x.begin(), x.end(), S{0});
  const int ia = a.id();
  const int id = static_cast<int>(tape.node_count());
  return tape.record({}, {total}, {a}, [&tape, ia, id] {
    const S g = tape.grad(id)[0];
    for (S& gx : tape.grad(ia)) gx += g;
  });
}

template <class S>
Value<S> reshape(const Value<S>& a, Shape shape) {
  if (numel(shape) != a.size()) {
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  Tape<S>& tape = a.tape();
  const auto x = a.data();
  const int ia = a.id();
  const int id = static_cast<int>(tape.node_count());
  return tape.record(std::move(shape), Buffer<S>(x.begin(), x.end()), {a}, [&tape, ia, id] {
    const auto gy = tape.grad(id);
    auto gx = tape.grad(ia);
    for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
  });
}

// Stacks equally sized values as the rows of a matrix [count, size].
template <class S>
Value<S> stack_rows(const std::vector<Value<S>>& rows) {
  if (rows.empty()) throw ShapeError("stack_rows: no rows");
  Tape<S>& tape = rows.front().tape();
  const std::size_t width = rows.front().size();
  Buffer<S> out;
  out.reserve(rows.size() * width);
  std::vector<int> ids;
  for (const auto& r : rows) {
    if (r.size() != width) throw ShapeError("stack_rows: rows differ in size");
    const auto x = r.data();
    out.insert(out.end(), x.begin(), x.end());
    ids.push_back(r.id());
  }
  const int id = static_cast<int>(tape.node_count());
  return tape.record({rows.size(), width}, std::move(out), rows, [&tape, ids, width, id] {
    const auto gy = tape.grad(id);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!tape.requires_grad(ids[k])) continue;
      auto gx = tape.grad(ids[k]);
      for (std::size_t i = 0; i < width; ++i) gx[i] += gy[k * width + i];
    }
  });
}

// Row `index` of a matrix, as a vector.
template <class S>
Value<S> row(const Value<S>& a, std::size_t index) {
  const auto [rows, cols] = detail::as_matrix("row", a);
  if (index >= rows) throw ShapeError("row: index out of range for " + shape_str(a.shape()));
  Tape<S>& tape = a.tape();
  const auto x = a.data().subspan(index * cols, cols);
  const int ia = a.id();
  const int id = static_cast<int>(tape.node_count());
  return tape.record({cols}, Buffer<S>(x.begin(), x.end()), {a}, [&tape, ia, id, index, cols] {
    const auto gy = tape.grad(id);
    auto gx = tape.grad(ia).subspan(index * cols, cols);
    for (std::size_t i = 0; i < cols; ++i) gx[i] += gy[i];
  });
}

// Elements [begin, end) of a vector.
template <class S>
Value<S> slice(const Value<S>& a, std::size_t begin, std::size_t end) {
  if (a.shape().size() != 1 || begin > end || end > a.size()) {
    throw ShapeError("slice: [" + std::to_string(begin) + "," + std::to_string(end) + ") out of range for " +
                     shape_str(a.shape()));
  }
  Tape<S>& tape = a.tape();
  const auto x = a.data().subspan(begin, end - begin);
  const int ia = a.id();
  const int id = static_cast<int>(tape.node_count());
  return tape.record({end - begin}, Buffer<S>(x.begin(), x.end()), {a}, [&tape, ia, id, begin] {
    const auto gy = tape.grad(id);
    auto gx = tape.grad(ia).subspan(begin, gy.size());
    for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
  });
}

// ---------------------------------------------------------------------------
// Linear algebra

// a [m,k] * b^T where b is [n,k]; a may be a rank-1 row, giving a rank-1 result.
template <class S>
Value<S> matmul_nt(const Value<S>& a, const Value<S>& b) {
  const auto [m, k] = detail::as_matrix("matmul_nt", a);
  if (b.shape().size() != 2 || b.shape()[1] != k) {
    throw ShapeError("matmul_nt: " + shape_str(a.shape()) + " x " + shape_str(b.shape()) + "^T");
  }
  const std::size_t n = b.shape()[0];
  Tape<S>& tape = a.tape();
  Buffer<S> out(m * n);
  detail::MutMap<S>(out.data(), m, n).noalias() =
      detail::ConstMap<S>(a.data().data(), m, k) * detail::ConstMap<S>(b.data().data(), n, k).transpose();
  Shape shape = a.shape().size() == 1 ? Shape{n} : Shape{m, n};
  const int ia = a.id(), ib = b.id();
  const int id = static_cast<int>(tape.node_count());
  return tape.record(std::move(shape), std::move(out), {a, b}, [&tape, ia, ib, id, m, n, k] {
    const detail::ConstMap<S> gy(tape.grad(id).data(), m, n);
    if (tape.requires_grad(ia)) {
      detail::MutMap<S>(tape.grad(ia).data(), m, k).noalias() += gy * detail::ConstMap<S>(tape.data(ib).data(), n, k);
    }
    if (tape.requires_grad(ib)) {
      detail::MutMap<S>(tape.grad(ib).data(), n, k).noalias() +=
          gy.transpose() * detail::ConstMap<S>(tape.data(ia).data(), m, k);
    }
  });
}

// a [m,k] * b [k,n]; a may be a rank-1 row.
template <class S>
Value<S> matmul(const Value<S>& a, const Value<S>& b) {
  const auto [m, k] = detail::as_matrix("matmul", a);
  if (b.shape().size() != 2 || b.shape()[0] != k) {
    throw ShapeError("matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const std::size_t n = b.shape()[1];
  Tape<S>& tape = a.tape();
  Buffer<S> out(m * n);
  detail::MutMap<S>(out.data(), m, n).noalias() =
      detail::ConstMap<S>(a.data().data(), m, k) * detail::ConstMap<S>(b.data().data(), k, n);
  Shape shape = a.shape().size() == 1 ? Shape{n} : Shape{m, n};
  const int ia = a.id(), ib = b.id();
  const int id = static_cast<int>(tape.node_count());
  return tape.record(std::move(shape), std::move(out), {a, b}, [&tape, ia, ib, id, m, n, k] {
    const detail::ConstMap<S> gy(tape.grad(id).data(), m, n);
    if (tape.requires_grad(ia)) {
      detail::MutMap<S>(tape.grad(ia).data(), m, k).noalias() +=
          gy * detail::ConstMap<S>(tape.data(ib).data(), k, n).transpose();
    }
    if (tape.requires_grad(ib)) {
      detail::MutMap<S>(tape.grad(ib).data(), k, n).noalias() +=
          detail::ConstMap<S>(tape.data(ia).data(), m, k).transpose() * gy;
    }
  });
}

// Adds bias [n] to every row of a [m,n] (or to a vector [n]).
template <class S>
Value<S> add_bias(const Value<S>& a, const Value<S>& bias) {
  const auto [m, n] = detail::as_matrix("add_bias", a);
  if (bias.shape() != Shape{n}) {
    throw ShapeError("add_bias: " + shape_str(a.shape()) + " + " + shape_str(bias.shape()));
  }
  Tape<S>& tape = a.tape();
  const auto x = a.data();
  const auto b = bias.data();
  Buffer<S> out(x.begin(), x.end());
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] += b[c];
  }
  const int ia = a.id(), ib = bias.id();
  const int id = static_cast<int>(tape.node_count());
  return tape.record(a.shape(), std::move(out), {a, bias}, [&tape, ia, ib, id, m, n] {
    const auto gy = tape.grad(id);
    if (tape.requires_grad(ia)) {
      auto gx = tape.grad(ia);
      for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
    }
    if (tape.requires_grad(ib)) {
      auto gb = tape.grad(ib);
      for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t c = 0; c < n; ++c) gb[c] += gy[r * n + c];
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Layers

// 3x3 cross-correlation, stride 1, zero padding 1. input [H,W] or [1,H,W],
// kernels [C,1,3,3], bias [C] -> [C,H,W].
template <class S>
Value<S> conv2d(const Value<S>& input, const Value<S>& kernels, const Value<S>& bias) {
  const Shape& is = input.shape();
  std::size_t h = 0, w = 0;
  if (is.size() == 2) {
    h = is[0];
    w = is[1];
  } else if (is.size() == 3 && is[0] == 1) {
    h = is[1];
    w = is[2];
  } else {
    throw ShapeError("conv2d: input must be [H,W] or [1,H,W], got " + shape_str(is));
  }
  const Shape& ks = kernels.shape();
  if (ks.size() != 4 || ks[1] != 1 || ks[2] != 3 || ks[3] != 3) {
    throw ShapeError("conv2d: kernels must be [C,1,3,3], got " + shape_str(ks) + " for input " + shape_str(is));
  }
  const std::size_t channels = ks[0];
  if (bias.shape() != Shape{channels}) {
    throw ShapeError("conv2d: bias " + shape_str(bias.shape()) + " does not match kernels " + shape_str(ks));
  }
  if (h < 3 || w < 3) throw ShapeError("conv2d: input " + shape_str(is) + " smaller than the 3x3 kernel");

  Tape<S>& tape = input.tape();
  const auto x = input.data();
  const auto k = kernels.data();
  const auto b = bias.data();
  const auto ih = static_cast<std::ptrdiff_t>(h), iw = static_cast<std::ptrdiff_t>(w);
  Buffer<S> out(channels * h * w);
  for (std::size_t c = 0; c < channels; ++c) {
    const S* kc = k.data() + c * 9;
    S* oc = out.data() + c * h * w;
    for (std::ptrdiff_t i = 0; i < ih; ++i) {
      for (std::ptrdiff_t j = 0; j < iw; ++j) {
        S acc = b[c];
        for (std::ptrdiff_t di = -1; di <= 1; ++di) {
          const std::ptrdiff_t r = i + di;
          if (r < 0 || r >= ih) continue;
          for (std::ptrdiff_t dj = -1; dj <= 1; ++dj) {
            const std::ptrdiff_t q = j + dj;
            if (q < 0 || q >= iw) continue;
            acc += kc[(di + 1) * 3 + (dj + 1)] * x[r * iw + q];
          }
        }
        oc[i * iw + j] = acc;
      }
    }
  }
  const int ix = input.id(), ik = kernels.id(), ib = bias.id();
  const int id = static_cast<int>(tape.node_count());
  return tape.record({channels, h, w}, std::move(out), {input, kernels, bias},
                     [&tape, ix, ik, ib, id, channels, ih, iw] {
                       const auto gy = tape.grad(id);
                       const auto x = tape.data(ix);
                       const auto k = tape.data(ik);
                       const bool gx_needed = tape.requires_grad(ix);
                       const bool gk_needed = tape.requires_grad(ik);
                       std::span<S> gx = gx_needed ? tape.grad(ix) : std::span<S>{};
                       std::span<S> gk = gk_needed ? tape.grad(ik) : std::span<S>{};
                       if (tape.requires_grad(ib)) {
                         auto gb = tape.grad(ib);
                         for (std::size_t c = 0; c < channels; ++c) {
                           const S* g = gy.data() + c * ih * iw;
                           gb[c] += std::accumulate(g, g + ih * iw, S{0});
                         }
                       }
                       for (std::size_t c = 0; c < channels; ++c) {
                         const S* g = gy.data() + c * ih * iw;
                         const S* kc = k.data() + c * 9;
                         for (std::ptrdiff_t i = 0; i < ih; ++i) {
                           for (std::ptrdiff_t j = 0; j < iw; ++j) {
                             const S gij = g[i * iw + j];
                             if (gij == S{0}) continue;
                             for (std::ptrdiff_t di = -1; di <= 1; ++di) {
                               const std::ptrdiff_t r = i + di;
                               if (r < 0 || r >= ih) continue;
                               for (std::ptrdiff_t dj = -1; dj <= 1; ++dj) {
                                 const std::ptrdiff_t q = j + dj;
                                 if (q < 0 || q >= iw) continue;
                                 const std::ptrdiff_t tap = (di + 1) * 3 + (dj + 1);
                                 if (gk_needed) gk[c * 9 + tap] += gij * x[r * iw + q];
                                 if (gx_needed) gx[r * iw + q] += gij * kc[tap];
                               }
                             }
                           }
                         }
                       }
                     });
}

// Inverted dropout: in training each element is zeroed with probability
// `rate` and survivors are scaled by 1 / (1 - rate); identity otherwise.
template <class S, class Rng>
Value<S> dropout(const Value<S>& a, double rate, bool training, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout: rate must be in [0, 1), got " + std::to_string(rate));
  if (!training || rate == 0.0) return a;
  const S keep_scale = static_cast<S>(1.0 / (1.0 - rate));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Buffer<S> mask(a.size());
  for (S& m : mask) m = unit(rng) < rate ? S{0} : keep_scale;
  Tape<S>& tape = a.tape();
  return mul(a, tape.constant(a.shape(), std::move(mask)));
}

enum class Activation { kNone, kRelu, kSigmoid };

// activation(W x + b) with W [out, in].
template <class S>
Value<S> dense(const Value<S>& x, const Value<S>& weight, const Value<S>& bias, Activation act) {
  Value<S> z = add_bias(matmul_nt(x, weight), bias);
  switch (act) {
    case Activation::kRelu:
      return relu(z);
    case Activation::kSigmoid:
      return sigmoid(z);
    case Activation::kNone:
      break;
  }
  return z;
}

// LSTM weights; gate blocks are ordered input, forget, candidate, output.
template <class S>
struct LstmWeights {
  Value<S> input_weight;      // [4H, F]
  Value<S> recurrent_weight;  // [4H, H]
  Value<S> bias;              // [4H]
};

// One LSTM update from an already projected input (W_ih x), so callers can
// batch the input projection over all timesteps.
template <class S>
std::pair<Value<S>, Value<S>> lstm_cell(const Value<S>& projected_input, const Value<S>& h, const Value<S>& c,
                                        const LstmWeights<S>& p) {
  const std::size_t hidden = h.size();
  if (projected_input.shape() != Shape{4 * hidden} || c.shape() != Shape{hidden} ||
      p.recurrent_weight.shape() != Shape{4 * hidden, hidden} || p.bias.shape() != Shape{4 * hidden}) {
    throw ShapeError("lstm: inconsistent shapes (projected input " + shape_str(projected_input.shape()) + ", h " +
                     shape_str(h.shape()) + ", c " + shape_str(c.shape()) + ", recurrent " +
                     shape_str(p.recurrent_weight.shape()) + ")");
  }
  const Value<S> gates = add_bias(add(projected_input, matmul_nt(h, p.recurrent_weight)), p.bias);
  const Value<S> i = sigmoid(slice(gates, 0, hidden));
  const Value<S> f = sigmoid(slice(gates, hidden, 2 * hidden));
  const Value<S> g = tanh(slice(gates, 2 * hidden, 3 * hidden));
  const Value<S> o = sigmoid(slice(gates, 3 * hidden, 4 * hidden));
  const Value<S> c_next = add(mul(f, c), mul(i, g));
  const Value<S> h_next = mul(o, tanh(c_next));
  return {h_next, c_next};
}

template <class S>
std::pair<Value<S>, Value<S>> lstm_step(const Value<S>& x, const Value<S>& h, const Value<S>& c,
                                        const LstmWeights<S>& p) {
  if (x.shape().size() != 1 || p.input_weight.shape().size() != 2 || p.input_weight.shape()[1] != x.size()) {
    throw ShapeError("lstm_step: input " + shape_str(x.shape()) + " does not match input weight " +
                     shape_str(p.input_weight.shape()));
  }
  return lstm_cell(matmul_nt(x, p.input_weight), h, c, p);
}

}  // namespace agni::ag
