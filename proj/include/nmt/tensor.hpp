#pragma once

#include <cmath>
#include <cstring>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "nmt/common.hpp"
#include "nmt/rng.hpp"

// Reverse-mode autodiff substrate. Tensors are shared handles to flat
// row-major value/grad storage; a ComputationTape records executed
// operations and replays their adjoints in reverse order. Training runs
// in float; gradient-check suites instantiate the same ops in double.

namespace nmt {

template <typename T>
struct TensorNode {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until first needed; same length as value after
  bool requires_grad = false;
  bool leaf = true;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
  }
};

template <typename T>
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    Tensor t;
    t.node_ = std::make_shared<TensorNode<T>>();
    t.node_->shape = std::move(shape);
    t.node_->value.assign(static_cast<size_t>(numel(t.node_->shape)), T(0));
    t.node_->requires_grad = requires_grad;
    return t;
  }

  static Tensor from(Shape shape, std::vector<T> data, bool requires_grad = false) {
    if (static_cast<long>(data.size()) != numel(shape))
      throw ShapeError("Tensor::from: data length " + std::to_string(data.size()) +
                       " does not match shape " + shape_str(shape));
    Tensor t;
    t.node_ = std::make_shared<TensorNode<T>>();
    t.node_->shape = std::move(shape);
    t.node_->value = std::move(data);
    t.node_->requires_grad = requires_grad;
    return t;
  }

  static Tensor scalar(T v, bool requires_grad = false) {
    return from({1}, {v}, requires_grad);
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  long size() const { return static_cast<long>(node_->value.size()); }
  long dim(size_t i) const { return node_->shape[i]; }
  long rank() const { return static_cast<long>(node_->shape.size()); }

  std::vector<T>& data() { return node_->value; }
  const std::vector<T>& data() const { return node_->value; }

  std::vector<T>& grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  const std::vector<T>& grad() const {
    node_->ensure_grad();
    return node_->grad;
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool v) { node_->requires_grad = v; }
  bool is_leaf() const { return node_->leaf; }

  T item() const {
    if (size() != 1) throw ShapeError("item: tensor has " + std::to_string(size()) + " elements");
    return node_->value[0];
  }

  void zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
  }

  std::shared_ptr<TensorNode<T>> node() const { return node_; }

 private:
  std::shared_ptr<TensorNode<T>> node_;
};

// Ordered record of executed operations. backward() visits entries in
// reverse execution order (a topological order of the dataflow graph) and
// accumulates adjoints. Non-leaf grads are transient per backward() call;
// leaf grads accumulate across calls until zeroed by the caller.
template <typename T>
class Tape {
 public:
  struct Entry {
    std::shared_ptr<TensorNode<T>> out;
    std::function<void()> adjoint;
  };

  void record(std::shared_ptr<TensorNode<T>> out, std::function<void()> adjoint) {
    entries_.push_back(Entry{std::move(out), std::move(adjoint)});
  }

  size_t size() const { return entries_.size(); }

  void backward(const Tensor<T>& root) {
    if (root.size() != 1)
      throw ShapeError("Tape::backward: root must be scalar, got " + shape_str(root.shape()));
    for (auto& e : entries_) {
      e.out->ensure_grad();
      std::fill(e.out->grad.begin(), e.out->grad.end(), T(0));
    }
    root.node()->ensure_grad();
    root.node()->grad[0] += T(1);
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) it->adjoint();
  }

  static Tape*& current() {
    thread_local Tape* cur = nullptr;
    return cur;
  }

 private:
  std::vector<Entry> entries_;
};

// RAII activation of a tape for the current thread.
template <typename T>
class TapeScope {
 public:
  explicit TapeScope(Tape<T>& tape) : prev_(Tape<T>::current()) { Tape<T>::current() = &tape; }
  ~TapeScope() { Tape<T>::current() = prev_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape<T>* prev_;
};

// Probability floor applied at every log-of-probability site.
inline constexpr double kProbFloor = 1e-12;

// Count of clamped log(p) events since last reset, for loss diagnostics.
inline long& clamp_event_count() {
  thread_local long n = 0;
  return n;
}

namespace detail {

template <typename T>
void check_finite(const char* op, const TensorNode<T>& node) {
  for (T v : node.value) {
    if (!std::isfinite(v))
      throw NumericError(std::string(op) + ": produced non-finite value");
  }
}

template <typename T>
bool grad_needed(std::initializer_list<const Tensor<T>*> inputs) {
  if (Tape<T>::current() == nullptr) return false;
  for (const Tensor<T>* t : inputs)
    if ((*t).requires_grad()) return true;
  return false;
}

// Creates the output node, runs the finite check, and records the adjoint
// closure when gradients are needed.
template <typename T>
Tensor<T> finish_op(const char* op, Tensor<T> out, bool needs_grad,
                    std::function<void()> adjoint) {
  check_finite(op, *out.node());
  if (needs_grad) {
    out.node()->requires_grad = true;
    out.node()->leaf = false;
    Tape<T>::current()->record(out.node(), std::move(adjoint));
  }
  return out;
}

template <typename T>
void accumulate(TensorNode<T>& dst, const std::vector<T>& src) {
  dst.ensure_grad();
  for (size_t i = 0; i < src.size(); ++i) dst.grad[i] += src[i];
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise ops

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    throw ShapeError("add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  const auto& av = a.data();
  const auto& bv = b.data();
  auto& ov = out.data();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i];
  bool rec = detail::grad_needed<T>({&a, &b});
  auto an = a.node(), bn = b.node(), on = out.node();
  return detail::finish_op<T>("add", out, rec, [an, bn, on] {
    if (an->requires_grad) detail::accumulate(*an, on->grad);
    if (bn->requires_grad) detail::accumulate(*bn, on->grad);
  });
}

// x: (..., d) treated as rows; bias: (d).
template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias) {
  long d = x.shape().back();
  if (bias.rank() != 1 || bias.dim(0) != d)
    throw ShapeError("add_bias: bias " + shape_str(bias.shape()) + " does not match last dim of " +
                     shape_str(x.shape()));
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  const auto& xv = x.data();
  const auto& bv = bias.data();
  auto& ov = out.data();
  size_t rows = xv.size() / static_cast<size_t>(d);
  for (size_t r = 0; r < rows; ++r)
    for (long j = 0; j < d; ++j) ov[r * d + j] = xv[r * d + j] + bv[j];
  bool rec = detail::grad_needed<T>({&x, &bias});
  auto xn = x.node(), bn = bias.node(), on = out.node();
  return detail::finish_op<T>("add_bias", out, rec, [xn, bn, on, rows, d] {
    if (xn->requires_grad) detail::accumulate(*xn, on->grad);
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (size_t r = 0; r < rows; ++r)
        for (long j = 0; j < d; ++j) bn->grad[j] += on->grad[r * d + j];
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    throw ShapeError("mul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  const auto& av = a.data();
  const auto& bv = b.data();
  auto& ov = out.data();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * bv[i];
  bool rec = detail::grad_needed<T>({&a, &b});
  auto an = a.node(), bn = b.node(), on = out.node();
  return detail::finish_op<T>("mul", out, rec, [an, bn, on] {
    if (an->requires_grad) {
      an->ensure_grad();
      for (size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i] * bn->value[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (size_t i = 0; i < on->grad.size(); ++i) bn->grad[i] += on->grad[i] * an->value[i];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T c) {
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  const auto& av = a.data();
  auto& ov = out.data();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * c;
  bool rec = detail::grad_needed<T>({&a});
  auto an = a.node(), on = out.node();
  return detail::finish_op<T>("scale", out, rec, [an, on, c] {
    if (an->requires_grad) {
      an->ensure_grad();
      for (size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i] * c;
    }
  });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  const auto& xv = x.data();
  auto& ov = out.data();
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = xv[i] > T(0) ? xv[i] : T(0);
  bool rec = detail::grad_needed<T>({&x});
  auto xn = x.node(), on = out.node();
  return detail::finish_op<T>("relu", out, rec, [xn, on] {
    if (xn->requires_grad) {
      xn->ensure_grad();
      for (size_t i = 0; i < on->grad.size(); ++i)
        if (xn->value[i] > T(0)) xn->grad[i] += on->grad[i];
    }
  });
}

// Inverted dropout; mask is drawn from rng and saved for the adjoint.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw ValueError("dropout: rate must be in [0,1)");
  if (rate == 0.0) return x;
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  const auto& xv = x.data();
  auto& ov = out.data();
  auto mask = std::make_shared<std::vector<T>>(xv.size());
  T keep_scale = T(1.0 / (1.0 - rate));
  for (size_t i = 0; i < ov.size(); ++i) {
    T m = rng.uniform() < rate ? T(0) : keep_scale;
    (*mask)[i] = m;
    ov[i] = xv[i] * m;
  }
  bool rec = detail::grad_needed<T>({&x});
  auto xn = x.node(), on = out.node();
  return detail::finish_op<T>("dropout", out, rec, [xn, on, mask] {
    if (xn->requires_grad) {
      xn->ensure_grad();
      for (size_t i = 0; i < on->grad.size(); ++i) xn->grad[i] += on->grad[i] * (*mask)[i];
    }
  });
}

// ---------------------------------------------------------------------------
// matrix products

namespace detail {

// C(N,M) += A(N,K) * B(K,M); ikj order so the inner loop vectorizes.
template <typename T>
void gemm_nn_acc(const T* a, const T* b, T* c, long n, long k, long m) {
  for (long i = 0; i < n; ++i) {
    const T* arow = a + i * k;
    T* crow = c + i * m;
    for (long p = 0; p < k; ++p) {
      T ap = arow[p];
      const T* brow = b + p * m;
      for (long j = 0; j < m; ++j) crow[j] += ap * brow[j];
    }
  }
}

// C(N,M) += A(N,K) * B(M,K)^T. For matrices worth the copy, B is transposed
// into scratch so the accumulation runs through the vectorizable nn kernel;
// small inputs use direct dot products.
template <typename T>
void gemm_nt_acc(const T* a, const T* b, T* c, long n, long k, long m) {
  if (n * m * k >= 16384) {
    thread_local std::vector<T> scratch;
    scratch.resize(static_cast<size_t>(k * m));
    for (long j = 0; j < m; ++j)
      for (long p = 0; p < k; ++p) scratch[static_cast<size_t>(p * m + j)] = b[j * k + p];
    gemm_nn_acc(a, scratch.data(), c, n, k, m);
    return;
  }
  for (long i = 0; i < n; ++i) {
    const T* arow = a + i * k;
    T* crow = c + i * m;
    for (long j = 0; j < m; ++j) {
      const T* brow = b + j * k;
      T acc = T(0);
      for (long p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] += acc;
    }
  }
}

// C(K,M) += A(N,K)^T * B(N,M).
template <typename T>
void gemm_tn_acc(const T* a, const T* b, T* c, long n, long k, long m) {
  for (long i = 0; i < n; ++i) {
    const T* arow = a + i * k;
    const T* brow = b + i * m;
    for (long p = 0; p < k; ++p) {
      T ap = arow[p];
      T* crow = c + p * m;
      for (long j = 0; j < m; ++j) crow[j] += ap * brow[j];
    }
  }
}

}  // namespace detail

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  long n = a.dim(0), k = a.dim(1), m = b.dim(1);
  Tensor<T> out = Tensor<T>::zeros({n, m});
  detail::gemm_nn_acc(a.data().data(), b.data().data(), out.data().data(), n, k, m);
  bool rec = detail::grad_needed<T>({&a, &b});
  auto an = a.node(), bn = b.node(), on = out.node();
  return detail::finish_op<T>("matmul", out, rec, [an, bn, on, n, k, m] {
    if (an->requires_grad) {  // dA += G * B^T
      an->ensure_grad();
      detail::gemm_nt_acc(on->grad.data(), bn->value.data(), an->grad.data(), n, m, k);
    }
    if (bn->requires_grad) {  // dB += A^T * G
      bn->ensure_grad();
      detail::gemm_tn_acc(an->value.data(), on->grad.data(), bn->grad.data(), n, k, m);
    }
  });
}

// A(N,K) * B(M,K)^T -> (N,M). Used for tied output projections.
template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1))
    throw ShapeError("matmul_nt: incompatible shapes " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()) + "^T");
  long n = a.dim(0), k = a.dim(1), m = b.dim(0);
  Tensor<T> out = Tensor<T>::zeros({n, m});
  detail::gemm_nt_acc(a.data().data(), b.data().data(), out.data().data(), n, k, m);
  bool rec = detail::grad_needed<T>({&a, &b});
  auto an = a.node(), bn = b.node(), on = out.node();
  return detail::finish_op<T>("matmul_nt", out, rec, [an, bn, on, n, k, m] {
    if (an->requires_grad) {  // dA += G * B
      an->ensure_grad();
      detail::gemm_nn_acc(on->grad.data(), bn->value.data(), an->grad.data(), n, m, k);
    }
    if (bn->requires_grad) {  // dB += G^T * A
      bn->ensure_grad();
      detail::gemm_tn_acc(on->grad.data(), an->value.data(), bn->grad.data(), n, m, k);
    }
  });
}

// Batched A(B,T,K) * B(B,S,K)^T -> (B,T,S). Attention score shape.
template <typename T>
Tensor<T> bmm_nt(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2))
    throw ShapeError("bmm_nt: incompatible shapes " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()) + "^T");
  long nb = a.dim(0), t = a.dim(1), k = a.dim(2), s = b.dim(1);
  Tensor<T> out = Tensor<T>::zeros({nb, t, s});
  for (long i = 0; i < nb; ++i)
    detail::gemm_nt_acc(a.data().data() + i * t * k, b.data().data() + i * s * k,
                        out.data().data() + i * t * s, t, k, s);
  bool rec = detail::grad_needed<T>({&a, &b});
  auto an = a.node(), bn = b.node(), on = out.node();
  return detail::finish_op<T>("bmm_nt", out, rec, [an, bn, on, nb, t, k, s] {
    for (long i = 0; i < nb; ++i) {
      const T* g = on->grad.data() + i * t * s;
      if (an->requires_grad) {
        an->ensure_grad();
        detail::gemm_nn_acc(g, bn->value.data() + i * s * k, an->grad.data() + i * t * k, t, s, k);
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        detail::gemm_tn_acc(g, an->value.data() + i * t * k, bn->grad.data() + i * s * k, t, s, k);
      }
    }
  });
}

// Batched A(B,T,S) * B(B,S,K) -> (B,T,K). Attention context shape.
template <typename T>
Tensor<T> bmm_nn(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1))
    throw ShapeError("bmm_nn: incompatible shapes " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  long nb = a.dim(0), t = a.dim(1), s = a.dim(2), k = b.dim(2);
  Tensor<T> out = Tensor<T>::zeros({nb, t, k});
  for (long i = 0; i < nb; ++i)
    detail::gemm_nn_acc(a.data().data() + i * t * s, b.data().data() + i * s * k,
                        out.data().data() + i * t * k, t, s, k);
  bool rec = detail::grad_needed<T>({&a, &b});
  auto an = a.node(), bn = b.node(), on = out.node();
  return detail::finish_op<T>("bmm_nn", out, rec, [an, bn, on, nb, t, s, k] {
    for (long i = 0; i < nb; ++i) {
      const T* g = on->grad.data() + i * t * k;
      if (an->requires_grad) {
        an->ensure_grad();
        detail::gemm_nt_acc(g, bn->value.data() + i * s * k, an->grad.data() + i * t * s, t, k, s);
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        detail::gemm_tn_acc(an->value.data() + i * t * s, g, bn->grad.data() + i * s * k, t, s, k);
      }
    }
  });
}

// ---------------------------------------------------------------------------
// gather / layout ops

template <typename T>
Tensor<T> embedding(const Tensor<T>& table, const std::vector<int>& ids) {
  if (table.rank() != 2)
    throw ShapeError("embedding: table must be 2-d, got " + shape_str(table.shape()));
  long v = table.dim(0), d = table.dim(1);
  for (int id : ids)
    if (id < 0 || id >= v)
      throw ValueError("embedding: id " + std::to_string(id) + " out of range [0," +
                       std::to_string(v) + ")");
  long n = static_cast<long>(ids.size());
  Tensor<T> out = Tensor<T>::zeros({n, d});
  const auto& tv = table.data();
  auto& ov = out.data();
  for (long i = 0; i < n; ++i)
    std::memcpy(ov.data() + i * d, tv.data() + static_cast<long>(ids[i]) * d, sizeof(T) * d);
  bool rec = detail::grad_needed<T>({&table});
  auto tn = table.node(), on = out.node();
  auto ids_copy = std::make_shared<std::vector<int>>(ids);
  return detail::finish_op<T>("embedding", out, rec, [tn, on, ids_copy, d] {
    if (!tn->requires_grad) return;
    tn->ensure_grad();
    for (size_t i = 0; i < ids_copy->size(); ++i) {
      T* dst = tn->grad.data() + static_cast<long>((*ids_copy)[i]) * d;
      const T* src = on->grad.data() + static_cast<long>(i) * d;
      for (long j = 0; j < d; ++j) dst[j] += src[j];
    }
  });
}

// (B*T, d) -> (B*H, T, d/H): pure index permutation for multi-head attention.
template <typename T>
Tensor<T> split_heads(const Tensor<T>& x, long b, long t, long h) {
  if (x.rank() != 2 || x.dim(0) != b * t || x.dim(1) % h != 0)
    throw ShapeError("split_heads: bad shape " + shape_str(x.shape()) + " for b=" +
                     std::to_string(b) + " t=" + std::to_string(t) + " h=" + std::to_string(h));
  long d = x.dim(1), dh = d / h;
  Tensor<T> out = Tensor<T>::zeros({b * h, t, dh});
  const auto& xv = x.data();
  auto& ov = out.data();
  for (long bi = 0; bi < b; ++bi)
    for (long ti = 0; ti < t; ++ti)
      for (long hi = 0; hi < h; ++hi)
        std::memcpy(ov.data() + ((bi * h + hi) * t + ti) * dh,
                    xv.data() + (bi * t + ti) * d + hi * dh, sizeof(T) * dh);
  bool rec = detail::grad_needed<T>({&x});
  auto xn = x.node(), on = out.node();
  return detail::finish_op<T>("split_heads", out, rec, [xn, on, b, t, h, d, dh] {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    for (long bi = 0; bi < b; ++bi)
      for (long ti = 0; ti < t; ++ti)
        for (long hi = 0; hi < h; ++hi) {
          const T* src = on->grad.data() + ((bi * h + hi) * t + ti) * dh;
          T* dst = xn->grad.data() + (bi * t + ti) * d + hi * dh;
          for (long j = 0; j < dh; ++j) dst[j] += src[j];
        }
  });
}

// (B*H, T, dh) -> (B*T, H*dh): inverse of split_heads.
template <typename T>
Tensor<T> merge_heads(const Tensor<T>& x, long b, long t, long h) {
  if (x.rank() != 3 || x.dim(0) != b * h || x.dim(1) != t)
    throw ShapeError("merge_heads: bad shape " + shape_str(x.shape()));
  long dh = x.dim(2), d = h * dh;
  Tensor<T> out = Tensor<T>::zeros({b * t, d});
  const auto& xv = x.data();
  auto& ov = out.data();
  for (long bi = 0; bi < b; ++bi)
    for (long ti = 0; ti < t; ++ti)
      for (long hi = 0; hi < h; ++hi)
        std::memcpy(ov.data() + (bi * t + ti) * d + hi * dh,
                    xv.data() + ((bi * h + hi) * t + ti) * dh, sizeof(T) * dh);
  bool rec = detail::grad_needed<T>({&x});
  auto xn = x.node(), on = out.node();
  return detail::finish_op<T>("merge_heads", out, rec, [xn, on, b, t, h, d, dh] {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    for (long bi = 0; bi < b; ++bi)
      for (long ti = 0; ti < t; ++ti)
        for (long hi = 0; hi < h; ++hi) {
          const T* src = on->grad.data() + (bi * t + ti) * d + hi * dh;
          T* dst = xn->grad.data() + ((bi * h + hi) * t + ti) * dh;
          for (long j = 0; j < dh; ++j) dst[j] += src[j];
        }
  });
}

// ---------------------------------------------------------------------------
// normalization / softmax

namespace detail {

// One softmax row with max-subtraction; cols = active prefix length.
template <typename T>
void softmax_row(const T* z, T* p, long cols, T tau) {
  T mx = z[0];
  for (long j = 1; j < cols; ++j) mx = std::max(mx, z[j]);
  T sum = T(0);
  for (long j = 0; j < cols; ++j) {
    p[j] = std::exp((z[j] - mx) / tau);
    sum += p[j];
  }
  T inv = T(1) / sum;
  for (long j = 0; j < cols; ++j) p[j] *= inv;
}

// dz = (p .* (g - dot(g,p))) / tau over an active prefix.
template <typename T>
void softmax_row_adjoint(const T* p, const T* g, T* dz, long cols, T tau) {
  T dot = T(0);
  for (long j = 0; j < cols; ++j) dot += g[j] * p[j];
  T inv_tau = T(1) / tau;
  for (long j = 0; j < cols; ++j) dz[j] += p[j] * (g[j] - dot) * inv_tau;
}

}  // namespace detail

// Temperature softmax over the last axis: p_k = exp(z_k/tau) / sum_i exp(z_i/tau),
// computed with max-subtraction. tau must be positive.
template <typename T>
Tensor<T> softmax_t(const Tensor<T>& z, T tau) {
  if (!(tau > T(0))) throw ValueError("softmax_t: tau must be positive");
  long d = z.shape().back();
  Tensor<T> out = Tensor<T>::zeros(z.shape());
  const auto& zv = z.data();
  auto& ov = out.data();
  size_t rows = zv.size() / static_cast<size_t>(d);
  for (size_t r = 0; r < rows; ++r)
    detail::softmax_row(zv.data() + r * d, ov.data() + r * d, d, tau);
  bool rec = detail::grad_needed<T>({&z});
  auto zn = z.node(), on = out.node();
  return detail::finish_op<T>("softmax_t", out, rec, [zn, on, rows, d, tau] {
    if (!zn->requires_grad) return;
    zn->ensure_grad();
    for (size_t r = 0; r < rows; ++r)
      detail::softmax_row_adjoint(on->value.data() + r * d, on->grad.data() + r * d,
                                  zn->grad.data() + r * d, d, tau);
  });
}

// Causal softmax for decoder self-attention scores (B,T,T): row t attends
// to columns 0..t only; masked columns are exactly zero.
template <typename T>
Tensor<T> softmax_causal(const Tensor<T>& scores, T tau = T(1)) {
  if (!(tau > T(0))) throw ValueError("softmax_causal: tau must be positive");
  if (scores.rank() != 3 || scores.dim(1) != scores.dim(2))
    throw ShapeError("softmax_causal: need (B,T,T), got " + shape_str(scores.shape()));
  long nb = scores.dim(0), t = scores.dim(1);
  Tensor<T> out = Tensor<T>::zeros(scores.shape());
  const auto& zv = scores.data();
  auto& ov = out.data();
  for (long i = 0; i < nb; ++i)
    for (long r = 0; r < t; ++r)
      detail::softmax_row(zv.data() + (i * t + r) * t, ov.data() + (i * t + r) * t, r + 1, tau);
  bool rec = detail::grad_needed<T>({&scores});
  auto zn = scores.node(), on = out.node();
  return detail::finish_op<T>("softmax_causal", out, rec, [zn, on, nb, t, tau] {
    if (!zn->requires_grad) return;
    zn->ensure_grad();
    for (long i = 0; i < nb; ++i)
      for (long r = 0; r < t; ++r)
        detail::softmax_row_adjoint(on->value.data() + (i * t + r) * t,
                                    on->grad.data() + (i * t + r) * t,
                                    zn->grad.data() + (i * t + r) * t, r + 1, tau);
  });
}

// Per-row mean/variance normalization scaled by gain and shifted by bias.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias,
                     T eps = T(1e-5)) {
  long d = x.shape().back();
  if (gain.rank() != 1 || gain.dim(0) != d || bias.rank() != 1 || bias.dim(0) != d)
    throw ShapeError("layer_norm: gain " + shape_str(gain.shape()) + " / bias " +
                     shape_str(bias.shape()) + " do not match last dim of " +
                     shape_str(x.shape()));
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  const auto& xv = x.data();
  const auto& gv = gain.data();
  const auto& bv = bias.data();
  auto& ov = out.data();
  size_t rows = xv.size() / static_cast<size_t>(d);
  auto xhat = std::make_shared<std::vector<T>>(xv.size());
  auto inv_sigma = std::make_shared<std::vector<T>>(rows);
  for (size_t r = 0; r < rows; ++r) {
    const T* row = xv.data() + r * d;
    T mean = T(0);
    for (long j = 0; j < d; ++j) mean += row[j];
    mean /= T(d);
    T var = T(0);
    for (long j = 0; j < d; ++j) {
      T c = row[j] - mean;
      var += c * c;
    }
    var /= T(d);
    T inv = T(1) / std::sqrt(var + eps);
    (*inv_sigma)[r] = inv;
    for (long j = 0; j < d; ++j) {
      T xh = (row[j] - mean) * inv;
      (*xhat)[r * d + j] = xh;
      ov[r * d + j] = xh * gv[j] + bv[j];
    }
  }
  bool rec = detail::grad_needed<T>({&x, &gain, &bias});
  auto xn = x.node(), gn = gain.node(), bn = bias.node(), on = out.node();
  return detail::finish_op<T>("layer_norm", out, rec, [xn, gn, bn, on, xhat, inv_sigma, rows, d] {
    for (size_t r = 0; r < rows; ++r) {
      const T* g = on->grad.data() + r * d;
      const T* xh = xhat->data() + r * d;
      if (gn->requires_grad) {
        gn->ensure_grad();
        for (long j = 0; j < d; ++j) gn->grad[j] += g[j] * xh[j];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (long j = 0; j < d; ++j) bn->grad[j] += g[j];
      }
      if (xn->requires_grad) {
        xn->ensure_grad();
        T mean_gh = T(0), mean_ghx = T(0);
        for (long j = 0; j < d; ++j) {
          T gh = g[j] * gn->value[j];
          mean_gh += gh;
          mean_ghx += gh * xh[j];
        }
        mean_gh /= T(d);
        mean_ghx /= T(d);
        T inv = (*inv_sigma)[r];
        T* dx = xn->grad.data() + r * d;
        for (long j = 0; j < d; ++j) {
          T gh = g[j] * gn->value[j];
          dx[j] += (gh - mean_gh - xh[j] * mean_ghx) * inv;
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// reductions / losses

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x) {
  Tensor<T> out = Tensor<T>::zeros({1});
  T acc = T(0);
  for (T v : x.data()) acc += v;
  out.data()[0] = acc;
  bool rec = detail::grad_needed<T>({&x});
  auto xn = x.node(), on = out.node();
  return detail::finish_op<T>("sum_all", out, rec, [xn, on] {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    T g = on->grad[0];
    for (auto& v : xn->grad) v += g;
  });
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& x) {
  return scale(sum_all(x), T(1) / T(x.size()));
}

namespace detail {

template <typename T>
T floored_log(T p) {
  if (p < T(kProbFloor)) {
    ++clamp_event_count();
    return std::log(T(kProbFloor));
  }
  return std::log(p);
}

}  // namespace detail

template <typename T>
Tensor<T> nll_loss(const Tensor<T>& probs, const std::vector<int>& targets,
                   const std::vector<uint8_t>& mask, double smoothing = 0.0);

// Label-smoothed negative log-likelihood of one distribution row:
//   loss = -(1-eps) * log p[target] - eps * mean_{j != target} log p[j]
// Zero probabilities are clamped at the 1e-12 floor and counted in
// clamp_event_count().
template <typename T>
Tensor<T> cross_entropy_nll(const Tensor<T>& probs, long target, double smoothing = 0.0) {
  if (probs.rank() != 1)
    throw ShapeError("cross_entropy_nll: probs must be 1-d, got " + shape_str(probs.shape()));
  long v = probs.dim(0);
  if (target < 0 || target >= v)
    throw ValueError("cross_entropy_nll: target " + std::to_string(target) +
                     " outside vocabulary of size " + std::to_string(v));
  if (smoothing < 0.0 || smoothing >= 1.0)
    throw ValueError("cross_entropy_nll: smoothing must be in [0,1)");
  T sum = T(0);
  for (T p : probs.data()) sum += p;
  if (std::abs(double(sum) - 1.0) > 1e-5)
    throw ValueError("cross_entropy_nll: probs sum to " + std::to_string(double(sum)) +
                     ", not a distribution");
  return nll_loss(probs, std::vector<int>{static_cast<int>(target)}, {}, smoothing);
}

// Batched label-smoothed NLL over rows (N,V) averaged over unmasked rows.
// mask may be empty (all rows count). probs rows must already be valid
// distributions (they come out of softmax_t).
template <typename T>
Tensor<T> nll_loss(const Tensor<T>& probs, const std::vector<int>& targets,
                   const std::vector<uint8_t>& mask, double smoothing) {
  long v = probs.shape().back();
  long n = probs.size() / v;
  if (static_cast<long>(targets.size()) != n)
    throw ShapeError("nll_loss: " + std::to_string(targets.size()) + " targets for " +
                     std::to_string(n) + " rows");
  if (!mask.empty() && static_cast<long>(mask.size()) != n)
    throw ShapeError("nll_loss: mask length does not match row count");
  long count = 0;
  for (long i = 0; i < n; ++i)
    if (mask.empty() || mask[i]) ++count;
  Tensor<T> out = Tensor<T>::zeros({1});
  if (count == 0) return detail::finish_op<T>("nll_loss", out, false, {});
  const T eps = T(smoothing);
  const auto& pv = probs.data();
  T total = T(0);
  for (long i = 0; i < n; ++i) {
    if (!mask.empty() && !mask[i]) continue;
    const T* row = pv.data() + i * v;
    long tgt = targets[i];
    if (tgt < 0 || tgt >= v)
      throw ValueError("nll_loss: target " + std::to_string(tgt) + " out of range at row " +
                       std::to_string(i));
    T loss = -(T(1) - eps) * detail::floored_log(row[tgt]);
    if (eps > T(0) && v > 1) {
      T other = T(0);
      for (long j = 0; j < v; ++j)
        if (j != tgt) other += detail::floored_log(row[j]);
      loss -= eps * other / T(v - 1);
    }
    total += loss;
  }
  out.data()[0] = total / T(count);
  bool rec = detail::grad_needed<T>({&probs});
  auto pn = probs.node(), on = out.node();
  auto tg = std::make_shared<std::vector<int>>(targets);
  auto mk = std::make_shared<std::vector<uint8_t>>(mask);
  return detail::finish_op<T>("nll_loss", out, rec, [pn, on, tg, mk, n, v, eps, count] {
    if (!pn->requires_grad) return;
    pn->ensure_grad();
    T g = on->grad[0] / T(count);
    const T floor = T(kProbFloor);
    for (long i = 0; i < n; ++i) {
      if (!mk->empty() && !(*mk)[i]) continue;
      const T* row = pn->value.data() + i * v;
      T* drow = pn->grad.data() + i * v;
      long tgt = (*tg)[i];
      if (row[tgt] >= floor) drow[tgt] -= g * (T(1) - eps) / row[tgt];
      if (eps > T(0) && v > 1) {
        T c = g * eps / T(v - 1);
        for (long j = 0; j < v; ++j)
          if (j != tgt && row[j] >= floor) drow[j] -= c / row[j];
      }
    }
  });
}

}  // namespace nmt
