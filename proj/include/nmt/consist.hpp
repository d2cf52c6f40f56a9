#pragma once

#include <string>
#include <vector>

#include "nmt/tensor.hpp"

// Cross-model consistency objective: divergences between parent and child
// prediction distributions on semantically-equivalent instances, the
// per-token-mean consistency loss, the interpolated total objective, and
// the R-Drop inner-consistency regularizer.

namespace nmt {

enum class Divergence { JS, KL };

inline const char* divergence_name(Divergence d) { return d == Divergence::JS ? "js" : "kl"; }

inline Divergence divergence_from_name(const std::string& s) {
  if (s == "js") return Divergence::JS;
  if (s == "kl") return Divergence::KL;
  throw ValueError("unknown divergence '" + s + "' (expected js or kl)");
}

struct ConsistConfig {
  double alpha = 7.0;                   // weight on the consistency term
  double tau = 1.0;                     // temperature applied to both distributions
  Divergence divergence = Divergence::JS;

  void validate() const {
    if (alpha < 0.0) throw ValueError("consist: alpha must be non-negative");
    if (!(tau > 0.0)) throw ValueError("consist: tau must be positive");
  }
};

namespace detail {

// KL(p||q) = sum_i p_i (log p_i - log q_i), logs floored at 1e-12.
// Terms with p_i == 0 contribute zero.
template <typename T>
T kl_row(const T* p, const T* q, long v) {
  T acc = T(0);
  for (long j = 0; j < v; ++j) {
    if (p[j] <= T(0)) continue;
    acc += p[j] * (floored_log(p[j]) - floored_log(q[j]));
  }
  return acc;
}

// d KL(p||q) / d p_j for the floored forward above.
template <typename T>
void kl_row_adjoint_p(const T* p, const T* q, T* dp, long v, T g) {
  const T floor = T(kProbFloor);
  for (long j = 0; j < v; ++j) {
    T term = floored_log(std::max(p[j], T(0))) - floored_log(q[j]);
    if (p[j] > floor) term += T(1);
    dp[j] += g * term;
  }
}

// d KL(p||q) / d q_j: -p_j / q_j where q above the floor.
template <typename T>
void kl_row_adjoint_q(const T* p, const T* q, T* dq, long v, T g) {
  const T floor = T(kProbFloor);
  for (long j = 0; j < v; ++j)
    if (q[j] >= floor && p[j] > T(0)) dq[j] -= g * p[j] / q[j];
}

template <typename T>
T js_row(const T* p, const T* q, long v, std::vector<T>& m_buf) {
  m_buf.resize(static_cast<size_t>(v));
  for (long j = 0; j < v; ++j) m_buf[j] = (p[j] + q[j]) / T(2);
  return (kl_row(p, m_buf.data(), v) + kl_row(q, m_buf.data(), v)) / T(2);
}

// d JS(p,q) / d p_j of the floored forward. Without clamps this reduces to
// log(p_j/m_j) / 2.
template <typename T>
void js_row_adjoint_p(const T* p, const T* q, T* dp, long v, T g) {
  const T floor = T(kProbFloor);
  for (long j = 0; j < v; ++j) {
    T m = (p[j] + q[j]) / T(2);
    T term = T(0);
    if (p[j] > T(0)) {
      term += (floored_log(p[j]) - floored_log(m)) / T(2);
      if (p[j] > floor) term += T(0.5);
    }
    if (m > floor) term -= (p[j] + q[j]) / (T(4) * m);
    dp[j] += g * term;
  }
}

}  // namespace detail

// KL(p||q) over two distribution vectors of equal length. Natural log;
// 1e-12 floors inside the logs.
template <typename T>
Tensor<T> kl_divergence(const Tensor<T>& p, const Tensor<T>& q) {
  if (p.shape() != q.shape())
    throw ShapeError("kl_divergence: length mismatch " + shape_str(p.shape()) + " vs " +
                     shape_str(q.shape()));
  long v = p.size();
  Tensor<T> out = Tensor<T>::scalar(detail::kl_row(p.data().data(), q.data().data(), v));
  bool rec = detail::grad_needed<T>({&p, &q});
  auto pn = p.node(), qn = q.node(), on = out.node();
  return detail::finish_op<T>("kl_divergence", out, rec, [pn, qn, on, v] {
    T g = on->grad[0];
    if (pn->requires_grad) {
      pn->ensure_grad();
      detail::kl_row_adjoint_p(pn->value.data(), qn->value.data(), pn->grad.data(), v, g);
    }
    if (qn->requires_grad) {
      qn->ensure_grad();
      detail::kl_row_adjoint_q(pn->value.data(), qn->value.data(), qn->grad.data(), v, g);
    }
  });
}

// Jensen-Shannon divergence: (KL(p||m) + KL(q||m)) / 2 with m = (p+q)/2.
// Bounded by ln 2 under natural log.
template <typename T>
Tensor<T> js_divergence(const Tensor<T>& p, const Tensor<T>& q) {
  if (p.shape() != q.shape())
    throw ShapeError("js_divergence: length mismatch " + shape_str(p.shape()) + " vs " +
                     shape_str(q.shape()));
  long v = p.size();
  std::vector<T> m_buf;
  Tensor<T> out = Tensor<T>::scalar(detail::js_row(p.data().data(), q.data().data(), v, m_buf));
  bool rec = detail::grad_needed<T>({&p, &q});
  auto pn = p.node(), qn = q.node(), on = out.node();
  return detail::finish_op<T>("js_divergence", out, rec, [pn, qn, on, v] {
    T g = on->grad[0];
    if (pn->requires_grad) {
      pn->ensure_grad();
      detail::js_row_adjoint_p(pn->value.data(), qn->value.data(), pn->grad.data(), v, g);
    }
    if (qn->requires_grad) {
      qn->ensure_grad();
      detail::js_row_adjoint_p(qn->value.data(), pn->value.data(), qn->grad.data(), v, g);
    }
  });
}

// Cross-model consistency loss: divergence between child and parent
// prediction rows summed over unmasked positions and divided by the
// unmasked count, matching the per-token normalization of the NLL term.
// Parent rows are expected to carry no gradient.
template <typename T>
Tensor<T> consist_loss(const Tensor<T>& child_dists, const Tensor<T>& parent_dists,
                       const std::vector<uint8_t>& mask, const ConsistConfig& cfg) {
  cfg.validate();
  if (child_dists.shape() != parent_dists.shape())
    throw ShapeError(
        "consist_loss: position/vocabulary mismatch " + shape_str(child_dists.shape()) + " vs " +
        shape_str(parent_dists.shape()) + " (parent and child must share the target vocabulary)");
  long v = child_dists.shape().back();
  long n = child_dists.size() / v;
  if (!mask.empty() && static_cast<long>(mask.size()) != n)
    throw ShapeError("consist_loss: mask length " + std::to_string(mask.size()) +
                     " does not match position count " + std::to_string(n));
  long count = 0;
  for (long i = 0; i < n; ++i)
    if (mask.empty() || mask[i]) ++count;
  Tensor<T> out = Tensor<T>::zeros({1});
  if (count == 0) return detail::finish_op<T>("consist_loss", out, false, {});

  const bool js = cfg.divergence == Divergence::JS;
  const auto& cv = child_dists.data();
  const auto& pv = parent_dists.data();
  std::vector<T> m_buf;
  T total = T(0);
  for (long i = 0; i < n; ++i) {
    if (!mask.empty() && !mask[i]) continue;
    const T* c = cv.data() + i * v;
    const T* p = pv.data() + i * v;
    total += js ? detail::js_row(c, p, v, m_buf) : detail::kl_row(c, p, v);
  }
  out.data()[0] = total / T(count);
  bool rec = detail::grad_needed<T>({&child_dists, &parent_dists});
  auto cn = child_dists.node(), pn = parent_dists.node(), on = out.node();
  auto mk = std::make_shared<std::vector<uint8_t>>(mask);
  return detail::finish_op<T>("consist_loss", out, rec, [cn, pn, on, mk, n, v, count, js] {
    if (!cn->requires_grad) return;
    cn->ensure_grad();
    T g = on->grad[0] / T(count);
    for (long i = 0; i < n; ++i) {
      if (!mk->empty() && !(*mk)[i]) continue;
      const T* c = cn->value.data() + i * v;
      const T* p = pn->value.data() + i * v;
      T* dc = cn->grad.data() + i * v;
      if (js)
        detail::js_row_adjoint_p(c, p, dc, v, g);
      else
        detail::kl_row_adjoint_p(c, p, dc, v, g);
    }
  });
}

// Final objective: L = L_nll + alpha * L_d.
template <typename T>
Tensor<T> total_loss(const Tensor<T>& nll, const Tensor<T>& l_d, const ConsistConfig& cfg) {
  if (nll.size() != 1 || l_d.size() != 1)
    throw ShapeError("total_loss: both terms must be scalars");
  return add(nll, scale(l_d, T(cfg.alpha)));
}

// R-Drop inner consistency: symmetric KL (KL(a||b) + KL(b||a)) / 2 between
// two dropout-perturbed forwards of the same model, per-token normalized
// over unmasked positions and scaled by weight.
template <typename T>
Tensor<T> rdrop_loss(const Tensor<T>& dists_a, const Tensor<T>& dists_b,
                     const std::vector<uint8_t>& mask, double weight) {
  if (dists_a.shape() != dists_b.shape())
    throw ShapeError("rdrop_loss: position/vocabulary mismatch " + shape_str(dists_a.shape()) +
                     " vs " + shape_str(dists_b.shape()));
  if (weight < 0.0) throw ValueError("rdrop_loss: weight must be non-negative");
  long v = dists_a.shape().back();
  long n = dists_a.size() / v;
  if (!mask.empty() && static_cast<long>(mask.size()) != n)
    throw ShapeError("rdrop_loss: mask length does not match position count");
  long count = 0;
  for (long i = 0; i < n; ++i)
    if (mask.empty() || mask[i]) ++count;
  Tensor<T> out = Tensor<T>::zeros({1});
  if (count == 0 || weight == 0.0) return detail::finish_op<T>("rdrop_loss", out, false, {});

  const auto& av = dists_a.data();
  const auto& bv = dists_b.data();
  T total = T(0);
  for (long i = 0; i < n; ++i) {
    if (!mask.empty() && !mask[i]) continue;
    const T* a = av.data() + i * v;
    const T* b = bv.data() + i * v;
    total += (detail::kl_row(a, b, v) + detail::kl_row(b, a, v)) / T(2);
  }
  out.data()[0] = T(weight) * total / T(count);
  bool rec = detail::grad_needed<T>({&dists_a, &dists_b});
  auto an = dists_a.node(), bn = dists_b.node(), on = out.node();
  auto mk = std::make_shared<std::vector<uint8_t>>(mask);
  return detail::finish_op<T>("rdrop_loss", out, rec, [an, bn, on, mk, n, v, count, weight] {
    T g = on->grad[0] * T(weight) / (T(2) * T(count));
    for (long i = 0; i < n; ++i) {
      if (!mk->empty() && !(*mk)[i]) continue;
      const T* a = an->value.data() + i * v;
      const T* b = bn->value.data() + i * v;
      if (an->requires_grad) {
        an->ensure_grad();
        T* da = an->grad.data() + i * v;
        detail::kl_row_adjoint_p(a, b, da, v, g);
        detail::kl_row_adjoint_q(b, a, da, v, g);
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        T* db = bn->grad.data() + i * v;
        detail::kl_row_adjoint_p(b, a, db, v, g);
        detail::kl_row_adjoint_q(a, b, db, v, g);
      }
    }
  });
}

// Shannon entropy (natural log) of a probability vector; diagnostic helper.
template <typename T>
T entropy(const std::vector<T>& p) {
  T h = T(0);
  for (T x : p)
    if (x > T(0)) h -= x * std::log(x);
  return h;
}

}  // namespace nmt
