#include "dbsn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

namespace dbsn {

namespace {

std::int64_t shape_size(const Shape& shape) {
  std::int64_t n = 1;
  for (int d : shape) {
    if (d < 0) throw std::invalid_argument("tensor: negative dimension");
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

template <typename S>
void ensure_finite(const std::vector<S>& v, const char* op) {
  for (S x : v) {
    if (!std::isfinite(static_cast<double>(x))) {
      throw std::runtime_error(std::string(op) + ": non-finite output");
    }
  }
}

template <typename S>
std::vector<S>& grad_of(TensorNode<S>& n) {
  if (n.grad.empty()) n.grad.assign(n.values.size(), S(0));
  return n.grad;
}

template <typename S>
void check_same_shape(const TensorT<S>& a, const TensorT<S>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  }
}

template <typename S, typename Fn>
void record_if_needed(const TensorT<S>& out, Fn&& fn) {
  auto* tape = TapeT<S>::active();
  if (tape && out.requires_grad()) tape->record(out.node(), std::forward<Fn>(fn));
}

}  // namespace

// ---- TensorT ----

template <typename S>
TensorT<S> TensorT<S>::leaf(Shape shape, std::vector<S> values, bool requires_grad) {
  if (shape_size(shape) != static_cast<std::int64_t>(values.size())) {
    throw std::invalid_argument("tensor: values length " + std::to_string(values.size()) +
                                " does not match shape " + shape_str(shape));
  }
  auto n = std::make_shared<TensorNode<S>>();
  n->shape = std::move(shape);
  n->values = std::move(values);
  n->requires_grad = requires_grad;
  return TensorT<S>(std::move(n));
}

template <typename S>
TensorT<S> TensorT<S>::scalar(S value, bool requires_grad) {
  return leaf({}, {value}, requires_grad);
}

template <typename S>
TensorT<S> TensorT<S>::zeros(Shape shape, bool requires_grad) {
  std::vector<S> v(static_cast<std::size_t>(shape_size(shape)), S(0));
  return leaf(std::move(shape), std::move(v), requires_grad);
}

template <typename S>
TensorT<S> TensorT<S>::full(Shape shape, S value, bool requires_grad) {
  std::vector<S> v(static_cast<std::size_t>(shape_size(shape)), value);
  return leaf(std::move(shape), std::move(v), requires_grad);
}

template <typename S>
std::vector<S>& TensorT<S>::grad_ref() {
  return grad_of(*node_);
}

template <typename S>
void TensorT<S>::zero_grad() {
  std::fill(node_->grad.begin(), node_->grad.end(), S(0));
}

template <typename S>
S TensorT<S>::item() const {
  if (!node_->shape.empty()) throw std::invalid_argument("item: tensor is not rank-0");
  return node_->values[0];
}

template <typename S>
S TensorT<S>::at(int r, int c) const {
  if (rank() != 2) throw std::invalid_argument("at: tensor is not rank-2");
  return node_->values[static_cast<std::size_t>(r) * node_->shape[1] + c];
}

// ---- TapeT ----

template <typename S>
void TapeT<S>::backward(const TensorT<S>& root) {
  if (!root.defined() || root.rank() != 0) {
    throw std::invalid_argument("backward: root must be a rank-0 tensor");
  }
  if (entries_.empty()) throw std::runtime_error("backward: tape is empty");
  // Intermediate grads belong to this sweep; leaf grads persist and accumulate.
  for (auto& e : entries_) {
    if (!e.out->grad.empty()) std::fill(e.out->grad.begin(), e.out->grad.end(), S(0));
  }
  grad_of(*root.node())[0] = S(1);
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) it->fn();
}

// ---- elementwise binary ----

template <typename S>
TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b) {
  check_same_shape(a, b, "add");
  std::vector<S> v(a.values().size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.values()[i] + b.values()[i];
  ensure_finite(v, "add");
  auto out = TensorT<S>::leaf(a.shape(), std::move(v), a.requires_grad() || b.requires_grad());
  auto an = a.node(), bn = b.node(), on = out.node();
  record_if_needed(out, [an, bn, on] {
    if (on->grad.empty()) return;
    if (an->requires_grad) {
      auto& g = grad_of(*an);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += on->grad[i];
    }
    if (bn->requires_grad) {
      auto& g = grad_of(*bn);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += on->grad[i];
    }
  });
  return out;
}

template <typename S>
TensorT<S> sub(const TensorT<S>& a, const TensorT<S>& b) {
  check_same_shape(a, b, "sub");
  std::vector<S> v(a.values().size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.values()[i] - b.values()[i];
  ensure_finite(v, "sub");
  auto out = TensorT<S>::leaf(a.shape(), std::move(v), a.requires_grad() || b.requires_grad());
  auto an = a.node(), bn = b.node(), on = out.node();
  record_if_needed(out, [an, bn, on] {
    if (on->grad.empty()) return;
    if (an->requires_grad) {
      auto& g = grad_of(*an);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += on->grad[i];
    }
    if (bn->requires_grad) {
      auto& g = grad_of(*bn);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= on->grad[i];
    }
  });
  return out;
}

template <typename S>
TensorT<S> mul(const TensorT<S>& a, const TensorT<S>& b) {
  check_same_shape(a, b, "mul");
  std::vector<S> v(a.values().size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.values()[i] * b.values()[i];
  ensure_finite(v, "mul");
  auto out = TensorT<S>::leaf(a.shape(), std::move(v), a.requires_grad() || b.requires_grad());
  auto an = a.node(), bn = b.node(), on = out.node();
  record_if_needed(out, [an, bn, on] {
    if (on->grad.empty()) return;
    if (an->requires_grad) {
      auto& g = grad_of(*an);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += on->grad[i] * bn->values[i];
    }
    if (bn->requires_grad) {
      auto& g = grad_of(*bn);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += on->grad[i] * an->values[i];
    }
  });
  return out;
}

template <typename S>
TensorT<S> matmul(const TensorT<S>& a, const TensorT<S>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0]) {
    throw std::invalid_argument("matmul: incompatible shapes " + shape_str(a.shape()) + " x " +
                                shape_str(b.shape()));
  }
  const int n = a.shape()[0], k = a.shape()[1], m = b.shape()[1];
  std::vector<S> v(static_cast<std::size_t>(n) * m, S(0));
  const auto& av = a.values();
  const auto& bv = b.values();
  for (int i = 0; i < n; ++i) {
    for (int p = 0; p < k; ++p) {
      const S aip = av[static_cast<std::size_t>(i) * k + p];
      for (int j = 0; j < m; ++j) v[static_cast<std::size_t>(i) * m + j] += aip * bv[static_cast<std::size_t>(p) * m + j];
    }
  }
  ensure_finite(v, "matmul");
  auto out = TensorT<S>::leaf({n, m}, std::move(v), a.requires_grad() || b.requires_grad());
  auto an = a.node(), bn = b.node(), on = out.node();
  record_if_needed(out, [an, bn, on, n, k, m] {
    if (on->grad.empty()) return;
    const auto& g = on->grad;
    if (an->requires_grad) {
      auto& ga = grad_of(*an);  // dA += dC * B^T
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) {
          const S gij = g[static_cast<std::size_t>(i) * m + j];
          for (int p = 0; p < k; ++p)
            ga[static_cast<std::size_t>(i) * k + p] += gij * bn->values[static_cast<std::size_t>(p) * m + j];
        }
    }
    if (bn->requires_grad) {
      auto& gb = grad_of(*bn);  // dB += A^T * dC
      for (int i = 0; i < n; ++i)
        for (int p = 0; p < k; ++p) {
          const S aip = an->values[static_cast<std::size_t>(i) * k + p];
          for (int j = 0; j < m; ++j)
            gb[static_cast<std::size_t>(p) * m + j] += aip * g[static_cast<std::size_t>(i) * m + j];
        }
    }
  });
  return out;
}

// ---- scalar-constant ops ----

template <typename S>
TensorT<S> add_scalar(const TensorT<S>& a, S c) {
  std::vector<S> v(a.values().size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.values()[i] + c;
  ensure_finite(v, "add_scalar");
  auto out = TensorT<S>::leaf(a.shape(), std::move(v), a.requires_grad());
  auto an = a.node(), on = out.node();
  record_if_needed(out, [an, on] {
    if (on->grad.empty()) return;
    auto& g = grad_of(*an);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += on->grad[i];
  });
  return out;
}

template <typename S>
TensorT<S> mul_scalar(const TensorT<S>& a, S c) {
  std::vector<S> v(a.values().size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.values()[i] * c;
  ensure_finite(v, "mul_scalar");
  auto out = TensorT<S>::leaf(a.shape(), std::move(v), a.requires_grad());
  auto an = a.node(), on = out.node();
  record_if_needed(out, [an, on, c] {
    if (on->grad.empty()) return;
    auto& g = grad_of(*an);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += on->grad[i] * c;
  });
  return out;
}

template <typename S>
TensorT<S> neg(const TensorT<S>& a) {
  return mul_scalar(a, S(-1));
}

template <typename S>
TensorT<S> scale(const TensorT<S>& a, const TensorT<S>& s) {
  if (s.rank() != 0) throw std::invalid_argument("scale: scale factor must be rank-0");
  const S c = s.values()[0];
  std::vector<S> v(a.values().size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.values()[i] * c;
  ensure_finite(v, "scale");
  auto out = TensorT<S>::leaf(a.shape(), std::move(v), a.requires_grad() || s.requires_grad());
  auto an = a.node(), sn = s.node(), on = out.node();
  record_if_needed(out, [an, sn, on] {
    if (on->grad.empty()) return;
    if (an->requires_grad) {
      auto& g = grad_of(*an);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += on->grad[i] * sn->values[0];
    }
    if (sn->requires_grad) {
      S acc = 0;
      for (std::size_t i = 0; i < on->grad.size(); ++i) acc += on->grad[i] * an->values[i];
      grad_of(*sn)[0] += acc;
    }
  });
  return out;
}

// ---- elementwise unary ----

template <typename S>
TensorT<S> relu(const TensorT<S>& a) {
  std::vector<S> v(a.values().size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.values()[i] > S(0) ? a.values()[i] : S(0);
  auto out = TensorT<S>::leaf(a.shape(), std::move(v), a.requires_grad());
  auto an = a.node(), on = out.node();
  record_if_needed(out, [an, on] {
    if (on->grad.empty()) return;
    auto& g = grad_of(*an);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (an->values[i] > S(0)) g[i] += on->grad[i];
  });
  return out;
}

template <typename S>
TensorT<S> log(const TensorT<S>& a) {
  std::vector<S> v(a.values().size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::log(a.values()[i]);
  ensure_finite(v, "log");
  auto out = TensorT<S>::leaf(a.shape(), std::move(v), a.requires_grad());
  auto an = a.node(), on = out.node();
  record_if_needed(out, [an, on] {
    if (on->grad.empty()) return;
    auto& g = grad_of(*an);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += on->grad[i] / an->values[i];
  });
  return out;
}

template <typename S>
TensorT<S> exp(const TensorT<S>& a) {
  std::vector<S> v(a.values().size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::exp(a.values()[i]);
  ensure_finite(v, "exp");
  auto out = TensorT<S>::leaf(a.shape(), std::move(v), a.requires_grad());
  auto an = a.node(), on = out.node();
  record_if_needed(out, [an, on] {
    if (on->grad.empty()) return;
    auto& g = grad_of(*an);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += on->grad[i] * on->values[i];
  });
  return out;
}

template <typename S>
TensorT<S> softplus(const TensorT<S>& a) {
  std::vector<S> v(a.values().size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const S x = a.values()[i];
    // log(1+e^x) = max(x,0) + log1p(e^{-|x|})
    v[i] = std::max(x, S(0)) + S(std::log1p(std::exp(-std::abs(static_cast<double>(x)))));
  }
  ensure_finite(v, "softplus");
  auto out = TensorT<S>::leaf(a.shape(), std::move(v), a.requires_grad());
  auto an = a.node(), on = out.node();
  record_if_needed(out, [an, on] {
    if (on->grad.empty()) return;
    auto& g = grad_of(*an);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double x = static_cast<double>(an->values[i]);
      g[i] += on->grad[i] * S(1.0 / (1.0 + std::exp(-x)));
    }
  });
  return out;
}

// ---- softmax family ----
// Lanes run along `axis`; rank-1 tensors have a single lane at axis 0.

namespace {

template <typename S>
void check_axis(const TensorT<S>& a, int axis, const char* op) {
  if (a.rank() == 1) {
    if (axis != 0) throw std::invalid_argument(std::string(op) + ": axis out of range for rank-1");
  } else if (a.rank() == 2) {
    if (axis != 0 && axis != 1) throw std::invalid_argument(std::string(op) + ": axis out of range for rank-2");
  } else {
    throw std::invalid_argument(std::string(op) + ": rank must be 1 or 2");
  }
}

struct LaneLayout {
  std::size_t lanes;   // number of independent lanes
  std::size_t len;     // elements per lane
  std::size_t stride;  // element stride within a lane
  std::size_t base;    // stride between lane starts
};

template <typename S>
LaneLayout lane_layout(const TensorT<S>& a, int axis) {
  if (a.rank() == 1) return {1, static_cast<std::size_t>(a.shape()[0]), 1, 0};
  const std::size_t n = static_cast<std::size_t>(a.shape()[0]);
  const std::size_t m = static_cast<std::size_t>(a.shape()[1]);
  if (axis == 1) return {n, m, 1, m};  // lanes are rows
  return {m, n, m, 1};                 // lanes are columns
}

}  // namespace

template <typename S>
TensorT<S> log_softmax(const TensorT<S>& a, int axis) {
  check_axis(a, axis, "log_softmax");
  const LaneLayout L = lane_layout(a, axis);
  std::vector<S> v(a.values().size());
  const auto& av = a.values();
  for (std::size_t l = 0; l < L.lanes; ++l) {
    const std::size_t o = l * L.base;
    S mx = av[o];
    for (std::size_t j = 1; j < L.len; ++j) mx = std::max(mx, av[o + j * L.stride]);
    S acc = 0;
    for (std::size_t j = 0; j < L.len; ++j) acc += std::exp(av[o + j * L.stride] - mx);
    const S lse = mx + std::log(acc);
    for (std::size_t j = 0; j < L.len; ++j) v[o + j * L.stride] = av[o + j * L.stride] - lse;
  }
  ensure_finite(v, "log_softmax");
  auto out = TensorT<S>::leaf(a.shape(), std::move(v), a.requires_grad());
  auto an = a.node(), on = out.node();
  record_if_needed(out, [an, on, L] {
    if (on->grad.empty()) return;
    auto& g = grad_of(*an);
    for (std::size_t l = 0; l < L.lanes; ++l) {
      const std::size_t o = l * L.base;
      S gsum = 0;
      for (std::size_t j = 0; j < L.len; ++j) gsum += on->grad[o + j * L.stride];
      for (std::size_t j = 0; j < L.len; ++j) {
        const std::size_t idx = o + j * L.stride;
        g[idx] += on->grad[idx] - std::exp(on->values[idx]) * gsum;
      }
    }
  });
  return out;
}

template <typename S>
TensorT<S> softmax(const TensorT<S>& a, int axis) {
  check_axis(a, axis, "softmax");
  const LaneLayout L = lane_layout(a, axis);
  std::vector<S> v(a.values().size());
  const auto& av = a.values();
  for (std::size_t l = 0; l < L.lanes; ++l) {
    const std::size_t o = l * L.base;
    S mx = av[o];
    for (std::size_t j = 1; j < L.len; ++j) mx = std::max(mx, av[o + j * L.stride]);
    S acc = 0;
    for (std::size_t j = 0; j < L.len; ++j) {
      const std::size_t idx = o + j * L.stride;
      v[idx] = std::exp(av[idx] - mx);
      acc += v[idx];
    }
    for (std::size_t j = 0; j < L.len; ++j) v[o + j * L.stride] /= acc;
  }
  ensure_finite(v, "softmax");
  auto out = TensorT<S>::leaf(a.shape(), std::move(v), a.requires_grad());
  auto an = a.node(), on = out.node();
  record_if_needed(out, [an, on, L] {
    if (on->grad.empty()) return;
    auto& g = grad_of(*an);
    for (std::size_t l = 0; l < L.lanes; ++l) {
      const std::size_t o = l * L.base;
      S dot = 0;
      for (std::size_t j = 0; j < L.len; ++j) {
        const std::size_t idx = o + j * L.stride;
        dot += on->grad[idx] * on->values[idx];
      }
      for (std::size_t j = 0; j < L.len; ++j) {
        const std::size_t idx = o + j * L.stride;
        g[idx] += on->values[idx] * (on->grad[idx] - dot);
      }
    }
  });
  return out;
}

template <typename S>
TensorT<S> logsumexp(const TensorT<S>& a, int axis) {
  check_axis(a, axis, "logsumexp");
  const LaneLayout L = lane_layout(a, axis);
  std::vector<S> v(L.lanes);
  const auto& av = a.values();
  for (std::size_t l = 0; l < L.lanes; ++l) {
    const std::size_t o = l * L.base;
    S mx = av[o];
    for (std::size_t j = 1; j < L.len; ++j) mx = std::max(mx, av[o + j * L.stride]);
    S acc = 0;
    for (std::size_t j = 0; j < L.len; ++j) acc += std::exp(av[o + j * L.stride] - mx);
    v[l] = mx + std::log(acc);
  }
  ensure_finite(v, "logsumexp");
  Shape out_shape;
  if (a.rank() == 2) out_shape = {static_cast<int>(L.lanes)};
  auto out = TensorT<S>::leaf(out_shape, std::move(v), a.requires_grad());
  auto an = a.node(), on = out.node();
  record_if_needed(out, [an, on, L] {
    if (on->grad.empty()) return;
    auto& g = grad_of(*an);
    for (std::size_t l = 0; l < L.lanes; ++l) {
      const std::size_t o = l * L.base;
      const S gl = on->grad[l];
      if (gl == S(0)) continue;
      for (std::size_t j = 0; j < L.len; ++j) {
        const std::size_t idx = o + j * L.stride;
        g[idx] += gl * std::exp(an->values[idx] - on->values[l]);
      }
    }
  });
  return out;
}

// ---- reductions ----

template <typename S>
TensorT<S> sum(const TensorT<S>& a) {
  S acc = 0;
  for (S x : a.values()) acc += x;
  ensure_finite(std::vector<S>{acc}, "sum");
  auto out = TensorT<S>::leaf({}, {acc}, a.requires_grad());
  auto an = a.node(), on = out.node();
  record_if_needed(out, [an, on] {
    if (on->grad.empty()) return;
    auto& g = grad_of(*an);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += on->grad[0];
  });
  return out;
}

template <typename S>
TensorT<S> sum_axis(const TensorT<S>& a, int axis) {
  if (a.rank() != 2) throw std::invalid_argument("sum_axis: rank must be 2");
  check_axis(a, axis, "sum_axis");
  const LaneLayout L = lane_layout(a, axis);
  std::vector<S> v(L.lanes, S(0));
  for (std::size_t l = 0; l < L.lanes; ++l) {
    const std::size_t o = l * L.base;
    for (std::size_t j = 0; j < L.len; ++j) v[l] += a.values()[o + j * L.stride];
  }
  ensure_finite(v, "sum_axis");
  auto out = TensorT<S>::leaf({static_cast<int>(L.lanes)}, std::move(v), a.requires_grad());
  auto an = a.node(), on = out.node();
  record_if_needed(out, [an, on, L] {
    if (on->grad.empty()) return;
    auto& g = grad_of(*an);
    for (std::size_t l = 0; l < L.lanes; ++l) {
      const std::size_t o = l * L.base;
      for (std::size_t j = 0; j < L.len; ++j) g[o + j * L.stride] += on->grad[l];
    }
  });
  return out;
}

template <typename S>
TensorT<S> mean(const TensorT<S>& a) {
  if (a.size() == 0) throw std::invalid_argument("mean: empty tensor");
  const S inv = S(1) / static_cast<S>(a.size());
  return mul_scalar(sum(a), inv);
}

// ---- shape ops ----

template <typename S>
TensorT<S> concat(const std::vector<TensorT<S>>& parts, int axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  const int rank = parts[0].rank();
  if (rank == 1) {
    if (axis != 0) throw std::invalid_argument("concat: axis out of range for rank-1");
  } else if (rank == 2) {
    if (axis != 0 && axis != 1) throw std::invalid_argument("concat: axis out of range for rank-2");
  } else {
    throw std::invalid_argument("concat: rank must be 1 or 2");
  }
  bool req = false;
  for (const auto& p : parts) {
    if (p.rank() != rank) throw std::invalid_argument("concat: rank mismatch");
    req = req || p.requires_grad();
  }

  if (rank == 1 || axis == 0) {
    // stack along the leading dimension
    int other = rank == 2 ? parts[0].shape()[1] : 0;
    int total = 0;
    for (const auto& p : parts) {
      if (rank == 2 && p.shape()[1] != other) throw std::invalid_argument("concat: width mismatch");
      total += p.shape()[0];
    }
    std::vector<S> v;
    v.reserve(rank == 2 ? static_cast<std::size_t>(total) * other : total);
    for (const auto& p : parts) v.insert(v.end(), p.values().begin(), p.values().end());
    Shape shape = rank == 2 ? Shape{total, other} : Shape{total};
    auto out = TensorT<S>::leaf(std::move(shape), std::move(v), req);
    std::vector<std::shared_ptr<TensorNode<S>>> nodes;
    for (const auto& p : parts) nodes.push_back(p.node());
    auto on = out.node();
    record_if_needed(out, [nodes, on] {
      if (on->grad.empty()) return;
      std::size_t off = 0;
      for (auto& pn : nodes) {
        if (pn->requires_grad) {
          auto& g = grad_of(*pn);
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += on->grad[off + i];
        }
        off += pn->values.size();
      }
    });
    return out;
  }

  // rank-2, axis == 1: concat columns
  const int n = parts[0].shape()[0];
  int total = 0;
  for (const auto& p : parts) {
    if (p.shape()[0] != n) throw std::invalid_argument("concat: row-count mismatch");
    total += p.shape()[1];
  }
  std::vector<S> v(static_cast<std::size_t>(n) * total);
  std::size_t col_off = 0;
  for (const auto& p : parts) {
    const int m = p.shape()[1];
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j)
        v[static_cast<std::size_t>(i) * total + col_off + j] = p.values()[static_cast<std::size_t>(i) * m + j];
    col_off += m;
  }
  auto out = TensorT<S>::leaf({n, total}, std::move(v), req);
  std::vector<std::shared_ptr<TensorNode<S>>> nodes;
  for (const auto& p : parts) nodes.push_back(p.node());
  auto on = out.node();
  record_if_needed(out, [nodes, on, n, total] {
    if (on->grad.empty()) return;
    std::size_t col_off = 0;
    for (auto& pn : nodes) {
      const int m = pn->shape[1];
      if (pn->requires_grad) {
        auto& g = grad_of(*pn);
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < m; ++j)
            g[static_cast<std::size_t>(i) * m + j] += on->grad[static_cast<std::size_t>(i) * total + col_off + j];
      }
      col_off += m;
    }
  });
  return out;
}

template <typename S>
TensorT<S> gather(const TensorT<S>& mat, const std::vector<int>& indices) {
  if (mat.rank() != 2) throw std::invalid_argument("gather: rank must be 2");
  const int n = mat.shape()[0], m = mat.shape()[1];
  if (static_cast<int>(indices.size()) != n) throw std::invalid_argument("gather: index count mismatch");
  std::vector<S> v(n);
  for (int i = 0; i < n; ++i) {
    if (indices[i] < 0 || indices[i] >= m) throw std::invalid_argument("gather: index out of range");
    v[i] = mat.values()[static_cast<std::size_t>(i) * m + indices[i]];
  }
  auto out = TensorT<S>::leaf({n}, std::move(v), mat.requires_grad());
  auto an = mat.node(), on = out.node();
  record_if_needed(out, [an, on, indices, m] {
    if (on->grad.empty()) return;
    auto& g = grad_of(*an);
    for (std::size_t i = 0; i < on->grad.size(); ++i) g[i * m + indices[i]] += on->grad[i];
  });
  return out;
}

template <typename S>
TensorT<S> index(const TensorT<S>& v, int k) {
  if (v.rank() != 1) throw std::invalid_argument("index: rank must be 1");
  if (k < 0 || k >= v.shape()[0]) throw std::invalid_argument("index: out of range");
  auto out = TensorT<S>::leaf({}, {v.values()[k]}, v.requires_grad());
  auto an = v.node(), on = out.node();
  record_if_needed(out, [an, on, k] {
    if (on->grad.empty()) return;
    grad_of(*an)[k] += on->grad[0];
  });
  return out;
}

template <typename S>
TensorT<S> add_bias(const TensorT<S>& mat, const TensorT<S>& bias) {
  if (mat.rank() != 2 || bias.rank() != 1 || bias.shape()[0] != mat.shape()[1]) {
    throw std::invalid_argument("add_bias: expected [n,m] + [m]");
  }
  const int n = mat.shape()[0], m = mat.shape()[1];
  std::vector<S> v(mat.values().size());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j)
      v[static_cast<std::size_t>(i) * m + j] = mat.values()[static_cast<std::size_t>(i) * m + j] + bias.values()[j];
  ensure_finite(v, "add_bias");
  auto out = TensorT<S>::leaf(mat.shape(), std::move(v), mat.requires_grad() || bias.requires_grad());
  auto an = mat.node(), bn = bias.node(), on = out.node();
  record_if_needed(out, [an, bn, on, n, m] {
    if (on->grad.empty()) return;
    if (an->requires_grad) {
      auto& g = grad_of(*an);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += on->grad[i];
    }
    if (bn->requires_grad) {
      auto& g = grad_of(*bn);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) g[j] += on->grad[static_cast<std::size_t>(i) * m + j];
    }
  });
  return out;
}

template <typename S>
TensorT<S> dropout(const TensorT<S>& a, const TensorT<S>& mask, S keep_prob) {
  check_same_shape(a, mask, "dropout");
  if (mask.requires_grad()) throw std::invalid_argument("dropout: mask must not require grad");
  if (!(keep_prob > S(0))) throw std::invalid_argument("dropout: keep_prob must be positive");
  const S inv = S(1) / keep_prob;
  std::vector<S> v(a.values().size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.values()[i] * mask.values()[i] * inv;
  ensure_finite(v, "dropout");
  auto out = TensorT<S>::leaf(a.shape(), std::move(v), a.requires_grad());
  auto an = a.node(), mn = mask.node(), on = out.node();
  record_if_needed(out, [an, mn, on, inv] {
    if (on->grad.empty()) return;
    auto& g = grad_of(*an);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += on->grad[i] * mn->values[i] * inv;
  });
  return out;
}

template <typename S>
TensorT<S> normalize_rows(const TensorT<S>& mat, S eps) {
  if (mat.rank() != 2) throw std::invalid_argument("normalize_rows: rank must be 2");
  const int n = mat.shape()[0], m = mat.shape()[1];
  if (m < 1) throw std::invalid_argument("normalize_rows: empty rows");
  std::vector<S> v(mat.values().size());
  std::vector<S> inv_std(n);
  for (int i = 0; i < n; ++i) {
    const std::size_t o = static_cast<std::size_t>(i) * m;
    S mu = 0;
    for (int j = 0; j < m; ++j) mu += mat.values()[o + j];
    mu /= static_cast<S>(m);
    S var = 0;
    for (int j = 0; j < m; ++j) {
      const S d = mat.values()[o + j] - mu;
      var += d * d;
    }
    var /= static_cast<S>(m);
    inv_std[i] = S(1) / std::sqrt(var + eps);
    for (int j = 0; j < m; ++j) v[o + j] = (mat.values()[o + j] - mu) * inv_std[i];
  }
  ensure_finite(v, "normalize_rows");
  auto out = TensorT<S>::leaf(mat.shape(), std::move(v), mat.requires_grad());
  auto an = mat.node(), on = out.node();
  record_if_needed(out, [an, on, n, m, inv_std] {
    if (on->grad.empty()) return;
    auto& g = grad_of(*an);
    for (int i = 0; i < n; ++i) {
      const std::size_t o = static_cast<std::size_t>(i) * m;
      S gmean = 0, gydot = 0;
      for (int j = 0; j < m; ++j) {
        gmean += on->grad[o + j];
        gydot += on->grad[o + j] * on->values[o + j];
      }
      gmean /= static_cast<S>(m);
      gydot /= static_cast<S>(m);
      for (int j = 0; j < m; ++j) {
        g[o + j] += inv_std[i] * (on->grad[o + j] - gmean - on->values[o + j] * gydot);
      }
    }
  });
  return out;
}

// ---- finite differences ----

template <typename S>
double finite_difference_check(const std::function<TensorT<S>(const TensorT<S>&)>& f,
                               const TensorT<S>& x, double h) {
  if (!(h > 0)) throw std::invalid_argument("finite_difference_check: h must be positive");

  auto eval = [&f](const TensorT<S>& p) {
    TensorT<S> y = f(p);
    if (y.rank() != 0) throw std::invalid_argument("finite_difference_check: f must return rank-0");
    return static_cast<double>(y.item());
  };

  // determinism probe: two evaluations at x must agree bitwise
  {
    TensorT<S> p = TensorT<S>::leaf(x.shape(), x.values(), false);
    const double y0 = eval(p);
    const double y1 = eval(p);
    if (y0 != y1) throw std::runtime_error("finite_difference_check: f is not deterministic");
  }

  std::vector<S> analytic;
  {
    TapeT<S> tape;
    TensorT<S> xg = TensorT<S>::leaf(x.shape(), x.values(), true);
    TensorT<S> y = f(xg);
    if (y.rank() != 0) throw std::invalid_argument("finite_difference_check: f must return rank-0");
    tape.backward(y);
    analytic = xg.grad_ref();
  }

  double max_err = 0.0;
  std::vector<S> base = x.values();
  for (std::size_t i = 0; i < base.size(); ++i) {
    std::vector<S> vp = base, vm = base;
    vp[i] += S(h);
    vm[i] -= S(h);
    const double yp = eval(TensorT<S>::leaf(x.shape(), vp, false));
    const double ym = eval(TensorT<S>::leaf(x.shape(), vm, false));
    const double fd = (yp - ym) / (2.0 * h);
    const double a = static_cast<double>(analytic[i]);
    const double err = std::abs(a - fd) / std::max(1.0, std::abs(a));
    max_err = std::max(max_err, err);
  }
  return max_err;
}

// ---- explicit instantiations ----

#define DBSN_INSTANTIATE(S)                                                                        \
  template class TensorT<S>;                                                                       \
  template class TapeT<S>;                                                                         \
  template TensorT<S> add(const TensorT<S>&, const TensorT<S>&);                                   \
  template TensorT<S> sub(const TensorT<S>&, const TensorT<S>&);                                   \
  template TensorT<S> mul(const TensorT<S>&, const TensorT<S>&);                                   \
  template TensorT<S> matmul(const TensorT<S>&, const TensorT<S>&);                                \
  template TensorT<S> add_scalar(const TensorT<S>&, S);                                            \
  template TensorT<S> mul_scalar(const TensorT<S>&, S);                                            \
  template TensorT<S> neg(const TensorT<S>&);                                                      \
  template TensorT<S> scale(const TensorT<S>&, const TensorT<S>&);                                 \
  template TensorT<S> relu(const TensorT<S>&);                                                     \
  template TensorT<S> log(const TensorT<S>&);                                                      \
  template TensorT<S> exp(const TensorT<S>&);                                                      \
  template TensorT<S> softplus(const TensorT<S>&);                                                 \
  template TensorT<S> softmax(const TensorT<S>&, int);                                             \
  template TensorT<S> log_softmax(const TensorT<S>&, int);                                         \
  template TensorT<S> logsumexp(const TensorT<S>&, int);                                           \
  template TensorT<S> sum(const TensorT<S>&);                                                      \
  template TensorT<S> sum_axis(const TensorT<S>&, int);                                            \
  template TensorT<S> mean(const TensorT<S>&);                                                     \
  template TensorT<S> concat(const std::vector<TensorT<S>>&, int);                                 \
  template TensorT<S> gather(const TensorT<S>&, const std::vector<int>&);                          \
  template TensorT<S> index(const TensorT<S>&, int);                                               \
  template TensorT<S> add_bias(const TensorT<S>&, const TensorT<S>&);                              \
  template TensorT<S> dropout(const TensorT<S>&, const TensorT<S>&, S);                            \
  template TensorT<S> normalize_rows(const TensorT<S>&, S);                                        \
  template double finite_difference_check(const std::function<TensorT<S>(const TensorT<S>&)>&,    \
                                          const TensorT<S>&, double);

DBSN_INSTANTIATE(double)
DBSN_INSTANTIATE(float)

#undef DBSN_INSTANTIATE

}  // namespace dbsn
