#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace dbsn {

// Dense row-major tensor with reverse-mode autodiff on an explicit tape.
//
// Rank 0 is a scalar, rank 1 a vector, rank 2 a matrix; nothing here needs
// more. There is no implicit broadcasting: mixed-shape arithmetic goes through
// explicit ops (add_scalar, scale, add_bias, ...) so shape bugs fail loudly.
// Scalar type is a template parameter; double is the project default, float is
// instantiated for reduced-precision runs.

using Shape = std::vector<int>;

template <typename S>
struct TensorNode {
  Shape shape;
  std::vector<S> values;
  std::vector<S> grad;  // empty means "all zeros, not yet touched"
  bool requires_grad = false;
};

template <typename S>
class TapeT;

template <typename S>
class TensorT {
 public:
  TensorT() = default;

  static TensorT leaf(Shape shape, std::vector<S> values, bool requires_grad = false);
  static TensorT scalar(S value, bool requires_grad = false);
  static TensorT zeros(Shape shape, bool requires_grad = false);
  static TensorT full(Shape shape, S value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  std::int64_t size() const { return static_cast<std::int64_t>(node_->values.size()); }

  bool requires_grad() const { return node_->requires_grad; }

  const std::vector<S>& values() const { return node_->values; }
  std::vector<S>& values() { return node_->values; }  // mutate outside the tape only

  // grad view; empty vector means the gradient is identically zero
  const std::vector<S>& grad() const { return node_->grad; }
  std::vector<S>& grad_ref();  // allocates zeros on first access
  void zero_grad();

  S item() const;  // rank-0 only

  // element accessors for rank-2 tensors
  S at(int r, int c) const;

  std::shared_ptr<TensorNode<S>> node() const { return node_; }

 private:
  explicit TensorT(std::shared_ptr<TensorNode<S>> n) : node_(std::move(n)) {}
  std::shared_ptr<TensorNode<S>> node_;
};

// Ordered record of primitive operations. Constructing a tape activates it for
// the current thread (ops record themselves while any input requires grad);
// destruction restores the previously active tape. One tape is confined to one
// thread; independent tapes on other threads do not interact.
template <typename S>
class TapeT {
 public:
  TapeT() : prev_(tls_active) { tls_active = this; }
  ~TapeT() { tls_active = prev_; }
  TapeT(const TapeT&) = delete;
  TapeT& operator=(const TapeT&) = delete;

  static TapeT* active() { return tls_active; }

  void record(std::shared_ptr<TensorNode<S>> out, std::function<void()> backward_fn) {
    entries_.push_back(Entry{std::move(out), std::move(backward_fn)});
  }

  std::size_t size() const { return entries_.size(); }
  void clear() { entries_.clear(); }

  // Reverse sweep from a scalar root. Grads of recorded intermediates are
  // zeroed first, so repeated calls add the same leaf contribution again;
  // leaves are never auto-zeroed (the trainer resets them each step).
  void backward(const TensorT<S>& root);

 private:
  struct Entry {
    std::shared_ptr<TensorNode<S>> out;
    std::function<void()> fn;
  };
  std::vector<Entry> entries_;
  TapeT* prev_ = nullptr;
  inline static thread_local TapeT* tls_active = nullptr;
};

using Tensor = TensorT<double>;
using Tape = TapeT<double>;

// ---- primitive operations ----
// Each op validates shapes, rejects non-finite outputs, and records its
// backward closure on the active tape when any input requires grad.

template <typename S> TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b);
template <typename S> TensorT<S> sub(const TensorT<S>& a, const TensorT<S>& b);
template <typename S> TensorT<S> mul(const TensorT<S>& a, const TensorT<S>& b);
template <typename S> TensorT<S> matmul(const TensorT<S>& a, const TensorT<S>& b);

template <typename S> TensorT<S> add_scalar(const TensorT<S>& a, S c);
template <typename S> TensorT<S> mul_scalar(const TensorT<S>& a, S c);
template <typename S> TensorT<S> neg(const TensorT<S>& a);

// tensor times rank-0 tensor (gradient flows into both)
template <typename S> TensorT<S> scale(const TensorT<S>& a, const TensorT<S>& s);

template <typename S> TensorT<S> relu(const TensorT<S>& a);
template <typename S> TensorT<S> log(const TensorT<S>& a);
template <typename S> TensorT<S> exp(const TensorT<S>& a);
template <typename S> TensorT<S> softplus(const TensorT<S>& a);

template <typename S> TensorT<S> softmax(const TensorT<S>& a, int axis);
template <typename S> TensorT<S> log_softmax(const TensorT<S>& a, int axis);
template <typename S> TensorT<S> logsumexp(const TensorT<S>& a, int axis);

template <typename S> TensorT<S> sum(const TensorT<S>& a);
template <typename S> TensorT<S> sum_axis(const TensorT<S>& a, int axis);
template <typename S> TensorT<S> mean(const TensorT<S>& a);

template <typename S> TensorT<S> concat(const std::vector<TensorT<S>>& parts, int axis);

// per-row pick: out[i] = mat[i, indices[i]]
template <typename S> TensorT<S> gather(const TensorT<S>& mat, const std::vector<int>& indices);
// single element of a rank-1 tensor as a rank-0 tensor
template <typename S> TensorT<S> index(const TensorT<S>& v, int k);

// [n,m] + [m], bias broadcast down rows
template <typename S> TensorT<S> add_bias(const TensorT<S>& mat, const TensorT<S>& bias);

// mask application: a .* mask / keep_prob; mask is a non-differentiable constant
template <typename S> TensorT<S> dropout(const TensorT<S>& a, const TensorT<S>& mask, S keep_prob);

// per-row standardization to zero mean / unit variance over features
template <typename S> TensorT<S> normalize_rows(const TensorT<S>& mat, S eps);

// Max over coordinates of |analytic - central difference| / max(1, |analytic|).
// f must map a tensor to a rank-0 tensor and be deterministic; this is checked
// by evaluating f twice at x and comparing bitwise.
template <typename S>
double finite_difference_check(const std::function<TensorT<S>(const TensorT<S>&)>& f,
                               const TensorT<S>& x, double h);

}  // namespace dbsn
