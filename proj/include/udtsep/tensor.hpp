#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "udtsep/rng.hpp"

namespace udtsep {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool requires_grad = false;  // leaf that wants a gradient
  bool tracked = false;        // produced by a recorded operation
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
  }
};

}  // namespace detail

// Dense row-major tensor participating in reverse-mode differentiation.
// Copies are handles to the same storage; operations on tensors whose
// inputs neither require nor carry gradients record nothing.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<T> values);

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, T v);
  // leaf with requires_grad set
  static Tensor param(Shape shape, std::vector<T> values);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t size() const;

  std::span<const T> values() const;
  std::span<T> values();
  std::span<const T> grad() const;

  bool requires_grad() const;
  void set_requires_grad(bool b);
  void zero_grad();

  // scalar read; throws unless size() == 1
  T item() const;

  // storage identity, used to deduplicate shared parameter blocks
  const void* id() const { return node_.get(); }

  template <typename U>
  friend std::shared_ptr<detail::Node<U>> node_of(const Tensor<U>& t);
  template <typename U>
  friend Tensor<U> from_node(std::shared_ptr<detail::Node<U>> n);

 private:
  std::shared_ptr<detail::Node<T>> node_;
};

template <typename U>
std::shared_ptr<detail::Node<U>> node_of(const Tensor<U>& t) {
  return t.node_;
}

template <typename U>
Tensor<U> from_node(std::shared_ptr<detail::Node<U>> n) {
  Tensor<U> t;
  t.node_ = std::move(n);
  return t;
}

namespace detail {

// Builds an op result node. Parents and the backward rule are dropped when
// no input is connected to a gradient-requiring leaf.
template <typename T>
Tensor<T> make_op(Shape shape, std::vector<T> value,
                  std::vector<std::shared_ptr<Node<T>>> parents,
                  std::function<void(Node<T>&)> backward_fn);

template <typename T>
void accumulate(Node<T>& dst, const std::vector<T>& delta);

}  // namespace detail

// ---- primitive operations -------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scale(const Tensor<T>& a, T c);

// elementwise ln(1 + e^x), stable for large |x|
template <typename T>
Tensor<T> softplus(const Tensor<T>& x);

// mean over all elements of (a - b)^2; scalar
template <typename T>
Tensor<T> mse(const Tensor<T>& a, const Tensor<T>& b);

// mean over all elements of a^2; scalar
template <typename T>
Tensor<T> l2_sq(const Tensor<T>& a);

// multiply by a fixed mask (dropout); mask is constant w.r.t. gradients
template <typename T>
Tensor<T> apply_mask(const Tensor<T>& x, std::vector<T> mask);

// i.i.d. N(0,1) values; constant w.r.t. differentiation
template <typename T>
Tensor<T> gaussian_sample(const Shape& shape, SeededRng& rng);

// Populates grads of every gradient-requiring leaf reachable from `loss`.
// Gradients accumulate additively; callers zero them between steps.
template <typename T>
void backward(const Tensor<T>& loss);

// Max over checked coordinates of |analytic - central difference| /
// max(|analytic|, |fd|, 1e-8). x must require a gradient; its values are
// perturbed in place and restored. max_coords == 0 checks every coordinate,
// otherwise a seeded random subset of that size.
//
// fd_noise_factor > 0 discounts differences the central difference cannot
// measure: |analytic - fd| <= factor * |f(x)| * machine_eps / eps counts as
// exact agreement. 0 keeps the plain formula.
template <typename T>
double grad_check(const std::function<Tensor<T>(Tensor<T>&)>& f, Tensor<T>& x,
                  T eps, std::size_t max_coords = 0,
                  std::uint64_t coord_seed = 0, double fd_noise_factor = 0.0);

}  // namespace udtsep
