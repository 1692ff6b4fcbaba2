#include "udtsep/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace udtsep {

double SeededRng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // u1 in (0, 1] so the log is finite
  double u1 = 1.0 - uniform();
  double u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  double a = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(a);
  has_spare_ = true;
  return r * std::cos(a);
}

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ")";
  return os.str();
}

namespace {

void check_shape(const Shape& shape) {
  if (shape.empty()) throw std::invalid_argument("tensor shape must have at least one dimension");
  for (std::size_t d : shape) {
    if (d == 0) throw std::invalid_argument("tensor dimensions must be positive, got " + shape_str(shape));
  }
}

}  // namespace

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values) {
  check_shape(shape);
  if (numel(shape) != values.size()) {
    throw std::invalid_argument("shape " + shape_str(shape) + " does not match " +
                                std::to_string(values.size()) + " values");
  }
  node_ = std::make_shared<detail::Node<T>>();
  node_->shape = std::move(shape);
  node_->value = std::move(values);
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape) {
  check_shape(shape);
  std::size_t n = numel(shape);
  return Tensor(std::move(shape), std::vector<T>(n, T(0)));
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T v) {
  check_shape(shape);
  std::size_t n = numel(shape);
  return Tensor(std::move(shape), std::vector<T>(n, v));
}

template <typename T>
Tensor<T> Tensor<T>::param(Shape shape, std::vector<T> values) {
  Tensor t(std::move(shape), std::move(values));
  t.node_->requires_grad = true;
  return t;
}

template <typename T>
const Shape& Tensor<T>::shape() const {
  if (!node_) throw std::logic_error("use of empty tensor");
  return node_->shape;
}

template <typename T>
std::size_t Tensor<T>::size() const {
  return node_ ? node_->value.size() : 0;
}

template <typename T>
std::span<const T> Tensor<T>::values() const {
  if (!node_) throw std::logic_error("use of empty tensor");
  return {node_->value.data(), node_->value.size()};
}

template <typename T>
std::span<T> Tensor<T>::values() {
  if (!node_) throw std::logic_error("use of empty tensor");
  return {node_->value.data(), node_->value.size()};
}

template <typename T>
std::span<const T> Tensor<T>::grad() const {
  if (!node_) throw std::logic_error("use of empty tensor");
  return {node_->grad.data(), node_->grad.size()};
}

template <typename T>
bool Tensor<T>::requires_grad() const {
  return node_ && node_->requires_grad;
}

template <typename T>
void Tensor<T>::set_requires_grad(bool b) {
  if (!node_) throw std::logic_error("use of empty tensor");
  node_->requires_grad = b;
}

template <typename T>
void Tensor<T>::zero_grad() {
  if (!node_) throw std::logic_error("use of empty tensor");
  node_->grad.assign(node_->value.size(), T(0));
}

template <typename T>
T Tensor<T>::item() const {
  if (size() != 1) {
    throw std::invalid_argument("item() needs a scalar tensor, got shape " + shape_str(shape()));
  }
  return node_->value[0];
}

namespace detail {

template <typename T>
void accumulate(Node<T>& dst, const std::vector<T>& delta) {
  dst.ensure_grad();
  T* g = dst.grad.data();
  const T* d = delta.data();
  for (std::size_t i = 0; i < delta.size(); ++i) g[i] += d[i];
}

template <typename T>
Tensor<T> make_op(Shape shape, std::vector<T> value,
                  std::vector<std::shared_ptr<Node<T>>> parents,
                  std::function<void(Node<T>&)> backward_fn) {
  auto n = std::make_shared<Node<T>>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  bool tracked = false;
  for (const auto& p : parents) {
    if (p && (p->tracked || p->requires_grad)) tracked = true;
  }
  if (tracked) {
    n->tracked = true;
    n->parents = std::move(parents);
    n->backward_fn = std::move(backward_fn);
  }
  return from_node(std::move(n));
}

template Tensor<float> make_op<float>(Shape, std::vector<float>,
                                      std::vector<std::shared_ptr<Node<float>>>,
                                      std::function<void(Node<float>&)>);
template Tensor<double> make_op<double>(Shape, std::vector<double>,
                                        std::vector<std::shared_ptr<Node<double>>>,
                                        std::function<void(Node<double>&)>);
template void accumulate<float>(Node<float>&, const std::vector<float>&);
template void accumulate<double>(Node<double>&, const std::vector<double>&);

}  // namespace detail

namespace {

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  }
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a, b, "add");
  auto an = node_of(a), bn = node_of(b);
  std::vector<T> out(an->value.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = an->value[i] + bn->value[i];
  return detail::make_op<T>(a.shape(), std::move(out), {an, bn}, [an, bn](detail::Node<T>& self) {
    detail::accumulate(*an, self.grad);
    detail::accumulate(*bn, self.grad);
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a, b, "sub");
  auto an = node_of(a), bn = node_of(b);
  std::vector<T> out(an->value.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = an->value[i] - bn->value[i];
  return detail::make_op<T>(a.shape(), std::move(out), {an, bn}, [an, bn](detail::Node<T>& self) {
    detail::accumulate(*an, self.grad);
    bn->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] -= self.grad[i];
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a, b, "mul");
  auto an = node_of(a), bn = node_of(b);
  std::vector<T> out(an->value.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = an->value[i] * bn->value[i];
  return detail::make_op<T>(a.shape(), std::move(out), {an, bn}, [an, bn](detail::Node<T>& self) {
    an->ensure_grad();
    bn->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      an->grad[i] += self.grad[i] * bn->value[i];
      bn->grad[i] += self.grad[i] * an->value[i];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T c) {
  auto an = node_of(a);
  std::vector<T> out(an->value.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = an->value[i] * c;
  return detail::make_op<T>(a.shape(), std::move(out), {an}, [an, c](detail::Node<T>& self) {
    an->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i] * c;
  });
}

template <typename T>
Tensor<T> softplus(const Tensor<T>& x) {
  auto xn = node_of(x);
  std::vector<T> out(xn->value.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    T v = xn->value[i];
    out[i] = std::max<T>(v, T(0)) + std::log1p(std::exp(-std::abs(v)));
  }
  return detail::make_op<T>(x.shape(), std::move(out), {xn}, [xn](detail::Node<T>& self) {
    xn->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      T v = xn->value[i];
      T sig = T(1) / (T(1) + std::exp(-v));
      xn->grad[i] += self.grad[i] * sig;
    }
  });
}

template <typename T>
Tensor<T> mse(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_shape(a, b, "mse");
  auto an = node_of(a), bn = node_of(b);
  const std::size_t n = an->value.size();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double d = static_cast<double>(an->value[i]) - static_cast<double>(bn->value[i]);
    acc += d * d;
  }
  std::vector<T> out{static_cast<T>(acc / static_cast<double>(n))};
  return detail::make_op<T>({1}, std::move(out), {an, bn}, [an, bn, n](detail::Node<T>& self) {
    an->ensure_grad();
    bn->ensure_grad();
    T g = self.grad[0] * T(2) / static_cast<T>(n);
    for (std::size_t i = 0; i < n; ++i) {
      T d = an->value[i] - bn->value[i];
      an->grad[i] += g * d;
      bn->grad[i] -= g * d;
    }
  });
}

template <typename T>
Tensor<T> l2_sq(const Tensor<T>& a) {
  if (!a.defined() || a.size() == 0) throw std::invalid_argument("l2_sq: empty tensor");
  auto an = node_of(a);
  const std::size_t n = an->value.size();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double v = static_cast<double>(an->value[i]);
    acc += v * v;
  }
  std::vector<T> out{static_cast<T>(acc / static_cast<double>(n))};
  return detail::make_op<T>({1}, std::move(out), {an}, [an, n](detail::Node<T>& self) {
    an->ensure_grad();
    T g = self.grad[0] * T(2) / static_cast<T>(n);
    for (std::size_t i = 0; i < n; ++i) an->grad[i] += g * an->value[i];
  });
}

template <typename T>
Tensor<T> apply_mask(const Tensor<T>& x, std::vector<T> mask) {
  if (mask.size() != x.size()) throw std::invalid_argument("apply_mask: mask size mismatch");
  auto xn = node_of(x);
  std::vector<T> out(xn->value.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xn->value[i] * mask[i];
  auto m = std::make_shared<std::vector<T>>(std::move(mask));
  return detail::make_op<T>(x.shape(), std::move(out), {xn}, [xn, m](detail::Node<T>& self) {
    xn->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += self.grad[i] * (*m)[i];
  });
}

template <typename T>
Tensor<T> gaussian_sample(const Shape& shape, SeededRng& rng) {
  check_shape(shape);
  std::vector<T> out(numel(shape));
  for (auto& v : out) v = static_cast<T>(rng.normal());
  return Tensor<T>(shape, std::move(out));
}

template <typename T>
void backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw std::invalid_argument("backward needs a scalar loss" +
                                (loss.defined() ? ", got shape " + shape_str(loss.shape()) : std::string()));
  }
  auto root = node_of(loss);
  if (!root->tracked && !root->requires_grad) {
    throw std::invalid_argument("backward: loss is detached from the tape");
  }

  // iterative post-order DFS; reversed it yields outputs-before-inputs
  std::vector<detail::Node<T>*> order;
  std::unordered_set<detail::Node<T>*> visited;
  struct Frame {
    detail::Node<T>* node;
    std::size_t next_parent;
  };
  std::vector<Frame> stack{{root.get(), 0}};
  visited.insert(root.get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      detail::Node<T>* p = f.node->parents[f.next_parent++].get();
      if (p && !visited.count(p)) {
        visited.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }

  root->grad.assign(1, T(1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node<T>* n = *it;
    if (!n->backward_fn) continue;
    n->ensure_grad();
    n->backward_fn(*n);
  }
}

template <typename T>
double grad_check(const std::function<Tensor<T>(Tensor<T>&)>& f, Tensor<T>& x, T eps,
                  std::size_t max_coords, std::uint64_t coord_seed, double fd_noise_factor) {
  if (eps <= T(0)) throw std::invalid_argument("grad_check: eps must be positive");
  if (!x.requires_grad()) throw std::invalid_argument("grad_check: x must require a gradient");

  x.zero_grad();
  Tensor<T> y = f(x);
  if (y.size() != 1) throw std::invalid_argument("grad_check: f must return a scalar");
  backward(y);
  std::vector<T> analytic(x.grad().begin(), x.grad().end());
  const double fd_noise = fd_noise_factor * std::abs(static_cast<double>(y.item())) *
                          static_cast<double>(std::numeric_limits<T>::epsilon()) /
                          static_cast<double>(eps);

  std::vector<std::size_t> coords;
  if (max_coords == 0 || max_coords >= x.size()) {
    coords.resize(x.size());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
  } else {
    SeededRng pick(coord_seed);
    std::unordered_set<std::size_t> seen;
    while (coords.size() < max_coords) {
      std::size_t i = static_cast<std::size_t>(pick.next_u64() % x.size());
      if (seen.insert(i).second) coords.push_back(i);
    }
  }

  double worst = 0.0;
  auto vals = x.values();
  for (std::size_t i : coords) {
    T orig = vals[i];
    vals[i] = orig + eps;
    double fp = static_cast<double>(f(x).item());
    vals[i] = orig - eps;
    double fm = static_cast<double>(f(x).item());
    vals[i] = orig;
    double fd = (fp - fm) / (2.0 * static_cast<double>(eps));
    double a = static_cast<double>(analytic[i]);
    if (std::abs(a - fd) <= fd_noise) continue;
    double denom = std::max({std::abs(a), std::abs(fd), 1e-8});
    worst = std::max(worst, std::abs(a - fd) / denom);
  }
  return worst;
}

// explicit instantiations for the two supported precisions
template class Tensor<float>;
template class Tensor<double>;

#define UDTSEP_INSTANTIATE_OPS(T)                                                      \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                       \
  template Tensor<T> sub<T>(const Tensor<T>&, const Tensor<T>&);                       \
  template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                       \
  template Tensor<T> scale<T>(const Tensor<T>&, T);                                    \
  template Tensor<T> softplus<T>(const Tensor<T>&);                                    \
  template Tensor<T> mse<T>(const Tensor<T>&, const Tensor<T>&);                       \
  template Tensor<T> l2_sq<T>(const Tensor<T>&);                                       \
  template Tensor<T> apply_mask<T>(const Tensor<T>&, std::vector<T>);                  \
  template Tensor<T> gaussian_sample<T>(const Shape&, SeededRng&);                     \
  template void backward<T>(const Tensor<T>&);                                         \
  template double grad_check<T>(const std::function<Tensor<T>(Tensor<T>&)>&, Tensor<T>&, T, \
                                std::size_t, std::uint64_t, double);

UDTSEP_INSTANTIATE_OPS(float)
UDTSEP_INSTANTIATE_OPS(double)

#undef UDTSEP_INSTANTIATE_OPS

}  // namespace udtsep
