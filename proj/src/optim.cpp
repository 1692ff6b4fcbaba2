#include "udtsep/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace udtsep {

template <typename T>
Adam<T>::Adam(std::vector<Tensor<T>> params, AdamConfig cfg)
    : cfg_(cfg), params_(std::move(params)) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.emplace_back(p.size(), T(0));
    v_.emplace_back(p.size(), T(0));
  }
}

template <typename T>
void Adam<T>::step() {
  ++t_;
  const T b1 = static_cast<T>(cfg_.beta1);
  const T b2 = static_cast<T>(cfg_.beta2);
  const T lr = static_cast<T>(cfg_.lr);
  const T eps = static_cast<T>(cfg_.eps);
  const T bias1 = T(1) - static_cast<T>(std::pow(cfg_.beta1, static_cast<double>(t_)));
  const T bias2 = T(1) - static_cast<T>(std::pow(cfg_.beta2, static_cast<double>(t_)));

  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    auto g = p.grad();
    if (g.empty()) {
      p.zero_grad();
      g = p.grad();
    }
    auto vals = p.values();
    T* m = m_[i].data();
    T* v = v_[i].data();
    for (std::size_t k = 0; k < vals.size(); ++k) {
      m[k] = b1 * m[k] + (T(1) - b1) * g[k];
      v[k] = b2 * v[k] + (T(1) - b2) * g[k] * g[k];
      const T mhat = m[k] / bias1;
      const T vhat = v[k] / bias2;
      vals[k] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
    p.zero_grad();
  }
}

namespace {

template <typename T>
void zero_param_grads(const std::vector<Tensor<T>>& params) {
  for (auto p : params) p.zero_grad();
}

}  // namespace

template <typename T>
LossBreakdown train_step(UdtModel<T>& model, TrainState<T>& state, const Tensor<T>& M,
                         const Tensor<T>& C, const LossWeights& weights) {
  zero_param_grads(model.parameters());
  LossResult<T> loss = compute_loss(model, M, C, weights, state.rng, Mode::train);
  if (!std::isfinite(loss.values.total)) {
    throw std::runtime_error("train_step: non-finite loss at step " + std::to_string(state.step));
  }
  backward(loss.total);
  state.opt.step();
  ++state.step;
  return loss.values;
}

LossBreakdown train_step(UdtModel<float>& model, TrainState<float>& state, const Batch& batch,
                         const LossWeights& weights) {
  if (batch.paired) throw std::invalid_argument("train_step: expected an unpaired batch");
  return train_step(model, state, batch.mix_mags, batch.clean_mags, weights);
}

template <typename T>
LossBreakdown supervised_step(SupervisedModel<T>& model, TrainState<T>& state, const Tensor<T>& M,
                              const Tensor<T>& C, const LossWeights& weights) {
  zero_param_grads(model.parameters());
  LossResult<T> loss = supervised_loss(model, M, C, weights, state.rng, Mode::train);
  if (!std::isfinite(loss.values.total)) {
    throw std::runtime_error("supervised_step: non-finite loss at step " +
                             std::to_string(state.step));
  }
  backward(loss.total);
  state.opt.step();
  ++state.step;
  return loss.values;
}

LossBreakdown supervised_step(SupervisedModel<float>& model, TrainState<float>& state,
                              const Batch& batch, const LossWeights& weights) {
  if (!batch.paired) throw std::invalid_argument("supervised_step: expected a paired batch");
  return supervised_step(model, state, batch.mix_mags, batch.clean_mags, weights);
}

#define UDTSEP_INSTANTIATE_OPTIM(T)                                                          \
  template class Adam<T>;                                                                    \
  template struct TrainState<T>;                                                             \
  template LossBreakdown train_step<T>(UdtModel<T>&, TrainState<T>&, const Tensor<T>&,       \
                                       const Tensor<T>&, const LossWeights&);                \
  template LossBreakdown supervised_step<T>(SupervisedModel<T>&, TrainState<T>&,             \
                                            const Tensor<T>&, const Tensor<T>&,              \
                                            const LossWeights&);

UDTSEP_INSTANTIATE_OPTIM(float)
UDTSEP_INSTANTIATE_OPTIM(double)

#undef UDTSEP_INSTANTIATE_OPTIM

}  // namespace udtsep
