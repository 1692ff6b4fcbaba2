#pragma once

#include "udtsep/corpus.hpp"
#include "udtsep/model.hpp"

namespace udtsep {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
class Adam {
 public:
  Adam() = default;
  Adam(std::vector<Tensor<T>> params, AdamConfig cfg);

  // bias-corrected moment update from the accumulated grads, then zero them
  void step();

  std::size_t t() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  std::vector<Tensor<T>> params_;
  std::vector<std::vector<T>> m_, v_;
  std::size_t t_ = 0;
};

template <typename T>
struct TrainState {
  Adam<T> opt;
  SeededRng rng{0};
  std::size_t step = 0;
};

// zero grads -> compute_loss (training) -> backward -> Adam update.
// Throws on a non-finite loss without touching the parameters.
template <typename T>
LossBreakdown train_step(UdtModel<T>& model, TrainState<T>& state, const Tensor<T>& M,
                         const Tensor<T>& C, const LossWeights& weights);

// batch overload; rejects paired batches
LossBreakdown train_step(UdtModel<float>& model, TrainState<float>& state, const Batch& batch,
                         const LossWeights& weights);

template <typename T>
LossBreakdown supervised_step(SupervisedModel<T>& model, TrainState<T>& state, const Tensor<T>& M,
                              const Tensor<T>& C, const LossWeights& weights);

// batch overload; rejects unpaired batches
LossBreakdown supervised_step(SupervisedModel<float>& model, TrainState<float>& state,
                              const Batch& batch, const LossWeights& weights);

}  // namespace udtsep
