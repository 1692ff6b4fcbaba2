#pragma once

#include <cstddef>

#include "udtsep/tensor.hpp"

namespace udtsep {

enum class Mode { train, eval };

// ---- raw tape ops on (batch, channels, time) tensors ------------------------

// cross-correlation with zero padding; out time = T + 2*padding - kernel + 1
template <typename T>
Tensor<T> conv1d_op(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                    std::size_t padding);

// linear adjoint of conv1d_op with the same geometry; weight is
// (in_channels, out_channels, kernel); out time = T - 2*padding + kernel - 1
template <typename T>
Tensor<T> tconv1d_op(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                     std::size_t padding);

template <typename T>
Tensor<T> batchnorm_train_op(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                             Tensor<T>& running_mean, Tensor<T>& running_var, T momentum, T eps);

template <typename T>
Tensor<T> batchnorm_eval_op(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                            const Tensor<T>& running_mean, const Tensor<T>& running_var, T eps);

// ---- layers -----------------------------------------------------------------

template <typename T>
struct Conv1d {
  std::size_t in_channels = 0, out_channels = 0, kernel = 5, padding = 2;
  Tensor<T> weight;  // (out, in, kernel)
  Tensor<T> bias;    // (out)

  Conv1d() = default;
  Conv1d(std::size_t in_ch, std::size_t out_ch, std::size_t kernel_width = 5);

  // uniform in +-sqrt(1 / (in_channels * kernel)), biases zero
  void init_uniform(SeededRng& rng);
  // centered delta kernel; needs in_channels == out_channels
  void init_identity();

  Tensor<T> forward(const Tensor<T>& x) const { return conv1d_op(x, weight, bias, padding); }
};

template <typename T>
struct TransposedConv1d {
  std::size_t in_channels = 0, out_channels = 0, kernel = 5, padding = 2;
  Tensor<T> weight;  // (in, out, kernel)
  Tensor<T> bias;    // (out)

  TransposedConv1d() = default;
  TransposedConv1d(std::size_t in_ch, std::size_t out_ch, std::size_t kernel_width = 5);

  void init_uniform(SeededRng& rng);
  void init_identity();

  Tensor<T> forward(const Tensor<T>& x) const { return tconv1d_op(x, weight, bias, padding); }
};

template <typename T>
struct BatchNorm1d {
  std::size_t channels = 0;
  T momentum = T(0.1);
  T eps = T(1e-5);
  Tensor<T> gamma, beta;                  // learned
  Tensor<T> running_mean, running_var;    // buffers, updated in training

  BatchNorm1d() = default;
  explicit BatchNorm1d(std::size_t ch);

  Tensor<T> forward(const Tensor<T>& x, Mode mode);
};

template <typename T>
struct Dropout {
  double p = 0.3;

  // training: zero each element with probability p, scale survivors by
  // 1/(1-p); inference: identity (same storage)
  Tensor<T> forward(const Tensor<T>& x, Mode mode, SeededRng& rng) const;
};

}  // namespace udtsep
