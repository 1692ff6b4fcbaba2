#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "udtsep/dsp.hpp"
#include "udtsep/nn.hpp"

namespace udtsep {

enum class Domain { source, target };  // source = mixtures, target = clean sounds

enum class Activation { softplus, identity };

struct ModelConfig {
  std::size_t bins = 1024;   // spectrogram bins, the outer channel count
  std::size_t width = 1024;  // hidden channels
  std::size_t kernel = 5;
  double dropout_p = 0.3;
  bool use_batchnorm = true;
  bool add_noise = true;  // reparameterization noise during training
  Activation activation = Activation::softplus;

  // Test configuration: no normalization, dropout, or noise, and identity
  // activations. With delta kernels every pathway is the identity map.
  static ModelConfig linear_bypass(std::size_t bins);
};

// conv -> activation -> batchnorm -> dropout
template <typename T>
struct ConvBlock {
  Conv1d<T> conv;
  BatchNorm1d<T> bn;
  Dropout<T> dropout;
  bool use_bn = true;
  bool use_dropout = true;
  Activation activation = Activation::softplus;

  Tensor<T> forward(const Tensor<T>& x, Mode mode, SeededRng& rng);
};

// transposed-conv twin; the decoder output block runs without bn/dropout
template <typename T>
struct TconvBlock {
  TransposedConv1d<T> tconv;
  BatchNorm1d<T> bn;
  Dropout<T> dropout;
  bool use_bn = true;
  bool use_dropout = true;
  Activation activation = Activation::softplus;

  Tensor<T> forward(const Tensor<T>& x, Mode mode, SeededRng& rng);
};

template <typename T>
struct EncoderStack {
  // three blocks; the final one is shared storage across domains
  std::vector<std::shared_ptr<ConvBlock<T>>> blocks;
  Tensor<T> forward(const Tensor<T>& x, Mode mode, SeededRng& rng);
};

template <typename T>
struct DecoderStack {
  // three blocks; the first is shared storage, the last is the output block
  std::vector<std::shared_ptr<TconvBlock<T>>> blocks;
  Tensor<T> forward(const Tensor<T>& x, Mode mode, SeededRng& rng);
};

using NamedTensors = std::vector<std::pair<std::string, const void*>>;

template <typename T>
struct UdtModel {
  ModelConfig cfg;
  EncoderStack<T> enc_s, enc_t;
  DecoderStack<T> dec_s, dec_t;

  static UdtModel create(const ModelConfig& cfg, SeededRng& rng);

  // delta kernels everywhere; needs width == bins
  void set_identity_kernels();

  Tensor<T> encode(Domain d, const Tensor<T>& x, Mode mode, SeededRng& rng);
  Tensor<T> decode(Domain d, const Tensor<T>& z, Mode mode, SeededRng& rng);

  // unique gradient-carrying leaves, shared blocks once, stable order
  std::vector<Tensor<T>> parameters() const;
  // parameters plus batchnorm buffers under canonical names, shared once
  std::vector<std::pair<std::string, Tensor<T>>> named_tensors() const;
};

template <typename T>
struct SupervisedModel {
  ModelConfig cfg;
  EncoderStack<T> enc;
  DecoderStack<T> dec;

  static SupervisedModel create(const ModelConfig& cfg, SeededRng& rng);

  std::vector<Tensor<T>> parameters() const;
  std::vector<std::pair<std::string, Tensor<T>>> named_tensors() const;
};

// training: z = mu + eps with eps ~ N(0, I); inference: z = mu (same storage)
template <typename T>
Tensor<T> reparameterize(const Tensor<T>& mu, SeededRng& rng, Mode mode, bool add_noise);

template <typename T>
struct PathOutputs {
  Tensor<T> m_hat;     // E_s -> D_s, mixture reconstruction
  Tensor<T> c_from_m;  // E_s -> D_t, the separation pathway
  Tensor<T> c_hat;     // E_t -> D_t, clean reconstruction
  Tensor<T> m_from_c;  // E_t -> D_s, dummy mixture containing C
  Tensor<T> mu_s, mu_t;
  Tensor<T> z_s, z_t;
};

template <typename T>
PathOutputs<T> forward_paths(UdtModel<T>& model, const Tensor<T>& M, const Tensor<T>& C,
                             SeededRng& rng, Mode mode);

struct LossWeights {
  double rec = 1.0;
  double cc = 1.0;
  double l2 = 1e-3;
};

struct LossBreakdown {
  double rec_s = 0, rec_t = 0;
  double straight_s = 0, straight_t = 0;
  double cross_s = 0, cross_t = 0;
  double l2_s = 0, l2_t = 0;
  double total = 0;
};

template <typename T>
struct LossResult {
  Tensor<T> total;  // scalar, differentiable
  LossBreakdown values;
};

// reconstruction + straight/cross consistency + l2 terms of both domains
template <typename T>
LossResult<T> compute_loss(UdtModel<T>& model, const Tensor<T>& M, const Tensor<T>& C,
                           const LossWeights& weights, SeededRng& rng, Mode mode);

// mse(C, D(reparameterize(E(M)))) + l2 weight * l2_sq(E(M))
template <typename T>
LossResult<T> supervised_loss(SupervisedModel<T>& model, const Tensor<T>& M, const Tensor<T>& C,
                              const LossWeights& weights, SeededRng& rng, Mode mode);

// stft -> compress -> E_s -> (z = mu) -> D_t -> mixture-phase reconstruction
template <typename T>
WaveClip separate(UdtModel<T>& model, const WaveClip& mixture, const StftConfig& cfg);

template <typename T>
WaveClip separate_supervised(SupervisedModel<T>& model, const WaveClip& mixture,
                             const StftConfig& cfg);

}  // namespace udtsep
