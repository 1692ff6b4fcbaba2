#include "udtsep/model.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace udtsep {

namespace {

template <typename T>
Tensor<T> activate(const Tensor<T>& x, Activation act) {
  return act == Activation::softplus ? softplus(x) : x;
}

}  // namespace

ModelConfig ModelConfig::linear_bypass(std::size_t bins) {
  ModelConfig cfg;
  cfg.bins = bins;
  cfg.width = bins;
  cfg.dropout_p = 0.0;
  cfg.use_batchnorm = false;
  cfg.add_noise = false;
  cfg.activation = Activation::identity;
  return cfg;
}

template <typename T>
Tensor<T> ConvBlock<T>::forward(const Tensor<T>& x, Mode mode, SeededRng& rng) {
  Tensor<T> y = activate(conv.forward(x), activation);
  if (use_bn) y = bn.forward(y, mode);
  if (use_dropout) y = dropout.forward(y, mode, rng);
  return y;
}

template <typename T>
Tensor<T> TconvBlock<T>::forward(const Tensor<T>& x, Mode mode, SeededRng& rng) {
  Tensor<T> y = activate(tconv.forward(x), activation);
  if (use_bn) y = bn.forward(y, mode);
  if (use_dropout) y = dropout.forward(y, mode, rng);
  return y;
}

template <typename T>
Tensor<T> EncoderStack<T>::forward(const Tensor<T>& x, Mode mode, SeededRng& rng) {
  Tensor<T> y = x;
  for (auto& b : blocks) y = b->forward(y, mode, rng);
  return y;
}

template <typename T>
Tensor<T> DecoderStack<T>::forward(const Tensor<T>& x, Mode mode, SeededRng& rng) {
  Tensor<T> y = x;
  for (auto& b : blocks) y = b->forward(y, mode, rng);
  return y;
}

namespace {

template <typename T>
std::shared_ptr<ConvBlock<T>> make_conv_block(const ModelConfig& cfg, std::size_t in,
                                              std::size_t out, SeededRng& rng) {
  auto b = std::make_shared<ConvBlock<T>>();
  b->conv = Conv1d<T>(in, out, cfg.kernel);
  b->conv.init_uniform(rng);
  b->bn = BatchNorm1d<T>(out);
  b->dropout.p = cfg.dropout_p;
  b->use_bn = cfg.use_batchnorm;
  b->use_dropout = cfg.dropout_p > 0.0;
  b->activation = cfg.activation;
  return b;
}

template <typename T>
std::shared_ptr<TconvBlock<T>> make_tconv_block(const ModelConfig& cfg, std::size_t in,
                                                std::size_t out, SeededRng& rng, bool output_block) {
  auto b = std::make_shared<TconvBlock<T>>();
  b->tconv = TransposedConv1d<T>(in, out, cfg.kernel);
  b->tconv.init_uniform(rng);
  b->bn = BatchNorm1d<T>(out);
  b->dropout.p = cfg.dropout_p;
  // the output block keeps magnitudes deterministic and non-negative:
  // activation only
  b->use_bn = !output_block && cfg.use_batchnorm;
  b->use_dropout = !output_block && cfg.dropout_p > 0.0;
  b->activation = cfg.activation;
  return b;
}

template <typename T, typename Block>
void push_block_tensors(const std::string& prefix, const std::shared_ptr<Block>& b,
                        std::vector<std::pair<std::string, Tensor<T>>>& out);

template <typename T>
void push_block_tensors(const std::string& prefix, const std::shared_ptr<ConvBlock<T>>& b,
                        std::vector<std::pair<std::string, Tensor<T>>>& out) {
  out.emplace_back(prefix + ".conv.weight", b->conv.weight);
  out.emplace_back(prefix + ".conv.bias", b->conv.bias);
  if (b->use_bn) {
    out.emplace_back(prefix + ".bn.gamma", b->bn.gamma);
    out.emplace_back(prefix + ".bn.beta", b->bn.beta);
    out.emplace_back(prefix + ".bn.running_mean", b->bn.running_mean);
    out.emplace_back(prefix + ".bn.running_var", b->bn.running_var);
  }
}

template <typename T>
void push_block_tensors(const std::string& prefix, const std::shared_ptr<TconvBlock<T>>& b,
                        std::vector<std::pair<std::string, Tensor<T>>>& out) {
  out.emplace_back(prefix + ".tconv.weight", b->tconv.weight);
  out.emplace_back(prefix + ".tconv.bias", b->tconv.bias);
  if (b->use_bn) {
    out.emplace_back(prefix + ".bn.gamma", b->bn.gamma);
    out.emplace_back(prefix + ".bn.beta", b->bn.beta);
    out.emplace_back(prefix + ".bn.running_mean", b->bn.running_mean);
    out.emplace_back(prefix + ".bn.running_var", b->bn.running_var);
  }
}

// gradient-carrying leaves from a named list, deduplicated by storage
template <typename T>
std::vector<Tensor<T>> params_from_named(
    const std::vector<std::pair<std::string, Tensor<T>>>& named) {
  std::vector<Tensor<T>> params;
  std::unordered_set<const void*> seen;
  for (const auto& [name, t] : named) {
    if (!t.requires_grad()) continue;
    if (seen.insert(t.id()).second) params.push_back(t);
  }
  return params;
}

}  // namespace

template <typename T>
UdtModel<T> UdtModel<T>::create(const ModelConfig& cfg, SeededRng& rng) {
  UdtModel<T> m;
  m.cfg = cfg;
  auto enc_s0 = make_conv_block<T>(cfg, cfg.bins, cfg.width, rng);
  auto enc_s1 = make_conv_block<T>(cfg, cfg.width, cfg.width, rng);
  auto enc_shared = make_conv_block<T>(cfg, cfg.width, cfg.width, rng);
  auto enc_t0 = make_conv_block<T>(cfg, cfg.bins, cfg.width, rng);
  auto enc_t1 = make_conv_block<T>(cfg, cfg.width, cfg.width, rng);
  auto dec_shared = make_tconv_block<T>(cfg, cfg.width, cfg.width, rng, false);
  auto dec_s1 = make_tconv_block<T>(cfg, cfg.width, cfg.width, rng, false);
  auto dec_s_out = make_tconv_block<T>(cfg, cfg.width, cfg.bins, rng, true);
  auto dec_t1 = make_tconv_block<T>(cfg, cfg.width, cfg.width, rng, false);
  auto dec_t_out = make_tconv_block<T>(cfg, cfg.width, cfg.bins, rng, true);

  m.enc_s.blocks = {enc_s0, enc_s1, enc_shared};
  m.enc_t.blocks = {enc_t0, enc_t1, enc_shared};
  m.dec_s.blocks = {dec_shared, dec_s1, dec_s_out};
  m.dec_t.blocks = {dec_shared, dec_t1, dec_t_out};
  return m;
}

template <typename T>
void UdtModel<T>::set_identity_kernels() {
  for (auto& b : enc_s.blocks) b->conv.init_identity();
  for (auto& b : enc_t.blocks) b->conv.init_identity();
  for (auto& b : dec_s.blocks) b->tconv.init_identity();
  for (auto& b : dec_t.blocks) b->tconv.init_identity();
}

template <typename T>
Tensor<T> UdtModel<T>::encode(Domain d, const Tensor<T>& x, Mode mode, SeededRng& rng) {
  if (x.shape().size() != 3 || x.shape()[1] != cfg.bins) {
    throw std::invalid_argument("encode: expected (batch, " + std::to_string(cfg.bins) +
                                ", time) input, got " + shape_str(x.shape()));
  }
  return (d == Domain::source ? enc_s : enc_t).forward(x, mode, rng);
}

template <typename T>
Tensor<T> UdtModel<T>::decode(Domain d, const Tensor<T>& z, Mode mode, SeededRng& rng) {
  if (z.shape().size() != 3 || z.shape()[1] != cfg.width) {
    throw std::invalid_argument("decode: expected (batch, " + std::to_string(cfg.width) +
                                ", time) latent, got " + shape_str(z.shape()));
  }
  return (d == Domain::source ? dec_s : dec_t).forward(z, mode, rng);
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>>> UdtModel<T>::named_tensors() const {
  std::vector<std::pair<std::string, Tensor<T>>> out;
  push_block_tensors<T>("enc_s.0", enc_s.blocks[0], out);
  push_block_tensors<T>("enc_s.1", enc_s.blocks[1], out);
  push_block_tensors<T>("enc_shared", enc_s.blocks[2], out);
  push_block_tensors<T>("enc_t.0", enc_t.blocks[0], out);
  push_block_tensors<T>("enc_t.1", enc_t.blocks[1], out);
  push_block_tensors<T>("dec_shared", dec_s.blocks[0], out);
  push_block_tensors<T>("dec_s.1", dec_s.blocks[1], out);
  push_block_tensors<T>("dec_s.out", dec_s.blocks[2], out);
  push_block_tensors<T>("dec_t.1", dec_t.blocks[1], out);
  push_block_tensors<T>("dec_t.out", dec_t.blocks[2], out);
  return out;
}

template <typename T>
std::vector<Tensor<T>> UdtModel<T>::parameters() const {
  return params_from_named(named_tensors());
}

template <typename T>
SupervisedModel<T> SupervisedModel<T>::create(const ModelConfig& cfg, SeededRng& rng) {
  SupervisedModel<T> m;
  m.cfg = cfg;
  m.enc.blocks = {make_conv_block<T>(cfg, cfg.bins, cfg.width, rng),
                  make_conv_block<T>(cfg, cfg.width, cfg.width, rng),
                  make_conv_block<T>(cfg, cfg.width, cfg.width, rng)};
  m.dec.blocks = {make_tconv_block<T>(cfg, cfg.width, cfg.width, rng, false),
                  make_tconv_block<T>(cfg, cfg.width, cfg.width, rng, false),
                  make_tconv_block<T>(cfg, cfg.width, cfg.bins, rng, true)};
  return m;
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>>> SupervisedModel<T>::named_tensors() const {
  std::vector<std::pair<std::string, Tensor<T>>> out;
  push_block_tensors<T>("enc.0", enc.blocks[0], out);
  push_block_tensors<T>("enc.1", enc.blocks[1], out);
  push_block_tensors<T>("enc.2", enc.blocks[2], out);
  push_block_tensors<T>("dec.0", dec.blocks[0], out);
  push_block_tensors<T>("dec.1", dec.blocks[1], out);
  push_block_tensors<T>("dec.out", dec.blocks[2], out);
  return out;
}

template <typename T>
std::vector<Tensor<T>> SupervisedModel<T>::parameters() const {
  return params_from_named(named_tensors());
}

template <typename T>
Tensor<T> reparameterize(const Tensor<T>& mu, SeededRng& rng, Mode mode, bool add_noise) {
  if (mode == Mode::eval || !add_noise) return mu;
  return add(mu, gaussian_sample<T>(mu.shape(), rng));
}

template <typename T>
PathOutputs<T> forward_paths(UdtModel<T>& model, const Tensor<T>& M, const Tensor<T>& C,
                             SeededRng& rng, Mode mode) {
  if (M.shape() != C.shape()) {
    throw std::invalid_argument("forward_paths: M " + shape_str(M.shape()) + " vs C " +
                                shape_str(C.shape()));
  }
  PathOutputs<T> out;
  out.mu_s = model.encode(Domain::source, M, mode, rng);
  out.mu_t = model.encode(Domain::target, C, mode, rng);
  out.z_s = reparameterize(out.mu_s, rng, mode, model.cfg.add_noise);
  out.z_t = reparameterize(out.mu_t, rng, mode, model.cfg.add_noise);
  out.m_hat = model.decode(Domain::source, out.z_s, mode, rng);
  out.c_from_m = model.decode(Domain::target, out.z_s, mode, rng);
  out.c_hat = model.decode(Domain::target, out.z_t, mode, rng);
  out.m_from_c = model.decode(Domain::source, out.z_t, mode, rng);
  return out;
}

template <typename T>
LossResult<T> compute_loss(UdtModel<T>& model, const Tensor<T>& M, const Tensor<T>& C,
                           const LossWeights& weights, SeededRng& rng, Mode mode) {
  PathOutputs<T> p = forward_paths(model, M, C, rng, mode);

  Tensor<T> rec_s = mse(M, p.m_hat);
  Tensor<T> rec_t = mse(C, p.c_hat);
  Tensor<T> straight_s = mse(p.mu_s, model.encode(Domain::source, p.m_hat, mode, rng));
  Tensor<T> straight_t = mse(p.mu_t, model.encode(Domain::target, p.c_hat, mode, rng));
  Tensor<T> cross_s = mse(p.mu_s, model.encode(Domain::target, p.c_from_m, mode, rng));
  Tensor<T> cross_t = mse(p.mu_t, model.encode(Domain::source, p.m_from_c, mode, rng));
  Tensor<T> l2_s = l2_sq(p.mu_s);
  Tensor<T> l2_t = l2_sq(p.mu_t);

  Tensor<T> total = scale(add(rec_s, rec_t), static_cast<T>(weights.rec));
  total = add(total, scale(add(add(straight_s, straight_t), add(cross_s, cross_t)),
                           static_cast<T>(weights.cc)));
  total = add(total, scale(add(l2_s, l2_t), static_cast<T>(weights.l2)));

  LossResult<T> result;
  result.total = total;
  result.values.rec_s = rec_s.item();
  result.values.rec_t = rec_t.item();
  result.values.straight_s = straight_s.item();
  result.values.straight_t = straight_t.item();
  result.values.cross_s = cross_s.item();
  result.values.cross_t = cross_t.item();
  result.values.l2_s = l2_s.item();
  result.values.l2_t = l2_t.item();
  result.values.total = total.item();
  return result;
}

template <typename T>
LossResult<T> supervised_loss(SupervisedModel<T>& model, const Tensor<T>& M, const Tensor<T>& C,
                              const LossWeights& weights, SeededRng& rng, Mode mode) {
  if (M.shape() != C.shape()) {
    throw std::invalid_argument("supervised_loss: M " + shape_str(M.shape()) + " vs C " +
                                shape_str(C.shape()));
  }
  Tensor<T> mu = model.enc.forward(M, mode, rng);
  Tensor<T> z = reparameterize(mu, rng, mode, model.cfg.add_noise);
  Tensor<T> est = model.dec.forward(z, mode, rng);
  Tensor<T> rec = mse(C, est);
  Tensor<T> l2 = l2_sq(mu);
  Tensor<T> total = add(rec, scale(l2, static_cast<T>(weights.l2)));

  LossResult<T> result;
  result.total = total;
  result.values.rec_t = rec.item();
  result.values.l2_s = l2.item();
  result.values.total = total.item();
  return result;
}

namespace {

template <typename T>
Tensor<T> compressed_to_tensor(const MagSpectrogram& mag) {
  std::vector<T> data(mag.bins * mag.frames);
  for (std::size_t b = 0; b < mag.bins; ++b) {
    for (std::size_t f = 0; f < mag.frames; ++f) {
      data[b * mag.frames + f] = static_cast<T>(mag.at(f, b));
    }
  }
  return Tensor<T>({1, mag.bins, mag.frames}, std::move(data));
}

template <typename T>
MagSpectrogram tensor_to_compressed(const Tensor<T>& t, const StftConfig& cfg) {
  MagSpectrogram mag;
  mag.frames = t.shape()[2];
  mag.bins = t.shape()[1];
  mag.values.resize(mag.frames * mag.bins);
  mag.compressed = true;
  mag.config = cfg;
  auto v = t.values();
  for (std::size_t b = 0; b < mag.bins; ++b) {
    for (std::size_t f = 0; f < mag.frames; ++f) {
      // the decoder output is non-negative by construction; clamp away
      // rounding dust so decompression stays defined
      mag.values[f * mag.bins + b] = std::max<double>(0.0, v[b * mag.frames + f]);
    }
  }
  return mag;
}

}  // namespace

template <typename T>
WaveClip separate(UdtModel<T>& model, const WaveClip& mixture, const StftConfig& cfg) {
  auto [mag, phase] = stft(mixture, cfg);
  auto cm = compress(mag);
  Tensor<T> x = compressed_to_tensor<T>(cm);
  SeededRng rng(0);  // inference draws nothing
  Tensor<T> mu = model.encode(Domain::source, x, Mode::eval, rng);
  Tensor<T> est = model.decode(Domain::target, mu, Mode::eval, rng);
  MagSpectrogram est_mag = tensor_to_compressed(est, cfg);
  WaveClip out = reconstruct_waveform(est_mag, phase, mixture.samples.size(), mixture.sample_rate);
  return out;
}

template <typename T>
WaveClip separate_supervised(SupervisedModel<T>& model, const WaveClip& mixture,
                             const StftConfig& cfg) {
  auto [mag, phase] = stft(mixture, cfg);
  auto cm = compress(mag);
  Tensor<T> x = compressed_to_tensor<T>(cm);
  SeededRng rng(0);
  Tensor<T> mu = model.enc.forward(x, Mode::eval, rng);
  Tensor<T> est = model.dec.forward(mu, Mode::eval, rng);
  MagSpectrogram est_mag = tensor_to_compressed(est, cfg);
  return reconstruct_waveform(est_mag, phase, mixture.samples.size(), mixture.sample_rate);
}

#define UDTSEP_INSTANTIATE_MODEL(T)                                                            \
  template struct ConvBlock<T>;                                                                \
  template struct TconvBlock<T>;                                                               \
  template struct EncoderStack<T>;                                                             \
  template struct DecoderStack<T>;                                                             \
  template struct UdtModel<T>;                                                                 \
  template struct SupervisedModel<T>;                                                          \
  template Tensor<T> reparameterize<T>(const Tensor<T>&, SeededRng&, Mode, bool);              \
  template struct PathOutputs<T>;                                                              \
  template PathOutputs<T> forward_paths<T>(UdtModel<T>&, const Tensor<T>&, const Tensor<T>&,   \
                                           SeededRng&, Mode);                                  \
  template LossResult<T> compute_loss<T>(UdtModel<T>&, const Tensor<T>&, const Tensor<T>&,     \
                                         const LossWeights&, SeededRng&, Mode);                \
  template LossResult<T> supervised_loss<T>(SupervisedModel<T>&, const Tensor<T>&,             \
                                            const Tensor<T>&, const LossWeights&, SeededRng&,  \
                                            Mode);                                             \
  template WaveClip separate<T>(UdtModel<T>&, const WaveClip&, const StftConfig&);             \
  template WaveClip separate_supervised<T>(SupervisedModel<T>&, const WaveClip&,               \
                                           const StftConfig&);

UDTSEP_INSTANTIATE_MODEL(float)
UDTSEP_INSTANTIATE_MODEL(double)

#undef UDTSEP_INSTANTIATE_MODEL

}  // namespace udtsep
