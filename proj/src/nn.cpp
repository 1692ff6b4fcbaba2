#include "udtsep/nn.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace udtsep {

namespace {

template <typename T>
void check_bct(const Tensor<T>& x, const char* op) {
  if (!x.defined() || x.shape().size() != 3) {
    throw std::invalid_argument(std::string(op) + ": expected a (batch, channels, time) tensor" +
                                (x.defined() ? ", got " + shape_str(x.shape()) : std::string()));
  }
}

}  // namespace

template <typename T>
Tensor<T> conv1d_op(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                    std::size_t padding) {
  check_bct(x, "conv1d");
  const std::size_t B = x.shape()[0], Ci = x.shape()[1], Ti = x.shape()[2];
  const std::size_t Co = weight.shape()[0], K = weight.shape()[2];
  if (weight.shape()[1] != Ci) {
    throw std::invalid_argument("conv1d: input has " + std::to_string(Ci) +
                                " channels but weight expects " + std::to_string(weight.shape()[1]));
  }
  if (bias.shape() != Shape{Co}) throw std::invalid_argument("conv1d: bias shape mismatch");
  const long to_signed =
      static_cast<long>(Ti) + 2 * static_cast<long>(padding) - static_cast<long>(K) + 1;
  if (to_signed < 1) throw std::invalid_argument("conv1d: output time length would be non-positive");
  const std::size_t To = static_cast<std::size_t>(to_signed);

  auto xn = node_of(x);
  auto wn = node_of(weight);
  auto bn = node_of(bias);
  const T* xv = xn->value.data();
  const T* wv = wn->value.data();
  const T* bv = bn->value.data();

  std::vector<T> out(B * Co * To);
  const long p = static_cast<long>(padding);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t co = 0; co < Co; ++co) {
      T* orow = out.data() + (b * Co + co) * To;
      const T bval = bv[co];
      for (std::size_t t = 0; t < To; ++t) orow[t] = bval;
      for (std::size_t ci = 0; ci < Ci; ++ci) {
        const T* xrow = xv + (b * Ci + ci) * Ti;
        const T* wrow = wv + (co * Ci + ci) * K;
        for (std::size_t k = 0; k < K; ++k) {
          const T w = wrow[k];
          const long shift = static_cast<long>(k) - p;
          const std::size_t t0 = shift < 0 ? static_cast<std::size_t>(-shift) : 0;
          const std::size_t t1 =
              std::min<long>(To, static_cast<long>(Ti) - shift) > 0
                  ? static_cast<std::size_t>(std::min<long>(To, static_cast<long>(Ti) - shift))
                  : 0;
          const T* xs = xrow + shift;
          for (std::size_t t = t0; t < t1; ++t) orow[t] += w * xs[t];
        }
      }
    }
  }

  return detail::make_op<T>(
      {B, Co, To}, std::move(out), {xn, wn, bn},
      [xn, wn, bn, B, Ci, Ti, Co, K, To, p](detail::Node<T>& self) {
        xn->ensure_grad();
        wn->ensure_grad();
        bn->ensure_grad();
        const T* dy = self.grad.data();
        const T* xv = xn->value.data();
        const T* wv = wn->value.data();
        for (std::size_t b = 0; b < B; ++b) {
          for (std::size_t co = 0; co < Co; ++co) {
            const T* drow = dy + (b * Co + co) * To;
            T dbias = 0;
            for (std::size_t t = 0; t < To; ++t) dbias += drow[t];
            bn->grad[co] += dbias;
            for (std::size_t ci = 0; ci < Ci; ++ci) {
              const T* xrow = xv + (b * Ci + ci) * Ti;
              T* dxrow = xn->grad.data() + (b * Ci + ci) * Ti;
              const T* wrow = wv + (co * Ci + ci) * K;
              T* dwrow = wn->grad.data() + (co * Ci + ci) * K;
              for (std::size_t k = 0; k < K; ++k) {
                const long shift = static_cast<long>(k) - p;
                const std::size_t t0 = shift < 0 ? static_cast<std::size_t>(-shift) : 0;
                const std::size_t t1 =
                    std::min<long>(To, static_cast<long>(Ti) - shift) > 0
                        ? static_cast<std::size_t>(std::min<long>(To, static_cast<long>(Ti) - shift))
                        : 0;
                const T w = wrow[k];
                T dw = 0;
                const T* xs = xrow + shift;
                T* dxs = dxrow + shift;
                for (std::size_t t = t0; t < t1; ++t) {
                  dw += drow[t] * xs[t];
                  dxs[t] += drow[t] * w;
                }
                dwrow[k] += dw;
              }
            }
          }
        }
      });
}

template <typename T>
Tensor<T> tconv1d_op(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                     std::size_t padding) {
  check_bct(x, "tconv1d");
  const std::size_t B = x.shape()[0], Ci = x.shape()[1], Ti = x.shape()[2];
  if (weight.shape()[0] != Ci) {
    throw std::invalid_argument("tconv1d: input has " + std::to_string(Ci) +
                                " channels but weight expects " + std::to_string(weight.shape()[0]));
  }
  const std::size_t Co = weight.shape()[1], K = weight.shape()[2];
  if (bias.shape() != Shape{Co}) throw std::invalid_argument("tconv1d: bias shape mismatch");
  const long to_signed =
      static_cast<long>(Ti) - 2 * static_cast<long>(padding) + static_cast<long>(K) - 1;
  if (to_signed < 1) throw std::invalid_argument("tconv1d: output time length would be non-positive");
  const std::size_t To = static_cast<std::size_t>(to_signed);

  auto xn = node_of(x);
  auto wn = node_of(weight);
  auto bn = node_of(bias);
  const T* xv = xn->value.data();
  const T* wv = wn->value.data();
  const T* bv = bn->value.data();

  std::vector<T> out(B * Co * To);
  const long p = static_cast<long>(padding);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t co = 0; co < Co; ++co) {
      T* orow = out.data() + (b * Co + co) * To;
      const T bval = bv[co];
      for (std::size_t t = 0; t < To; ++t) orow[t] = bval;
      for (std::size_t ci = 0; ci < Ci; ++ci) {
        const T* xrow = xv + (b * Ci + ci) * Ti;
        const T* wrow = wv + (ci * Co + co) * K;
        for (std::size_t k = 0; k < K; ++k) {
          const T w = wrow[k];
          const long shift = p - static_cast<long>(k);
          const std::size_t t0 = shift < 0 ? static_cast<std::size_t>(-shift) : 0;
          const std::size_t t1 =
              std::min<long>(To, static_cast<long>(Ti) - shift) > 0
                  ? static_cast<std::size_t>(std::min<long>(To, static_cast<long>(Ti) - shift))
                  : 0;
          const T* xs = xrow + shift;
          for (std::size_t t = t0; t < t1; ++t) orow[t] += w * xs[t];
        }
      }
    }
  }

  return detail::make_op<T>(
      {B, Co, To}, std::move(out), {xn, wn, bn},
      [xn, wn, bn, B, Ci, Ti, Co, K, To, p](detail::Node<T>& self) {
        xn->ensure_grad();
        wn->ensure_grad();
        bn->ensure_grad();
        const T* dy = self.grad.data();
        const T* xv = xn->value.data();
        const T* wv = wn->value.data();
        for (std::size_t b = 0; b < B; ++b) {
          for (std::size_t co = 0; co < Co; ++co) {
            const T* drow = dy + (b * Co + co) * To;
            T dbias = 0;
            for (std::size_t t = 0; t < To; ++t) dbias += drow[t];
            bn->grad[co] += dbias;
            for (std::size_t ci = 0; ci < Ci; ++ci) {
              const T* xrow = xv + (b * Ci + ci) * Ti;
              T* dxrow = xn->grad.data() + (b * Ci + ci) * Ti;
              const T* wrow = wv + (ci * Co + co) * K;
              T* dwrow = wn->grad.data() + (ci * Co + co) * K;
              for (std::size_t k = 0; k < K; ++k) {
                const long shift = p - static_cast<long>(k);
                const std::size_t t0 = shift < 0 ? static_cast<std::size_t>(-shift) : 0;
                const std::size_t t1 =
                    std::min<long>(To, static_cast<long>(Ti) - shift) > 0
                        ? static_cast<std::size_t>(std::min<long>(To, static_cast<long>(Ti) - shift))
                        : 0;
                const T w = wrow[k];
                T dw = 0;
                const T* xs = xrow + shift;
                T* dxs = dxrow + shift;
                for (std::size_t t = t0; t < t1; ++t) {
                  dw += drow[t] * xs[t];
                  dxs[t] += drow[t] * w;
                }
                dwrow[k] += dw;
              }
            }
          }
        }
      });
}

template <typename T>
Tensor<T> batchnorm_train_op(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                             Tensor<T>& running_mean, Tensor<T>& running_var, T momentum, T eps) {
  check_bct(x, "batchnorm");
  const std::size_t B = x.shape()[0], C = x.shape()[1], Tt = x.shape()[2];
  if (gamma.size() != C || beta.size() != C) {
    throw std::invalid_argument("batchnorm: input has " + std::to_string(C) +
                                " channels but layer expects " + std::to_string(gamma.size()));
  }
  const std::size_t n = B * Tt;
  if (n < 2) throw std::invalid_argument("batchnorm: training needs batch*time >= 2");

  auto xn = node_of(x);
  auto gn = node_of(gamma);
  auto be = node_of(beta);
  const T* xv = xn->value.data();

  std::vector<T> mu(C, T(0)), var(C, T(0)), inv(C);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t c = 0; c < C; ++c) {
      const T* row = xv + (b * C + c) * Tt;
      T s = 0;
      for (std::size_t t = 0; t < Tt; ++t) s += row[t];
      mu[c] += s;
    }
  }
  for (std::size_t c = 0; c < C; ++c) mu[c] /= static_cast<T>(n);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t c = 0; c < C; ++c) {
      const T* row = xv + (b * C + c) * Tt;
      T s = 0;
      for (std::size_t t = 0; t < Tt; ++t) {
        T d = row[t] - mu[c];
        s += d * d;
      }
      var[c] += s;
    }
  }
  for (std::size_t c = 0; c < C; ++c) {
    var[c] /= static_cast<T>(n);
    inv[c] = T(1) / std::sqrt(var[c] + eps);
  }

  {
    auto rm = running_mean.values();
    auto rv = running_var.values();
    for (std::size_t c = 0; c < C; ++c) {
      rm[c] = (T(1) - momentum) * rm[c] + momentum * mu[c];
      rv[c] = (T(1) - momentum) * rv[c] + momentum * var[c];
    }
  }

  auto xhat = std::make_shared<std::vector<T>>(B * C * Tt);
  std::vector<T> out(B * C * Tt);
  const T* gv = gn->value.data();
  const T* bv = be->value.data();
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t c = 0; c < C; ++c) {
      const T* row = xv + (b * C + c) * Tt;
      T* hrow = xhat->data() + (b * C + c) * Tt;
      T* orow = out.data() + (b * C + c) * Tt;
      const T m = mu[c], iv = inv[c], g = gv[c], bb = bv[c];
      for (std::size_t t = 0; t < Tt; ++t) {
        hrow[t] = (row[t] - m) * iv;
        orow[t] = g * hrow[t] + bb;
      }
    }
  }

  auto invp = std::make_shared<std::vector<T>>(std::move(inv));
  return detail::make_op<T>(
      x.shape(), std::move(out), {xn, gn, be},
      [xn, gn, be, xhat, invp, B, C, Tt, n](detail::Node<T>& self) {
        xn->ensure_grad();
        gn->ensure_grad();
        be->ensure_grad();
        const T* dy = self.grad.data();
        const T* h = xhat->data();
        // per-channel sums of dy and dy*xhat
        std::vector<T> sum_dy(C, T(0)), sum_dyh(C, T(0));
        for (std::size_t b = 0; b < B; ++b) {
          for (std::size_t c = 0; c < C; ++c) {
            const T* drow = dy + (b * C + c) * Tt;
            const T* hrow = h + (b * C + c) * Tt;
            T s0 = 0, s1 = 0;
            for (std::size_t t = 0; t < Tt; ++t) {
              s0 += drow[t];
              s1 += drow[t] * hrow[t];
            }
            sum_dy[c] += s0;
            sum_dyh[c] += s1;
          }
        }
        for (std::size_t c = 0; c < C; ++c) {
          be->grad[c] += sum_dy[c];
          gn->grad[c] += sum_dyh[c];
        }
        const T* gv = gn->value.data();
        for (std::size_t b = 0; b < B; ++b) {
          for (std::size_t c = 0; c < C; ++c) {
            const T* drow = dy + (b * C + c) * Tt;
            const T* hrow = h + (b * C + c) * Tt;
            T* dxrow = xn->grad.data() + (b * C + c) * Tt;
            const T giv = gv[c] * (*invp)[c];
            const T mdy = sum_dy[c] / static_cast<T>(n);
            const T mdyh = sum_dyh[c] / static_cast<T>(n);
            for (std::size_t t = 0; t < Tt; ++t) {
              dxrow[t] += giv * (drow[t] - mdy - hrow[t] * mdyh);
            }
          }
        }
      });
}

template <typename T>
Tensor<T> batchnorm_eval_op(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                            const Tensor<T>& running_mean, const Tensor<T>& running_var, T eps) {
  check_bct(x, "batchnorm");
  const std::size_t B = x.shape()[0], C = x.shape()[1], Tt = x.shape()[2];
  if (gamma.size() != C) {
    throw std::invalid_argument("batchnorm: input has " + std::to_string(C) +
                                " channels but layer expects " + std::to_string(gamma.size()));
  }

  auto xn = node_of(x);
  auto gn = node_of(gamma);
  auto be = node_of(beta);
  auto inv = std::make_shared<std::vector<T>>(C);
  auto mean = std::make_shared<std::vector<T>>(running_mean.values().begin(),
                                               running_mean.values().end());
  for (std::size_t c = 0; c < C; ++c) {
    (*inv)[c] = T(1) / std::sqrt(running_var.values()[c] + eps);
  }

  std::vector<T> out(B * C * Tt);
  const T* xv = xn->value.data();
  const T* gv = gn->value.data();
  const T* bv = be->value.data();
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t c = 0; c < C; ++c) {
      const T* row = xv + (b * C + c) * Tt;
      T* orow = out.data() + (b * C + c) * Tt;
      const T m = (*mean)[c], iv = (*inv)[c], g = gv[c], bb = bv[c];
      for (std::size_t t = 0; t < Tt; ++t) orow[t] = g * (row[t] - m) * iv + bb;
    }
  }

  return detail::make_op<T>(
      x.shape(), std::move(out), {xn, gn, be},
      [xn, gn, be, inv, mean, B, C, Tt](detail::Node<T>& self) {
        xn->ensure_grad();
        gn->ensure_grad();
        be->ensure_grad();
        const T* dy = self.grad.data();
        const T* xv = xn->value.data();
        const T* gv = gn->value.data();
        for (std::size_t b = 0; b < B; ++b) {
          for (std::size_t c = 0; c < C; ++c) {
            const T* drow = dy + (b * C + c) * Tt;
            const T* row = xv + (b * C + c) * Tt;
            T* dxrow = xn->grad.data() + (b * C + c) * Tt;
            const T m = (*mean)[c], iv = (*inv)[c], g = gv[c];
            T dg = 0, db = 0;
            for (std::size_t t = 0; t < Tt; ++t) {
              dxrow[t] += drow[t] * g * iv;
              dg += drow[t] * (row[t] - m) * iv;
              db += drow[t];
            }
            gn->grad[c] += dg;
            be->grad[c] += db;
          }
        }
      });
}

template <typename T>
Conv1d<T>::Conv1d(std::size_t in_ch, std::size_t out_ch, std::size_t kernel_width)
    : in_channels(in_ch), out_channels(out_ch), kernel(kernel_width), padding((kernel_width - 1) / 2) {
  if (kernel % 2 == 0) throw std::invalid_argument("conv1d kernel width must be odd");
  weight = Tensor<T>::param({out_channels, in_channels, kernel},
                            std::vector<T>(out_channels * in_channels * kernel, T(0)));
  bias = Tensor<T>::param({out_channels}, std::vector<T>(out_channels, T(0)));
}

template <typename T>
void Conv1d<T>::init_uniform(SeededRng& rng) {
  const double bound = std::sqrt(1.0 / static_cast<double>(in_channels * kernel));
  for (auto& v : weight.values()) v = static_cast<T>((2.0 * rng.uniform() - 1.0) * bound);
  for (auto& v : bias.values()) v = T(0);
}

template <typename T>
void Conv1d<T>::init_identity() {
  if (in_channels != out_channels) throw std::invalid_argument("identity kernel needs in == out channels");
  auto w = weight.values();
  std::fill(w.begin(), w.end(), T(0));
  for (std::size_t c = 0; c < out_channels; ++c) w[(c * in_channels + c) * kernel + padding] = T(1);
  for (auto& v : bias.values()) v = T(0);
}

template <typename T>
TransposedConv1d<T>::TransposedConv1d(std::size_t in_ch, std::size_t out_ch, std::size_t kernel_width)
    : in_channels(in_ch), out_channels(out_ch), kernel(kernel_width), padding((kernel_width - 1) / 2) {
  if (kernel % 2 == 0) throw std::invalid_argument("tconv1d kernel width must be odd");
  weight = Tensor<T>::param({in_channels, out_channels, kernel},
                            std::vector<T>(in_channels * out_channels * kernel, T(0)));
  bias = Tensor<T>::param({out_channels}, std::vector<T>(out_channels, T(0)));
}

template <typename T>
void TransposedConv1d<T>::init_uniform(SeededRng& rng) {
  const double bound = std::sqrt(1.0 / static_cast<double>(in_channels * kernel));
  for (auto& v : weight.values()) v = static_cast<T>((2.0 * rng.uniform() - 1.0) * bound);
  for (auto& v : bias.values()) v = T(0);
}

template <typename T>
void TransposedConv1d<T>::init_identity() {
  if (in_channels != out_channels) throw std::invalid_argument("identity kernel needs in == out channels");
  auto w = weight.values();
  std::fill(w.begin(), w.end(), T(0));
  for (std::size_t c = 0; c < in_channels; ++c) w[(c * out_channels + c) * kernel + padding] = T(1);
  for (auto& v : bias.values()) v = T(0);
}

template <typename T>
BatchNorm1d<T>::BatchNorm1d(std::size_t ch) : channels(ch) {
  gamma = Tensor<T>::param({channels}, std::vector<T>(channels, T(1)));
  beta = Tensor<T>::param({channels}, std::vector<T>(channels, T(0)));
  running_mean = Tensor<T>::zeros({channels});
  running_var = Tensor<T>::full({channels}, T(1));
}

template <typename T>
Tensor<T> BatchNorm1d<T>::forward(const Tensor<T>& x, Mode mode) {
  if (mode == Mode::train) {
    return batchnorm_train_op(x, gamma, beta, running_mean, running_var, momentum, eps);
  }
  return batchnorm_eval_op(x, gamma, beta, running_mean, running_var, eps);
}

template <typename T>
Tensor<T> Dropout<T>::forward(const Tensor<T>& x, Mode mode, SeededRng& rng) const {
  if (p < 0.0 || p >= 1.0) {
    throw std::invalid_argument("dropout probability must be in [0, 1), got " + std::to_string(p));
  }
  if (mode == Mode::eval || p == 0.0) return x;
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  std::vector<T> mask(x.size());
  for (auto& m : mask) m = rng.uniform() < p ? T(0) : keep_scale;
  return apply_mask(x, std::move(mask));
}

#define UDTSEP_INSTANTIATE_NN(T)                                                               \
  template Tensor<T> conv1d_op<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,        \
                                  std::size_t);                                                \
  template Tensor<T> tconv1d_op<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,       \
                                   std::size_t);                                               \
  template Tensor<T> batchnorm_train_op<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, \
                                           Tensor<T>&, Tensor<T>&, T, T);                      \
  template Tensor<T> batchnorm_eval_op<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, \
                                          const Tensor<T>&, const Tensor<T>&, T);              \
  template struct Conv1d<T>;                                                                   \
  template struct TransposedConv1d<T>;                                                         \
  template struct BatchNorm1d<T>;                                                              \
  template struct Dropout<T>;

UDTSEP_INSTANTIATE_NN(float)
UDTSEP_INSTANTIATE_NN(double)

#undef UDTSEP_INSTANTIATE_NN

}  // namespace udtsep
