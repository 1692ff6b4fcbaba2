#include "udtsep/dsp.hpp"

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>

namespace udtsep {

namespace {

// FFTW plan creation is not thread safe; execution via the array-execute
// interface is. Plans are cached per FFT size.
class FftwPlans {
 public:
  static FftwPlans& instance() {
    static FftwPlans p;
    return p;
  }

  void forward(std::size_t n, double* in, std::complex<double>* out) {
    fftw_execute_dft_r2c(get(n).fwd, in, reinterpret_cast<fftw_complex*>(out));
  }

  void inverse(std::size_t n, std::complex<double>* in, double* out) {
    fftw_execute_dft_c2r(get(n).inv, reinterpret_cast<fftw_complex*>(in), out);
  }

 private:
  struct Pair {
    fftw_plan fwd;
    fftw_plan inv;
  };

  Pair& get(std::size_t n) {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = plans_.find(n);
    if (it == plans_.end()) {
      std::vector<double> re(n);
      std::vector<std::complex<double>> cx(n / 2 + 1);
      Pair p;
      p.fwd = fftw_plan_dft_r2c_1d(static_cast<int>(n), re.data(),
                                   reinterpret_cast<fftw_complex*>(cx.data()), FFTW_ESTIMATE);
      p.inv = fftw_plan_dft_c2r_1d(static_cast<int>(n),
                                   reinterpret_cast<fftw_complex*>(cx.data()), re.data(),
                                   FFTW_ESTIMATE);
      it = plans_.emplace(n, p).first;
    }
    return it->second;
  }

  std::mutex mu_;
  std::map<std::size_t, Pair> plans_;
};

std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                 static_cast<double>(n)));
  }
  return w;
}

// Reflection padding that keeps folding at the boundaries when the pad
// exceeds the signal length.
double reflect_sample(const std::vector<double>& x, long i) {
  const long n = static_cast<long>(x.size());
  if (n == 1) return x[0];
  const long period = 2 * (n - 1);
  long m = i % period;
  if (m < 0) m += period;
  if (m >= n) m = period - m;
  return x[static_cast<std::size_t>(m)];
}

void check_grids(std::size_t mf, std::size_t mb, std::size_t pf, std::size_t pb) {
  if (mf != pf || mb != pb) {
    throw std::invalid_argument("magnitude grid " + std::to_string(mf) + "x" + std::to_string(mb) +
                                " does not match phase grid " + std::to_string(pf) + "x" +
                                std::to_string(pb));
  }
}

}  // namespace

void StftConfig::validate() const {
  if (window_size == 0 || hop == 0 || fft_size == 0) {
    throw std::invalid_argument("stft config: sizes must be positive");
  }
  if (hop > window_size) throw std::invalid_argument("stft config: hop must not exceed window size");
  if (window_size > fft_size) {
    throw std::invalid_argument("stft config: window must not exceed fft size");
  }
  if (kept_bins == 0 || kept_bins > fft_size / 2 + 1) {
    throw std::invalid_argument("stft config: kept_bins must be in [1, fft_size/2 + 1]");
  }
  if (sample_rate <= 0) throw std::invalid_argument("stft config: sample rate must be positive");
}

std::pair<MagSpectrogram, PhaseSpectrogram> stft(const WaveClip& x, const StftConfig& cfg) {
  cfg.validate();
  if (x.samples.empty()) throw std::invalid_argument("stft: empty input");

  const std::size_t W = cfg.window_size;
  const std::size_t N = cfg.fft_size;
  const std::size_t half = W / 2;
  const std::size_t frames = cfg.frame_count(x.samples.size());
  const std::vector<double> win = hann_window(W);

  MagSpectrogram mag;
  mag.frames = frames;
  mag.bins = cfg.kept_bins;
  mag.values.resize(frames * cfg.kept_bins);
  mag.compressed = false;
  mag.config = cfg;

  PhaseSpectrogram phase;
  phase.frames = frames;
  phase.bins = cfg.kept_bins;
  phase.angles.resize(frames * cfg.kept_bins);

  std::vector<double> frame(N, 0.0);
  std::vector<std::complex<double>> spec(N / 2 + 1);
  auto& plans = FftwPlans::instance();

  for (std::size_t f = 0; f < frames; ++f) {
    const long start = static_cast<long>(f * cfg.hop) - static_cast<long>(half);
    for (std::size_t i = 0; i < W; ++i) {
      frame[i] = reflect_sample(x.samples, start + static_cast<long>(i)) * win[i];
    }
    for (std::size_t i = W; i < N; ++i) frame[i] = 0.0;
    plans.forward(N, frame.data(), spec.data());
    for (std::size_t b = 0; b < cfg.kept_bins; ++b) {
      mag.values[f * cfg.kept_bins + b] = std::abs(spec[b]);
      phase.angles[f * cfg.kept_bins + b] = std::arg(spec[b]);
    }
  }
  return {std::move(mag), std::move(phase)};
}

WaveClip istft(const MagSpectrogram& mag, const PhaseSpectrogram& phase, std::size_t out_len) {
  check_grids(mag.frames, mag.bins, phase.frames, phase.bins);
  if (mag.compressed) throw std::invalid_argument("istft: magnitudes are still compressed");
  const StftConfig& cfg = mag.config;
  cfg.validate();
  if (mag.bins != cfg.kept_bins) throw std::invalid_argument("istft: bins do not match config");

  const std::size_t W = cfg.window_size;
  const std::size_t N = cfg.fft_size;
  const std::size_t half = W / 2;
  const std::vector<double> win = hann_window(W);

  const std::size_t padded_len = (mag.frames - 1) * cfg.hop + W;
  std::vector<double> acc(padded_len, 0.0);
  std::vector<double> den(padded_len, 0.0);

  std::vector<std::complex<double>> spec(N / 2 + 1, std::complex<double>(0.0, 0.0));
  std::vector<double> frame(N);
  auto& plans = FftwPlans::instance();
  const double inv_n = 1.0 / static_cast<double>(N);

  for (std::size_t f = 0; f < mag.frames; ++f) {
    for (std::size_t b = 0; b < cfg.kept_bins; ++b) {
      const double m = mag.values[f * cfg.kept_bins + b];
      const double a = phase.angles[f * cfg.kept_bins + b];
      spec[b] = std::polar(m, a);
    }
    for (std::size_t b = cfg.kept_bins; b < N / 2 + 1; ++b) spec[b] = 0.0;
    plans.inverse(N, spec.data(), frame.data());
    const std::size_t off = f * cfg.hop;
    for (std::size_t i = 0; i < W; ++i) {
      acc[off + i] += frame[i] * inv_n * win[i];
      den[off + i] += win[i] * win[i];
    }
  }

  WaveClip out;
  out.sample_rate = cfg.sample_rate;
  out.samples.assign(out_len, 0.0);
  const double tiny = 1e-12;
  for (std::size_t i = 0; i < out_len; ++i) {
    const std::size_t j = i + half;
    if (j < padded_len && den[j] > tiny) out.samples[i] = acc[j] / den[j];
  }
  return out;
}

MagSpectrogram compress(const MagSpectrogram& mag) {
  if (mag.compressed) throw std::invalid_argument("compress: magnitudes already compressed");
  MagSpectrogram out = mag;
  for (auto& v : out.values) {
    if (v < 0.0) throw std::invalid_argument("compress: negative magnitude");
    v = std::pow(v, kCompressionPower);
  }
  out.compressed = true;
  return out;
}

MagSpectrogram decompress(const MagSpectrogram& mag) {
  if (!mag.compressed) throw std::invalid_argument("decompress: magnitudes are not compressed");
  MagSpectrogram out = mag;
  for (auto& v : out.values) {
    if (v < 0.0) throw std::invalid_argument("decompress: negative magnitude");
    v = std::pow(v, 1.0 / kCompressionPower);
  }
  out.compressed = false;
  return out;
}

WaveClip reconstruct_waveform(const MagSpectrogram& est_mag_compressed,
                              const PhaseSpectrogram& mixture_phase, std::size_t out_len,
                              int sample_rate) {
  MagSpectrogram mag = decompress(est_mag_compressed);
  mag.config.sample_rate = sample_rate;
  return istft(mag, mixture_phase, out_len);
}

std::vector<double> bandpass_brickwall(const std::vector<double>& x, double lo_hz, double hi_hz,
                                       int sample_rate) {
  if (x.empty()) throw std::invalid_argument("bandpass: empty input");
  const std::size_t n = x.size();
  std::vector<double> buf = x;
  std::vector<std::complex<double>> spec(n / 2 + 1);
  auto& plans = FftwPlans::instance();
  plans.forward(n, buf.data(), spec.data());
  const double hz_per_bin = static_cast<double>(sample_rate) / static_cast<double>(n);
  for (std::size_t b = 0; b < spec.size(); ++b) {
    const double f = static_cast<double>(b) * hz_per_bin;
    if (f < lo_hz || f > hi_hz) spec[b] = 0.0;
  }
  plans.inverse(n, spec.data(), buf.data());
  const double inv_n = 1.0 / static_cast<double>(n);
  for (auto& v : buf) v *= inv_n;
  return buf;
}

}  // namespace udtsep
