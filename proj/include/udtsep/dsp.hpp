#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace udtsep {

struct WaveClip {
  std::vector<double> samples;  // mono, nominally in [-1, 1]
  int sample_rate = 16000;
};

struct StftConfig {
  std::size_t window_size = 2048;
  std::size_t hop = 16;
  std::size_t fft_size = 2048;
  std::size_t kept_bins = 1024;
  int sample_rate = 16000;

  void validate() const;
  // floor(len / hop) + 1 with center padding
  std::size_t frame_count(std::size_t len) const { return len / hop + 1; }
};

struct MagSpectrogram {
  std::size_t frames = 0, bins = 0;
  std::vector<double> values;  // frames x bins, row-major, non-negative
  bool compressed = false;     // true means values are magnitude^0.7
  StftConfig config;

  double& at(std::size_t f, std::size_t b) { return values[f * bins + b]; }
  double at(std::size_t f, std::size_t b) const { return values[f * bins + b]; }
};

struct PhaseSpectrogram {
  std::size_t frames = 0, bins = 0;
  std::vector<double> angles;  // radians, same grid as the matching magnitudes

  double at(std::size_t f, std::size_t b) const { return angles[f * bins + b]; }
};

inline constexpr double kCompressionPower = 0.7;

// Center-padded (reflection) Hann analysis; keeps bins 0..kept_bins-1.
std::pair<MagSpectrogram, PhaseSpectrogram> stft(const WaveClip& x, const StftConfig& cfg);

// Overlap-add with Hann synthesis window and squared-window normalization.
// The dropped Nyquist bin is synthesized as zero. Output has exactly out_len
// samples, zero-filled past the synthesizable range.
WaveClip istft(const MagSpectrogram& mag, const PhaseSpectrogram& phase, std::size_t out_len);

MagSpectrogram compress(const MagSpectrogram& mag);
MagSpectrogram decompress(const MagSpectrogram& mag);

// decompress -> combine with the mixture phase -> istft
WaveClip reconstruct_waveform(const MagSpectrogram& est_mag_compressed,
                              const PhaseSpectrogram& mixture_phase, std::size_t out_len,
                              int sample_rate);

// Brickwall band-pass through the frequency domain of the whole signal.
std::vector<double> bandpass_brickwall(const std::vector<double>& x, double lo_hz, double hi_hz,
                                       int sample_rate);

}  // namespace udtsep
