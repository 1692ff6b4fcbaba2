#pragma once

#include <filesystem>

#include "udtsep/dsp.hpp"

namespace udtsep {

struct WavInfo {
  std::size_t n_samples = 0;
  int sample_rate = 0;
};

// RIFF PCM, 16-bit signed little-endian, mono. Samples scale by 1/32768.
WaveClip read_wav(const std::filesystem::path& path);

// Header-only probe, used when indexing a corpus.
WavInfo read_wav_info(const std::filesystem::path& path);

// round(v * 32768) clamped to int16; written via temp file + rename
void write_wav(const std::filesystem::path& path, const WaveClip& clip);

}  // namespace udtsep
