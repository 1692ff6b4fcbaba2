#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "udtsep/dsp.hpp"
#include "udtsep/rng.hpp"
#include "udtsep/tensor.hpp"

namespace udtsep {

enum class DomainLabel { mixture_source_pool, clean_target_pool };

struct CorpusEntry {
  std::filesystem::path path;
  std::size_t n_samples = 0;
  int sample_rate = 0;
  std::string class_id;  // first path component under the root, e.g. "target"
};

struct CorpusIndex {
  DomainLabel domain = DomainLabel::clean_target_pool;
  std::filesystem::path root;
  std::vector<CorpusEntry> entries;

  bool has_class(const std::string& cls) const;
};

// Recursive scan for .wav files in deterministic lexicographic order.
// Throws when nothing is found or a file cannot be parsed.
CorpusIndex scan_corpus(const std::filesystem::path& root, DomainLabel domain);

struct SampledClip {
  WaveClip clip;
  std::string id;  // path relative to the corpus root
  std::size_t offset = 0;
};

// Uniformly random entry (optionally restricted to one class) and offset;
// exactly clip_len samples. Throws when every candidate is too short.
SampledClip sample_clip(const CorpusIndex& index, SeededRng& rng, std::size_t clip_len,
                        const std::string& class_filter = "");

struct MixResult {
  WaveClip mixture;
  WaveClip target;      // stem after any joint peak normalization
  WaveClip interferer;  // gain-scaled stem after the same normalization
  double gain = 1.0;    // rms(target) / rms(interferer)
};

// 0 dB mix on full-clip RMS. When the mixture peak exceeds 1, the mixture
// and both stems are divided by the same factor.
MixResult mix_at_0db(const WaveClip& target, const WaveClip& interferer);

struct MixRecipe {
  std::string target_id;
  std::size_t target_offset = 0;
  std::string interferer_id;
  std::size_t interferer_offset = 0;
  double gain = 1.0;
  std::uint64_t seed = 0;

  std::string to_json_line() const;
};

enum class BatchMode { unpaired, paired };

struct Batch {
  Tensor<float> mix_mags;    // (B, bins, T), compressed
  Tensor<float> clean_mags;  // (B, bins, T), compressed
  bool paired = false;
  std::vector<std::string> mix_ids;    // provenance of the mixture target stems
  std::vector<std::string> clean_ids;  // provenance of the clean clips
  std::vector<MixRecipe> recipes;
  // retained in paired mode for reconstruction and evaluation
  std::vector<PhaseSpectrogram> mix_phases;
  std::vector<MagSpectrogram> clean_mag_specs;
  std::vector<PhaseSpectrogram> clean_phases;
  std::vector<WaveClip> mix_waves, target_waves, interferer_waves;
};

// Unpaired: B mixtures synthesized from the mixture pool's target/interferer
// stems and B independent clips from the clean pool. Paired: clean item i is
// the exact target stem of mixture i. crop_frames == 0 keeps full length.
Batch make_batch(const CorpusIndex& mix_index, const CorpusIndex& clean_index, std::size_t batch,
                 BatchMode mode, SeededRng& rng, const StftConfig& stft_cfg,
                 std::size_t clip_len, std::size_t crop_frames);

struct ToyCorpusConfig {
  int sample_rate = 16000;
  double clip_seconds = 2.5;
  double f0_min_hz = 200.0, f0_max_hz = 400.0;
  double target_max_hz = 4000.0;          // harmonics capped below this
  double noise_lo_hz = 4500.0, noise_hi_hz = 7000.0;
};

// Writes three pools under out_dir: clean-target/ (harmonic tones),
// mixture-stems/target/ (independently drawn harmonic tones) and
// mixture-stems/interferer/ (band-passed noise bursts). Deterministic under
// the seed, n files per pool.
void synth_toy_corpus(const std::filesystem::path& out_dir, std::size_t n_per_pool,
                      const ToyCorpusConfig& cfg, std::uint64_t seed);

struct EvalSetPaths {
  std::filesystem::path manifest;      // csv: id,mixture,target,interferer
  std::filesystem::path recipe_log;    // one JSON object per mixture
  std::size_t n_items = 0;
};

// Materializes n mixture/target/interferer triples from a mixture pool for
// separation + evaluation runs.
EvalSetPaths synth_eval_set(const CorpusIndex& mix_index, std::size_t n_items,
                            const std::filesystem::path& out_dir, SeededRng& rng,
                            std::size_t clip_len);

}  // namespace udtsep
