#include "udtsep/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include "json.hpp"
#include "udtsep/wav.hpp"

namespace udtsep {

namespace {

double rms(const WaveClip& clip) {
  double s = 0;
  for (double v : clip.samples) s += v * v;
  return std::sqrt(s / static_cast<double>(clip.samples.size()));
}

std::string relative_id(const std::filesystem::path& path, const std::filesystem::path& root) {
  return std::filesystem::relative(path, root).generic_string();
}

// frames x bins (double) -> channel-major float rows of one batch item
void fill_item(std::vector<float>& dst, std::size_t item, std::size_t bins, std::size_t frames,
               const MagSpectrogram& mag, std::size_t frame0) {
  float* base = dst.data() + item * bins * frames;
  for (std::size_t b = 0; b < bins; ++b) {
    float* row = base + b * frames;
    for (std::size_t f = 0; f < frames; ++f) {
      row[f] = static_cast<float>(mag.at(frame0 + f, b));
    }
  }
}

std::size_t pick_crop(std::size_t total_frames, std::size_t crop, SeededRng& rng) {
  if (crop == 0 || crop >= total_frames) return 0;
  return static_cast<std::size_t>(rng.next_u64() % (total_frames - crop + 1));
}

}  // namespace

bool CorpusIndex::has_class(const std::string& cls) const {
  return std::any_of(entries.begin(), entries.end(),
                     [&](const CorpusEntry& e) { return e.class_id == cls; });
}

CorpusIndex scan_corpus(const std::filesystem::path& root, DomainLabel domain) {
  if (!std::filesystem::exists(root)) {
    throw std::runtime_error("corpus root does not exist: " + root.string());
  }
  CorpusIndex index;
  index.domain = domain;
  index.root = root;

  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    auto ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    if (ext == ".wav") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end(),
            [](const auto& a, const auto& b) { return a.generic_string() < b.generic_string(); });
  if (files.empty()) throw std::runtime_error("no WAV files under " + root.string());

  for (const auto& path : files) {
    WavInfo info;
    try {
      info = read_wav_info(path);
    } catch (const std::exception& e) {
      throw std::runtime_error("unreadable corpus file " + path.string() + ": " + e.what());
    }
    CorpusEntry e;
    e.path = path;
    e.n_samples = info.n_samples;
    e.sample_rate = info.sample_rate;
    auto rel = std::filesystem::relative(path, root);
    e.class_id = rel.has_parent_path() ? rel.begin()->generic_string() : std::string();
    index.entries.push_back(std::move(e));
  }
  return index;
}

SampledClip sample_clip(const CorpusIndex& index, SeededRng& rng, std::size_t clip_len,
                        const std::string& class_filter) {
  std::vector<const CorpusEntry*> eligible;
  for (const auto& e : index.entries) {
    if (!class_filter.empty() && e.class_id != class_filter) continue;
    if (e.n_samples >= clip_len) eligible.push_back(&e);
  }
  if (eligible.empty()) {
    throw std::runtime_error("no corpus entry of at least " + std::to_string(clip_len) +
                             " samples" +
                             (class_filter.empty() ? "" : " in class '" + class_filter + "'") +
                             " under " + index.root.string());
  }
  const CorpusEntry& e = *eligible[rng.next_u64() % eligible.size()];
  const std::size_t max_offset = e.n_samples - clip_len;
  const std::size_t offset =
      max_offset == 0 ? 0 : static_cast<std::size_t>(rng.next_u64() % (max_offset + 1));

  WaveClip full = read_wav(e.path);
  SampledClip out;
  out.clip.sample_rate = full.sample_rate;
  out.clip.samples.assign(full.samples.begin() + static_cast<long>(offset),
                          full.samples.begin() + static_cast<long>(offset + clip_len));
  out.id = relative_id(e.path, index.root);
  out.offset = offset;
  return out;
}

MixResult mix_at_0db(const WaveClip& target, const WaveClip& interferer) {
  if (target.samples.size() != interferer.samples.size()) {
    throw std::invalid_argument("mix_at_0db: stem lengths differ");
  }
  const double rt = rms(target), ri = rms(interferer);
  if (rt == 0.0 || ri == 0.0) throw std::invalid_argument("mix_at_0db: silent stem");

  MixResult r;
  r.gain = rt / ri;
  r.target = target;
  r.interferer = interferer;
  r.mixture.sample_rate = target.sample_rate;
  r.mixture.samples.resize(target.samples.size());
  for (std::size_t i = 0; i < target.samples.size(); ++i) {
    r.interferer.samples[i] *= r.gain;
    r.mixture.samples[i] = target.samples[i] + r.interferer.samples[i];
  }
  double peak = 0;
  for (double v : r.mixture.samples) peak = std::max(peak, std::abs(v));
  if (peak > 1.0) {
    const double s = 1.0 / peak;
    for (std::size_t i = 0; i < r.mixture.samples.size(); ++i) {
      r.mixture.samples[i] *= s;
      r.target.samples[i] *= s;
      r.interferer.samples[i] *= s;
    }
  }
  return r;
}

std::string MixRecipe::to_json_line() const {
  nlohmann::json j{{"target", target_id},       {"target_offset", target_offset},
                   {"interferer", interferer_id}, {"interferer_offset", interferer_offset},
                   {"gain", gain},               {"seed", seed}};
  return j.dump();
}

Batch make_batch(const CorpusIndex& mix_index, const CorpusIndex& clean_index, std::size_t batch,
                 BatchMode mode, SeededRng& rng, const StftConfig& stft_cfg,
                 std::size_t clip_len, std::size_t crop_frames) {
  if (batch == 0) throw std::invalid_argument("make_batch: batch size must be positive");
  if (mix_index.entries.empty() || clean_index.entries.empty()) {
    throw std::runtime_error("make_batch: empty corpus index");
  }
  if (!mix_index.has_class("target") || !mix_index.has_class("interferer")) {
    throw std::runtime_error(
        "make_batch: mixture pool needs target/ and interferer/ stem classes under " +
        mix_index.root.string());
  }

  const std::size_t total_frames = stft_cfg.frame_count(clip_len);
  const std::size_t frames =
      (crop_frames > 0 && crop_frames < total_frames) ? crop_frames : total_frames;
  const std::size_t bins = stft_cfg.kept_bins;

  Batch out;
  out.paired = (mode == BatchMode::paired);
  std::vector<float> mix_data(batch * bins * frames);
  std::vector<float> clean_data(batch * bins * frames);

  for (std::size_t i = 0; i < batch; ++i) {
    const std::uint64_t item_seed = rng.state();
    SampledClip tgt = sample_clip(mix_index, rng, clip_len, "target");
    SampledClip itf = sample_clip(mix_index, rng, clip_len, "interferer");
    MixResult mixed = mix_at_0db(tgt.clip, itf.clip);

    MixRecipe recipe{tgt.id, tgt.offset, itf.id, itf.offset, mixed.gain, item_seed};
    out.recipes.push_back(recipe);
    out.mix_ids.push_back(tgt.id);

    auto [mmag, mphase] = stft(mixed.mixture, stft_cfg);
    auto cm = compress(mmag);
    const std::size_t mix_crop = pick_crop(cm.frames, frames, rng);
    fill_item(mix_data, i, bins, frames, cm, mix_crop);

    if (mode == BatchMode::paired) {
      auto [tmag, tphase] = stft(mixed.target, stft_cfg);
      auto ct = compress(tmag);
      fill_item(clean_data, i, bins, frames, ct, mix_crop);  // aligned with the mixture
      out.clean_ids.push_back(tgt.id);
      out.mix_phases.push_back(std::move(mphase));
      out.clean_mag_specs.push_back(std::move(ct));
      out.clean_phases.push_back(std::move(tphase));
      out.mix_waves.push_back(mixed.mixture);
      out.target_waves.push_back(mixed.target);
      out.interferer_waves.push_back(mixed.interferer);
    } else {
      SampledClip clean = sample_clip(clean_index, rng, clip_len);
      auto [cmag, cphase] = stft(clean.clip, stft_cfg);
      auto cc = compress(cmag);
      fill_item(clean_data, i, bins, frames, cc, pick_crop(cc.frames, frames, rng));
      out.clean_ids.push_back(clean.id);
    }
  }

  out.mix_mags = Tensor<float>({batch, bins, frames}, std::move(mix_data));
  out.clean_mags = Tensor<float>({batch, bins, frames}, std::move(clean_data));
  return out;
}

namespace {

WaveClip synth_harmonic_tone(const ToyCorpusConfig& cfg, SeededRng& rng) {
  const std::size_t n = static_cast<std::size_t>(cfg.clip_seconds * cfg.sample_rate);
  WaveClip clip;
  clip.sample_rate = cfg.sample_rate;
  clip.samples.assign(n, 0.0);

  const double f0 = cfg.f0_min_hz + rng.uniform() * (cfg.f0_max_hz - cfg.f0_min_hz);
  const int partials = static_cast<int>(cfg.target_max_hz / f0);
  // slow random amplitude envelope: wobble plus attack/decay ramps
  const double wob_hz = 0.5 + 1.5 * rng.uniform();
  const double wob_phase = rng.uniform() * 2.0 * std::numbers::pi;
  const double wob_depth = 0.2 + 0.3 * rng.uniform();
  const double ramp = (0.05 + 0.15 * rng.uniform()) * cfg.sample_rate;

  for (int k = 1; k <= partials; ++k) {
    const double amp = (0.5 + 0.5 * rng.uniform()) / static_cast<double>(k);
    const double phase = rng.uniform() * 2.0 * std::numbers::pi;
    const double w = 2.0 * std::numbers::pi * f0 * k / cfg.sample_rate;
    for (std::size_t i = 0; i < n; ++i) clip.samples[i] += amp * std::sin(w * i + phase);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i);
    double env = 1.0 - wob_depth * 0.5 * (1.0 + std::sin(2.0 * std::numbers::pi * wob_hz * t /
                                                             cfg.sample_rate +
                                                         wob_phase));
    env *= std::min(1.0, t / ramp);
    env *= std::min(1.0, (static_cast<double>(n - 1) - t) / ramp);
    clip.samples[i] *= env;
  }
  double peak = 0;
  for (double v : clip.samples) peak = std::max(peak, std::abs(v));
  const double gain = (0.3 + 0.4 * rng.uniform()) / std::max(peak, 1e-9);
  for (auto& v : clip.samples) v *= gain;
  return clip;
}

WaveClip synth_noise_bursts(const ToyCorpusConfig& cfg, SeededRng& rng) {
  const std::size_t n = static_cast<std::size_t>(cfg.clip_seconds * cfg.sample_rate);
  std::vector<double> noise(n);
  for (auto& v : noise) v = rng.normal();
  noise = bandpass_brickwall(noise, cfg.noise_lo_hz, cfg.noise_hi_hz, cfg.sample_rate);

  // burst envelope over a small floor so no region is fully silent
  std::vector<double> env(n, 0.08);
  const int bursts = 3 + static_cast<int>(rng.next_u64() % 4);
  for (int b = 0; b < bursts; ++b) {
    const double center = rng.uniform() * static_cast<double>(n);
    const double width = (0.08 + 0.25 * rng.uniform()) * cfg.sample_rate;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = (static_cast<double>(i) - center) / width;
      if (std::abs(d) < 1.0) env[i] += 0.5 * (1.0 + std::cos(std::numbers::pi * d));
    }
  }

  WaveClip clip;
  clip.sample_rate = cfg.sample_rate;
  clip.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) clip.samples[i] = noise[i] * std::min(env[i], 1.2);
  double peak = 0;
  for (double v : clip.samples) peak = std::max(peak, std::abs(v));
  const double gain = (0.3 + 0.4 * rng.uniform()) / std::max(peak, 1e-9);
  for (auto& v : clip.samples) v *= gain;
  return clip;
}

}  // namespace

void synth_toy_corpus(const std::filesystem::path& out_dir, std::size_t n_per_pool,
                      const ToyCorpusConfig& cfg, std::uint64_t seed) {
  const auto clean_dir = out_dir / "clean-target";
  const auto target_dir = out_dir / "mixture-stems" / "target";
  const auto interferer_dir = out_dir / "mixture-stems" / "interferer";
  std::filesystem::create_directories(clean_dir);
  std::filesystem::create_directories(target_dir);
  std::filesystem::create_directories(interferer_dir);

  SeededRng rng(seed);
  char name[64];
  for (std::size_t i = 0; i < n_per_pool; ++i) {
    std::snprintf(name, sizeof(name), "clean_%03zu.wav", i);
    write_wav(clean_dir / name, synth_harmonic_tone(cfg, rng));
  }
  for (std::size_t i = 0; i < n_per_pool; ++i) {
    std::snprintf(name, sizeof(name), "target_%03zu.wav", i);
    write_wav(target_dir / name, synth_harmonic_tone(cfg, rng));
  }
  for (std::size_t i = 0; i < n_per_pool; ++i) {
    std::snprintf(name, sizeof(name), "interferer_%03zu.wav", i);
    write_wav(interferer_dir / name, synth_noise_bursts(cfg, rng));
  }
}

EvalSetPaths synth_eval_set(const CorpusIndex& mix_index, std::size_t n_items,
                            const std::filesystem::path& out_dir, SeededRng& rng,
                            std::size_t clip_len) {
  std::filesystem::create_directories(out_dir);
  EvalSetPaths paths;
  paths.manifest = out_dir / "eval_manifest.csv";
  paths.recipe_log = out_dir / "recipes.jsonl";
  paths.n_items = n_items;

  std::ofstream manifest(paths.manifest, std::ios::trunc);
  std::ofstream recipes(paths.recipe_log, std::ios::trunc);
  if (!manifest || !recipes) throw std::runtime_error("cannot write under " + out_dir.string());
  manifest << "id,mixture,target,interferer\n";

  char name[64];
  for (std::size_t i = 0; i < n_items; ++i) {
    const std::uint64_t item_seed = rng.state();
    SampledClip tgt = sample_clip(mix_index, rng, clip_len, "target");
    SampledClip itf = sample_clip(mix_index, rng, clip_len, "interferer");
    MixResult mixed = mix_at_0db(tgt.clip, itf.clip);

    std::snprintf(name, sizeof(name), "item_%03zu", i);
    const auto mix_path = out_dir / (std::string(name) + "_mixture.wav");
    const auto tgt_path = out_dir / (std::string(name) + "_target.wav");
    const auto itf_path = out_dir / (std::string(name) + "_interferer.wav");
    write_wav(mix_path, mixed.mixture);
    write_wav(tgt_path, mixed.target);
    write_wav(itf_path, mixed.interferer);

    manifest << name << "," << mix_path.generic_string() << "," << tgt_path.generic_string() << ","
             << itf_path.generic_string() << "\n";
    MixRecipe recipe{tgt.id, tgt.offset, itf.id, itf.offset, mixed.gain, item_seed};
    recipes << recipe.to_json_line() << "\n";
  }
  return paths;
}

}  // namespace udtsep
