#include "udtsep/corpus.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "udtsep/wav.hpp"

using namespace udtsep;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

WaveClip tone(std::size_t n, double freq, double amp = 0.2, int sr = 16000) {
  WaveClip c;
  c.sample_rate = sr;
  c.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) c.samples[i] = amp * std::sin(2.0 * M_PI * freq * i / sr);
  return c;
}

double rms(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x * x;
  return std::sqrt(s / v.size());
}

std::vector<char> file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("scan_corpus") {
  TempDir dir("udtsep_scan");
  for (int i = 0; i < 7; ++i) {
    write_wav(dir.path / ("a" + std::to_string(i) + ".wav"), tone(8000, 300.0 + i));
  }
  std::ofstream(dir.path / "notes.txt") << "not audio";

  auto index = scan_corpus(dir.path, DomainLabel::clean_target_pool);
  CHECK(index.entries.size() == 7);
  for (const auto& e : index.entries) CHECK(e.n_samples == 8000);

  SUBCASE("deterministic ordering") {
    auto again = scan_corpus(dir.path, DomainLabel::clean_target_pool);
    for (std::size_t i = 0; i < 7; ++i) CHECK(again.entries[i].path == index.entries[i].path);
  }
  SUBCASE("empty directory is an error") {
    TempDir empty("udtsep_scan_empty");
    CHECK_THROWS_AS(scan_corpus(empty.path, DomainLabel::clean_target_pool), std::runtime_error);
  }
  SUBCASE("unreadable wav names the path") {
    std::ofstream(dir.path / "broken.wav") << "RIFFxxxx";
    CHECK_THROWS_WITH_AS(scan_corpus(dir.path, DomainLabel::clean_target_pool),
                         doctest::Contains("broken.wav"), std::runtime_error);
  }
}

TEST_CASE("sample_clip") {
  TempDir dir("udtsep_sample");
  write_wav(dir.path / "long.wav", tone(5 * 16000, 250.0));
  auto index = scan_corpus(dir.path, DomainLabel::clean_target_pool);

  SeededRng rng(3);
  auto clip = sample_clip(index, rng, 32000);
  CHECK(clip.clip.samples.size() == 32000);
  CHECK(clip.id == "long.wav");

  SUBCASE("only short files is an error") {
    TempDir small("udtsep_sample_small");
    write_wav(small.path / "short.wav", tone(16000, 250.0));
    auto idx = scan_corpus(small.path, DomainLabel::clean_target_pool);
    SeededRng r(1);
    CHECK_THROWS_AS(sample_clip(idx, r, 32000), std::runtime_error);
  }
  SUBCASE("fixed seed repeats the clip") {
    SeededRng r1(9), r2(9);
    auto c1 = sample_clip(index, r1, 32000);
    auto c2 = sample_clip(index, r2, 32000);
    CHECK(c1.offset == c2.offset);
    CHECK(c1.clip.samples == c2.clip.samples);
  }
}

TEST_CASE("mix_at_0db") {
  SUBCASE("gain is the rms ratio") {
    auto t = tone(1000, 200.0, 0.1);
    auto i = tone(1000, 317.0, 0.2);
    // force exact rms by construction: rescale both stems
    const double rt = rms(t.samples), ri = rms(i.samples);
    for (auto& v : t.samples) v *= 0.1 / rt;
    for (auto& v : i.samples) v *= 0.2 / ri;
    auto mixed = mix_at_0db(t, i);
    CHECK(mixed.gain == doctest::Approx(0.5).epsilon(1e-9));
    // post-mix stems sit at exactly 0 dB
    CHECK(rms(mixed.target.samples) / rms(mixed.interferer.samples) ==
          doctest::Approx(1.0).epsilon(1e-6));
  }
  SUBCASE("identical stems double the signal") {
    auto t = tone(1000, 200.0, 0.2);
    auto mixed = mix_at_0db(t, t);
    CHECK(mixed.gain == doctest::Approx(1.0));
    for (std::size_t k = 0; k < t.samples.size(); ++k) {
      CHECK(mixed.mixture.samples[k] == doctest::Approx(2.0 * t.samples[k]).epsilon(1e-12));
    }
  }
  SUBCASE("joint peak normalization preserves 0 dB") {
    auto t = tone(1000, 200.0, 0.9);
    auto i = tone(1000, 331.0, 0.8);
    auto mixed = mix_at_0db(t, i);
    double peak = 0;
    for (double v : mixed.mixture.samples) peak = std::max(peak, std::abs(v));
    CHECK(peak <= 1.0 + 1e-12);
    CHECK(rms(mixed.target.samples) / rms(mixed.interferer.samples) ==
          doctest::Approx(1.0).epsilon(1e-6));
  }
  SUBCASE("silent stem rejected") {
    auto t = tone(1000, 200.0, 0.2);
    WaveClip z;
    z.samples.assign(1000, 0.0);
    CHECK_THROWS_AS(mix_at_0db(t, z), std::invalid_argument);
    CHECK_THROWS_AS(mix_at_0db(z, t), std::invalid_argument);
  }
}

TEST_CASE("toy corpus generation") {
  TempDir dir("udtsep_toy");
  ToyCorpusConfig cfg;
  synth_toy_corpus(dir.path / "a", 5, cfg, 11);

  auto count = [&](const fs::path& p) {
    std::size_t n = 0;
    for (auto& e : fs::directory_iterator(p)) {
      if (e.path().extension() == ".wav") ++n;
    }
    return n;
  };
  CHECK(count(dir.path / "a" / "clean-target") == 5);
  CHECK(count(dir.path / "a" / "mixture-stems" / "target") == 5);
  CHECK(count(dir.path / "a" / "mixture-stems" / "interferer") == 5);

  // every clip is at least 2 s
  auto idx = scan_corpus(dir.path / "a", DomainLabel::mixture_source_pool);
  for (const auto& e : idx.entries) CHECK(e.n_samples >= 32000);

  SUBCASE("same seed gives byte-identical files") {
    synth_toy_corpus(dir.path / "b", 5, cfg, 11);
    for (const auto& e : fs::recursive_directory_iterator(dir.path / "a")) {
      if (!e.is_regular_file()) continue;
      auto rel = fs::relative(e.path(), dir.path / "a");
      CHECK(file_bytes(e.path()) == file_bytes(dir.path / "b" / rel));
    }
  }
  SUBCASE("target clips concentrate energy below 4 kHz") {
    StftConfig scfg;
    auto clean = scan_corpus(dir.path / "a" / "clean-target", DomainLabel::clean_target_pool);
    for (const auto& e : clean.entries) {
      auto clip = read_wav(e.path);
      auto [mag, phase] = stft(clip, scfg);
      double below = 0, total = 0;
      const double hz_per_bin = 16000.0 / 2048.0;
      for (std::size_t f = 0; f < mag.frames; ++f) {
        for (std::size_t b = 0; b < mag.bins; ++b) {
          const double en = mag.at(f, b) * mag.at(f, b);
          total += en;
          if (b * hz_per_bin < 4000.0) below += en;
        }
      }
      CHECK(below / total >= 0.8);
    }
  }
}

TEST_CASE("make_batch") {
  TempDir dir("udtsep_batch");
  ToyCorpusConfig cfg;
  synth_toy_corpus(dir.path, 4, cfg, 21);
  auto mix_index = scan_corpus(dir.path / "mixture-stems", DomainLabel::mixture_source_pool);
  auto clean_index = scan_corpus(dir.path / "clean-target", DomainLabel::clean_target_pool);

  StftConfig scfg;  // 1024 bins, hop 16

  SUBCASE("unpaired shapes at full length") {
    SeededRng rng(5);
    auto batch = make_batch(mix_index, clean_index, 4, BatchMode::unpaired, rng, scfg, 32000, 0);
    CHECK(batch.mix_mags.shape() == Shape{4, 1024, 2001});
    CHECK(batch.clean_mags.shape() == Shape{4, 1024, 2001});
    CHECK_FALSE(batch.paired);
    for (float v : batch.mix_mags.values()) {
      CHECK(v >= 0.0f);
      CHECK(std::isfinite(v));
    }
  }
  SUBCASE("unpaired provenance pools are disjoint") {
    SeededRng rng(6);
    auto batch = make_batch(mix_index, clean_index, 6, BatchMode::unpaired, rng, scfg, 32000, 64);
    std::set<std::string> mix_ids(batch.mix_ids.begin(), batch.mix_ids.end());
    for (const auto& id : batch.clean_ids) CHECK(mix_ids.count(id) == 0);
  }
  SUBCASE("paired mode keeps the exact stem and reconstructs it") {
    SeededRng rng(7);
    auto batch = make_batch(mix_index, clean_index, 2, BatchMode::paired, rng, scfg, 32000, 0);
    CHECK(batch.paired);
    CHECK(batch.clean_ids == batch.mix_ids);
    REQUIRE(batch.clean_mag_specs.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
      auto rec = reconstruct_waveform(batch.clean_mag_specs[i], batch.clean_phases[i], 32000,
                                      scfg.sample_rate);
      const auto& ref = batch.target_waves[i].samples;
      double num = 0, den = 0;
      for (std::size_t k = 2048; k + 2048 < ref.size(); ++k) {
        num += (rec.samples[k] - ref[k]) * (rec.samples[k] - ref[k]);
        den += ref[k] * ref[k];
      }
      CHECK(std::sqrt(num / den) < 1e-6);
    }
  }
  SUBCASE("random crop bounds the frame axis") {
    SeededRng rng(8);
    auto batch = make_batch(mix_index, clean_index, 2, BatchMode::unpaired, rng, scfg, 32000, 128);
    CHECK(batch.mix_mags.shape() == Shape{2, 1024, 128});
  }
  SUBCASE("mixture pool without stem classes is rejected") {
    SeededRng rng(9);
    CHECK_THROWS_WITH_AS(
        make_batch(clean_index, clean_index, 2, BatchMode::unpaired, rng, scfg, 32000, 0),
        doctest::Contains("target/"), std::runtime_error);
  }
  SUBCASE("determinism under seed") {
    SeededRng r1(10), r2(10);
    auto b1 = make_batch(mix_index, clean_index, 2, BatchMode::unpaired, r1, scfg, 32000, 64);
    auto b2 = make_batch(mix_index, clean_index, 2, BatchMode::unpaired, r2, scfg, 32000, 64);
    CHECK(std::equal(b1.mix_mags.values().begin(), b1.mix_mags.values().end(),
                     b2.mix_mags.values().begin()));
    CHECK(b1.recipes.size() == 2);
    CHECK(b1.recipes[0].to_json_line() == b2.recipes[0].to_json_line());
  }
}

TEST_CASE("synth_eval_set writes triples and a manifest") {
  TempDir dir("udtsep_eval_set");
  ToyCorpusConfig cfg;
  synth_toy_corpus(dir.path / "corpus", 4, cfg, 31);
  auto mix_index =
      scan_corpus(dir.path / "corpus" / "mixture-stems", DomainLabel::mixture_source_pool);

  SeededRng rng(12);
  auto paths = synth_eval_set(mix_index, 3, dir.path / "eval", rng, 32000);
  CHECK(paths.n_items == 3);
  CHECK(fs::exists(paths.manifest));
  CHECK(fs::exists(paths.recipe_log));

  std::ifstream manifest(paths.manifest);
  std::string line;
  std::getline(manifest, line);
  CHECK(line == "id,mixture,target,interferer");
  std::size_t rows = 0;
  while (std::getline(manifest, line)) {
    if (!line.empty()) ++rows;
  }
  CHECK(rows == 3);
  for (int i = 0; i < 3; ++i) {
    auto base = dir.path / "eval" / ("item_00" + std::to_string(i));
    CHECK(read_wav_info(base.string() + "_mixture.wav").n_samples == 32000);
    CHECK(read_wav_info(base.string() + "_target.wav").n_samples == 32000);
    CHECK(read_wav_info(base.string() + "_interferer.wav").n_samples == 32000);
  }
}
