#include "udtsep/dsp.hpp"

#include <cmath>
#include <filesystem>
#include <numbers>
#include <span>

#include "doctest.h"
#include "udtsep/rng.hpp"
#include "udtsep/wav.hpp"

using namespace udtsep;

namespace {

// Random band-limited clip: a sum of sinusoids below max_hz. Content near
// the Nyquist bin is excluded on purpose; that bin is dropped by the
// 1024-bin grid and cannot round-trip.
WaveClip random_bandlimited_clip(std::size_t n, double max_hz, SeededRng& rng,
                                 int sample_rate = 16000) {
  WaveClip clip;
  clip.sample_rate = sample_rate;
  clip.samples.assign(n, 0.0);
  const int tones = 40;
  for (int k = 0; k < tones; ++k) {
    const double f = 40.0 + rng.uniform() * (max_hz - 40.0);
    const double amp = (0.2 + 0.8 * rng.uniform()) / tones;
    const double phase = rng.uniform() * 2.0 * std::numbers::pi;
    const double w = 2.0 * std::numbers::pi * f / sample_rate;
    for (std::size_t i = 0; i < n; ++i) clip.samples[i] += amp * std::sin(w * i + phase);
  }
  return clip;
}

// relative error over the interior; the reflective boundary kink puts real
// energy into the dropped Nyquist bin, so edge frames cannot hit 1e-6
double rel_err_interior(std::span<const double> a, std::span<const double> b,
                        std::size_t margin) {
  double num = 0, den = 0;
  for (std::size_t i = margin; i + margin < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += a[i] * a[i];
  }
  return std::sqrt(num / den);
}

}  // namespace

TEST_CASE("stft frame grid and zero signal") {
  StftConfig cfg;
  WaveClip zero;
  zero.samples.assign(32000, 0.0);
  auto [mag, phase] = stft(zero, cfg);
  CHECK(mag.frames == 2001);
  CHECK(mag.bins == 1024);
  CHECK(phase.frames == 2001);
  for (double v : mag.values) CHECK(v == 0.0);

  WaveClip empty;
  CHECK_THROWS_AS(stft(empty, cfg), std::invalid_argument);
}

TEST_CASE("stft concentrates a bin-aligned sine") {
  StftConfig cfg;
  const double f = 100.0 * 16000.0 / 2048.0;  // exactly bin 100
  WaveClip x;
  x.samples.resize(16000);
  for (std::size_t i = 0; i < x.samples.size(); ++i) {
    x.samples[i] = 0.5 * std::sin(2.0 * std::numbers::pi * f * i / 16000.0);
  }
  auto [mag, phase] = stft(x, cfg);
  // interior frames only, away from the reflective edges
  for (std::size_t fr = 100; fr < mag.frames - 100; fr += 97) {
    double total = 0, local = 0;
    for (std::size_t b = 0; b < mag.bins; ++b) {
      const double e = mag.at(fr, b) * mag.at(fr, b);
      total += e;
      if (b >= 99 && b <= 101) local += e;
    }
    CHECK(local / total > 0.9);
  }
}

TEST_CASE("stft magnitude scales with |alpha|") {
  SeededRng rng(3);
  StftConfig cfg;
  auto x = random_bandlimited_clip(8000, 7000.0, rng);
  WaveClip x2 = x;
  for (auto& v : x2.samples) v *= 2.0;
  auto [m1, p1] = stft(x, cfg);
  auto [m2, p2] = stft(x2, cfg);
  for (std::size_t i = 0; i < m1.values.size(); i += 911) {
    CHECK(m2.values[i] == doctest::Approx(2.0 * m1.values[i]).epsilon(1e-9));
  }
}

TEST_CASE("istft round trip on band-limited clips") {
  SeededRng rng(5);
  StftConfig cfg;
  for (int trial = 0; trial < 3; ++trial) {
    auto x = random_bandlimited_clip(32000, 7000.0, rng);
    auto [mag, phase] = stft(x, cfg);
    auto y = istft(mag, phase, x.samples.size());
    REQUIRE(y.samples.size() == x.samples.size());
    CHECK(rel_err_interior(x.samples, y.samples, 2048) < 1e-6);
  }
}

TEST_CASE("istft zero magnitudes and exact output length") {
  StftConfig cfg;
  WaveClip x;
  x.samples.assign(4000, 0.25);
  auto [mag, phase] = stft(x, cfg);
  for (auto& v : mag.values) v = 0.0;
  auto y = istft(mag, phase, 1234);
  CHECK(y.samples.size() == 1234);
  for (double v : y.samples) CHECK(v == 0.0);

  SUBCASE("grid mismatch is rejected") {
    PhaseSpectrogram bad = phase;
    bad.frames -= 1;
    bad.angles.resize(bad.frames * bad.bins);
    CHECK_THROWS_AS(istft(mag, bad, 4000), std::invalid_argument);
  }
}

TEST_CASE("compress and decompress") {
  MagSpectrogram m;
  m.frames = 1;
  m.bins = 3;
  m.values = {1.0, 0.0, 0.25};
  m.compressed = false;

  auto c = compress(m);
  CHECK(c.compressed);
  CHECK(c.values[0] == doctest::Approx(1.0));
  CHECK(c.values[1] == doctest::Approx(0.0));
  CHECK(c.values[2] == doctest::Approx(std::pow(0.25, 0.7)).epsilon(1e-12));
  CHECK(c.values[2] == doctest::Approx(0.378929).epsilon(1e-5));

  SUBCASE("round trip identity") {
    SeededRng rng(9);
    MagSpectrogram r;
    r.frames = 16;
    r.bins = 8;
    r.values.resize(128);
    for (auto& v : r.values) v = rng.uniform() * 3.0;
    auto back = decompress(compress(r));
    for (std::size_t i = 0; i < r.values.size(); ++i) {
      CHECK(back.values[i] == doctest::Approx(r.values[i]).epsilon(1e-6));
    }
  }
  SUBCASE("monotone") {
    SeededRng rng(10);
    for (int i = 0; i < 50; ++i) {
      double v1 = rng.uniform() * 5.0, v2 = rng.uniform() * 5.0;
      if (v1 == v2) continue;
      if (v1 > v2) std::swap(v1, v2);
      MagSpectrogram two;
      two.frames = 1;
      two.bins = 2;
      two.values = {v1, v2};
      auto cc = compress(two);
      CHECK(cc.values[0] < cc.values[1]);
    }
  }
  SUBCASE("state errors") {
    CHECK_THROWS_AS(compress(c), std::invalid_argument);     // double compression
    CHECK_THROWS_AS(decompress(m), std::invalid_argument);   // not compressed
    MagSpectrogram neg = m;
    neg.values[0] = -0.5;
    CHECK_THROWS_AS(compress(neg), std::invalid_argument);
  }
}

TEST_CASE("reconstruct_waveform pipeline") {
  SeededRng rng(12);
  StftConfig cfg;
  auto x = random_bandlimited_clip(16000, 7000.0, rng);
  auto [mag, phase] = stft(x, cfg);
  auto est = compress(mag);
  auto y = reconstruct_waveform(est, phase, x.samples.size(), x.sample_rate);
  REQUIRE(y.samples.size() == x.samples.size());
  CHECK(rel_err_interior(x.samples, y.samples, 2048) < 1e-6);

  SUBCASE("zero estimate gives silence of the requested length") {
    for (auto& v : est.values) v = 0.0;
    auto z = reconstruct_waveform(est, phase, 5000, x.sample_rate);
    CHECK(z.samples.size() == 5000);
    for (double v : z.samples) CHECK(v == 0.0);
  }
}

TEST_CASE("wav round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "udtsep_wav_test";
  std::filesystem::create_directories(dir);
  SeededRng rng(15);

  WaveClip x;
  x.sample_rate = 16000;
  x.samples.resize(4321);
  for (auto& v : x.samples) v = 0.8 * (2.0 * rng.uniform() - 1.0);

  const auto path = dir / "clip.wav";
  write_wav(path, x);
  auto info = read_wav_info(path);
  CHECK(info.n_samples == x.samples.size());
  CHECK(info.sample_rate == 16000);

  auto y = read_wav(path);
  REQUIRE(y.samples.size() == x.samples.size());
  // PCM16 quantization error only
  for (std::size_t i = 0; i < x.samples.size(); ++i) {
    CHECK(std::abs(y.samples[i] - x.samples[i]) <= 0.5 / 32768.0 + 1e-12);
  }

  // write(read(file)) is bit stable
  write_wav(dir / "clip2.wav", y);
  auto z = read_wav(dir / "clip2.wav");
  for (std::size_t i = 0; i < y.samples.size(); ++i) CHECK(z.samples[i] == y.samples[i]);

  CHECK_THROWS(read_wav(dir / "missing.wav"));
  std::filesystem::remove_all(dir);
}
