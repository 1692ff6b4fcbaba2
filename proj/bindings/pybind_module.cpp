#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "udtsep/checkpoint.hpp"
#include "udtsep/cli.hpp"
#include "udtsep/corpus.hpp"
#include "udtsep/metrics.hpp"
#include "udtsep/verify.hpp"
#include "udtsep/wav.hpp"

namespace py = pybind11;
using namespace udtsep;

namespace {

using Array1d = py::array_t<double, py::array::c_style | py::array::forcecast>;
using Array2d = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::vector<double> to_vector(const Array1d& a) {
  if (a.ndim() != 1) throw std::invalid_argument("expected a 1-D array");
  return {a.data(), a.data() + a.shape(0)};
}

Array1d from_vector(const std::vector<double>& v) {
  Array1d out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

StftConfig stft_config(std::size_t window_size, std::size_t hop, std::size_t fft_size,
                       std::size_t kept_bins, int sample_rate) {
  StftConfig cfg;
  cfg.window_size = window_size;
  cfg.hop = hop;
  cfg.fft_size = fft_size;
  cfg.kept_bins = kept_bins;
  cfg.sample_rate = sample_rate;
  return cfg;
}

Array2d grid_to_array(const std::vector<double>& values, std::size_t frames, std::size_t bins) {
  Array2d out({static_cast<py::ssize_t>(frames), static_cast<py::ssize_t>(bins)});
  std::copy(values.begin(), values.end(), out.mutable_data());
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "unsupervised source separation via domain-translating auto-encoders";

  m.def(
      "stft",
      [](const Array1d& samples, std::size_t window_size, std::size_t hop, std::size_t fft_size,
         std::size_t kept_bins, int sample_rate) {
        WaveClip clip{to_vector(samples), sample_rate};
        auto [mag, phase] = stft(clip, stft_config(window_size, hop, fft_size, kept_bins, sample_rate));
        return py::make_tuple(grid_to_array(mag.values, mag.frames, mag.bins),
                              grid_to_array(phase.angles, phase.frames, phase.bins));
      },
      py::arg("samples"), py::arg("window_size") = 2048, py::arg("hop") = 16,
      py::arg("fft_size") = 2048, py::arg("kept_bins") = 1024, py::arg("sample_rate") = 16000,
      "magnitude/phase spectrograms, frames x bins");

  m.def(
      "istft",
      [](const Array2d& mag, const Array2d& phase, std::size_t out_len, std::size_t window_size,
         std::size_t hop, std::size_t fft_size, int sample_rate) {
        if (mag.ndim() != 2 || phase.ndim() != 2) throw std::invalid_argument("expected 2-D grids");
        MagSpectrogram m2;
        m2.frames = static_cast<std::size_t>(mag.shape(0));
        m2.bins = static_cast<std::size_t>(mag.shape(1));
        m2.values.assign(mag.data(), mag.data() + mag.size());
        m2.compressed = false;
        m2.config = stft_config(window_size, hop, fft_size, m2.bins, sample_rate);
        PhaseSpectrogram p2;
        p2.frames = static_cast<std::size_t>(phase.shape(0));
        p2.bins = static_cast<std::size_t>(phase.shape(1));
        p2.angles.assign(phase.data(), phase.data() + phase.size());
        return from_vector(istft(m2, p2, out_len).samples);
      },
      py::arg("mag"), py::arg("phase"), py::arg("out_len"), py::arg("window_size") = 2048,
      py::arg("hop") = 16, py::arg("fft_size") = 2048, py::arg("sample_rate") = 16000);

  m.def("si_sdr",
        [](const Array1d& reference, const Array1d& estimate) {
          return si_sdr(to_vector(reference), to_vector(estimate));
        },
        py::arg("reference"), py::arg("estimate"), "scale-invariant SDR in dB");

  m.def(
      "bss_sir_sar",
      [](const Array1d& estimate, const Array1d& target, const Array1d& interferer) {
        auto parts = bss_decompose(to_vector(estimate), to_vector(target), to_vector(interferer));
        auto [sir, sar] = sir_sar(parts);
        return py::make_tuple(sir, sar);
      },
      py::arg("estimate"), py::arg("target"), py::arg("interferer"));

  m.def(
      "summarize",
      [](const std::vector<double>& values) {
        Summary s = summarize(values);
        py::dict d;
        d["median"] = s.median;
        d["q25"] = s.q25;
        d["q75"] = s.q75;
        d["count"] = s.count;
        d["clamped"] = s.clamped;
        return d;
      },
      py::arg("values"), "median and quartiles with +-inf clamped to +-200 dB");

  m.def(
      "mix_at_0db",
      [](const Array1d& target, const Array1d& interferer, int sample_rate) {
        WaveClip t{to_vector(target), sample_rate};
        WaveClip i{to_vector(interferer), sample_rate};
        MixResult r = mix_at_0db(t, i);
        return py::make_tuple(from_vector(r.mixture.samples), from_vector(r.target.samples),
                              from_vector(r.interferer.samples), r.gain);
      },
      py::arg("target"), py::arg("interferer"), py::arg("sample_rate") = 16000);

  m.def(
      "read_wav",
      [](const std::string& path) {
        WaveClip clip = read_wav(path);
        return py::make_tuple(from_vector(clip.samples), clip.sample_rate);
      },
      py::arg("path"));

  m.def(
      "write_wav",
      [](const std::string& path, const Array1d& samples, int sample_rate) {
        write_wav(path, WaveClip{to_vector(samples), sample_rate});
      },
      py::arg("path"), py::arg("samples"), py::arg("sample_rate") = 16000);

  m.def(
      "synth_toy_corpus",
      [](const std::string& out_dir, std::size_t n_per_pool, std::uint64_t seed, int sample_rate,
         double clip_seconds) {
        ToyCorpusConfig cfg;
        cfg.sample_rate = sample_rate;
        cfg.clip_seconds = clip_seconds;
        synth_toy_corpus(out_dir, n_per_pool, cfg, seed);
      },
      py::arg("out_dir"), py::arg("n_per_pool"), py::arg("seed"), py::arg("sample_rate") = 16000,
      py::arg("clip_seconds") = 2.5);

  m.def(
      "separate",
      [](const std::string& checkpoint, const Array1d& samples, int sample_rate) {
        auto ckpt = load_checkpoint(checkpoint);
        auto cfg = stft_config_from_hyper(ckpt.hyper);
        cfg.sample_rate = sample_rate;
        WaveClip mixture{to_vector(samples), sample_rate};
        WaveClip est;
        if (ckpt.hyper.at("mode").get<std::string>() == "supervised") {
          auto model = supervised_from_checkpoint(ckpt);
          est = separate_supervised(model, mixture, cfg);
        } else {
          auto model = udt_from_checkpoint(ckpt);
          est = separate(model, mixture, cfg);
        }
        return from_vector(est.samples);
      },
      py::arg("checkpoint"), py::arg("samples"), py::arg("sample_rate") = 16000,
      "mixture-encoder to clean-decoder pathway on a mixture signal");

  m.def(
      "grad_check_suite",
      [](const std::string& precision, bool quick) {
        GradCheckOptions opt;
        opt.quick = quick;
        if (precision == "double") opt.run_single = false;
        if (precision == "single") opt.run_double = false;
        py::list out;
        for (const auto& e : run_grad_check_suite(opt)) {
          py::dict d;
          d["name"] = e.name;
          d["error"] = e.error;
          d["threshold"] = e.threshold;
          d["pass"] = e.pass;
          out.append(d);
        }
        return out;
      },
      py::arg("precision") = "both", py::arg("quick") = false);

  m.def(
      "run_cli", [](const std::vector<std::string>& args) { return run_cli(args); },
      py::arg("args"), "full command line surface; returns the exit code");
}
