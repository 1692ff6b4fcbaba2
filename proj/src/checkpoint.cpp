#include "udtsep/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace udtsep {

namespace {

void write_u32(std::ostream& out, std::uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
               static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b, 4);
}

void write_u64(std::ostream& out, std::uint64_t v) {
  write_u32(out, static_cast<std::uint32_t>(v & 0xffffffffull));
  write_u32(out, static_cast<std::uint32_t>(v >> 32));
}

std::uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint64_t read_u64(std::istream& in) {
  std::uint64_t lo = read_u32(in);
  std::uint64_t hi = read_u32(in);
  return lo | (hi << 32);
}

}  // namespace

const Tensor<float>& CheckpointData::find(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return t;
  }
  throw std::runtime_error("checkpoint: missing tensor '" + name + "'");
}

void save_checkpoint(const std::filesystem::path& path, const nlohmann::json& hyper,
                     const std::vector<std::pair<std::string, Tensor<float>>>& tensors) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(kCheckpointMagic, 4);
    write_u32(out, kCheckpointVersion);
    const std::string hyper_str = hyper.dump();
    write_u32(out, static_cast<std::uint32_t>(hyper_str.size()));
    out.write(hyper_str.data(), static_cast<std::streamsize>(hyper_str.size()));

    write_u32(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, tensor] : tensors) {
      write_u32(out, static_cast<std::uint32_t>(name.size()));
      out.write(name.data(), static_cast<std::streamsize>(name.size()));
      const auto& shape = tensor.shape();
      write_u32(out, static_cast<std::uint32_t>(shape.size()));
      for (std::size_t d : shape) write_u64(out, d);
      auto vals = tensor.values();
      out.write(reinterpret_cast<const char*>(vals.data()),
                static_cast<std::streamsize>(vals.size() * sizeof(float)));
    }
    if (!out) throw std::runtime_error("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

CheckpointData load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kCheckpointMagic, 4) != 0) {
    throw std::runtime_error("not a UDTW checkpoint: " + path.string());
  }
  const std::uint32_t version = read_u32(in);
  if (version != kCheckpointVersion) {
    throw std::runtime_error("checkpoint version mismatch: file has " + std::to_string(version) +
                             ", expected " + std::to_string(kCheckpointVersion));
  }

  CheckpointData ckpt;
  const std::uint32_t hyper_len = read_u32(in);
  std::string hyper_str(hyper_len, '\0');
  in.read(hyper_str.data(), hyper_len);
  ckpt.hyper = nlohmann::json::parse(hyper_str);

  const std::uint32_t n_tensors = read_u32(in);
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    const std::uint32_t name_len = read_u32(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const std::uint32_t ndim = read_u32(in);
    Shape shape(ndim);
    for (auto& d : shape) d = read_u64(in);
    std::vector<float> data(numel(shape));
    in.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(float)));
    if (!in) throw std::runtime_error("truncated checkpoint " + path.string());
    ckpt.tensors.emplace_back(std::move(name), Tensor<float>(std::move(shape), std::move(data)));
  }
  return ckpt;
}

nlohmann::json model_hyper(const ModelConfig& cfg, const StftConfig& stft_cfg,
                           const std::string& mode, std::size_t step) {
  return nlohmann::json{
      {"mode", mode},
      {"step", step},
      {"model",
       {{"bins", cfg.bins},
        {"width", cfg.width},
        {"kernel", cfg.kernel},
        {"dropout_p", cfg.dropout_p},
        {"batchnorm", cfg.use_batchnorm},
        {"add_noise", cfg.add_noise},
        {"activation", cfg.activation == Activation::softplus ? "softplus" : "identity"}}},
      {"stft",
       {{"window_size", stft_cfg.window_size},
        {"hop", stft_cfg.hop},
        {"fft_size", stft_cfg.fft_size},
        {"kept_bins", stft_cfg.kept_bins},
        {"sample_rate", stft_cfg.sample_rate}}}};
}

ModelConfig model_config_from_hyper(const nlohmann::json& hyper) {
  const auto& m = hyper.at("model");
  ModelConfig cfg;
  cfg.bins = m.at("bins").get<std::size_t>();
  cfg.width = m.at("width").get<std::size_t>();
  cfg.kernel = m.at("kernel").get<std::size_t>();
  cfg.dropout_p = m.at("dropout_p").get<double>();
  cfg.use_batchnorm = m.at("batchnorm").get<bool>();
  cfg.add_noise = m.at("add_noise").get<bool>();
  cfg.activation =
      m.at("activation").get<std::string>() == "identity" ? Activation::identity : Activation::softplus;
  return cfg;
}

StftConfig stft_config_from_hyper(const nlohmann::json& hyper) {
  const auto& s = hyper.at("stft");
  StftConfig cfg;
  cfg.window_size = s.at("window_size").get<std::size_t>();
  cfg.hop = s.at("hop").get<std::size_t>();
  cfg.fft_size = s.at("fft_size").get<std::size_t>();
  cfg.kept_bins = s.at("kept_bins").get<std::size_t>();
  cfg.sample_rate = s.at("sample_rate").get<int>();
  return cfg;
}

void save_model(const std::filesystem::path& path, const UdtModel<float>& model,
                const StftConfig& stft_cfg, std::size_t step) {
  save_checkpoint(path, model_hyper(model.cfg, stft_cfg, "udt", step), model.named_tensors());
}

void save_model(const std::filesystem::path& path, const SupervisedModel<float>& model,
                const StftConfig& stft_cfg, std::size_t step) {
  save_checkpoint(path, model_hyper(model.cfg, stft_cfg, "supervised", step),
                  model.named_tensors());
}

namespace {

void restore_tensors(const CheckpointData& ckpt,
                     const std::vector<std::pair<std::string, Tensor<float>>>& dst) {
  for (auto [name, tensor] : dst) {
    const Tensor<float>& src = ckpt.find(name);
    if (src.shape() != tensor.shape()) {
      throw std::runtime_error("checkpoint: tensor '" + name + "' has shape " +
                               shape_str(src.shape()) + ", model expects " +
                               shape_str(tensor.shape()));
    }
    auto in = src.values();
    auto out = tensor.values();
    std::copy(in.begin(), in.end(), out.begin());
  }
}

}  // namespace

UdtModel<float> udt_from_checkpoint(const CheckpointData& ckpt) {
  if (ckpt.hyper.at("mode").get<std::string>() != "udt") {
    throw std::runtime_error("checkpoint holds a '" + ckpt.hyper.at("mode").get<std::string>() +
                             "' model, expected 'udt'");
  }
  SeededRng rng(0);
  auto model = UdtModel<float>::create(model_config_from_hyper(ckpt.hyper), rng);
  restore_tensors(ckpt, model.named_tensors());
  return model;
}

SupervisedModel<float> supervised_from_checkpoint(const CheckpointData& ckpt) {
  if (ckpt.hyper.at("mode").get<std::string>() != "supervised") {
    throw std::runtime_error("checkpoint holds a '" + ckpt.hyper.at("mode").get<std::string>() +
                             "' model, expected 'supervised'");
  }
  SeededRng rng(0);
  auto model = SupervisedModel<float>::create(model_config_from_hyper(ckpt.hyper), rng);
  restore_tensors(ckpt, model.named_tensors());
  return model;
}

}  // namespace udtsep
