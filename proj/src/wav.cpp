#include "udtsep/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace udtsep {

namespace {

constexpr std::uint16_t kFormatPcm = 1;

std::uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint16_t read_u16(std::istream& in) {
  unsigned char b[2];
  in.read(reinterpret_cast<char*>(b), 2);
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

void write_u32(std::ostream& out, std::uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
               static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b, 4);
}

void write_u16(std::ostream& out, std::uint16_t v) {
  char b[2] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff)};
  out.write(b, 2);
}

struct WavHeader {
  int sample_rate = 0;
  std::uint16_t channels = 0;
  std::uint16_t bits = 0;
  std::uint32_t data_bytes = 0;
  std::streampos data_pos;
};

WavHeader parse_header(std::ifstream& in, const std::filesystem::path& path) {
  char tag[4];
  in.read(tag, 4);
  if (!in || std::memcmp(tag, "RIFF", 4) != 0) {
    throw std::runtime_error("not a RIFF file: " + path.string());
  }
  read_u32(in);  // riff size
  in.read(tag, 4);
  if (!in || std::memcmp(tag, "WAVE", 4) != 0) {
    throw std::runtime_error("not a WAVE file: " + path.string());
  }

  WavHeader h;
  bool have_fmt = false;
  while (in.read(tag, 4)) {
    std::uint32_t chunk = read_u32(in);
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      std::uint16_t format = read_u16(in);
      h.channels = read_u16(in);
      h.sample_rate = static_cast<int>(read_u32(in));
      read_u32(in);  // byte rate
      read_u16(in);  // block align
      h.bits = read_u16(in);
      if (chunk > 16) in.seekg(chunk - 16, std::ios::cur);
      if (format != kFormatPcm) throw std::runtime_error("unsupported WAV format (PCM only): " + path.string());
      have_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      h.data_bytes = chunk;
      h.data_pos = in.tellg();
      break;
    } else {
      in.seekg(chunk + (chunk & 1), std::ios::cur);
    }
  }
  if (!have_fmt || h.data_bytes == 0) throw std::runtime_error("missing fmt or data chunk: " + path.string());
  if (h.channels != 1) throw std::runtime_error("mono WAV required: " + path.string());
  if (h.bits != 16) throw std::runtime_error("16-bit PCM WAV required: " + path.string());
  return h;
}

}  // namespace

WaveClip read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  WavHeader h = parse_header(in, path);

  const std::size_t n = h.data_bytes / 2;
  std::vector<std::int16_t> raw(n);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n * 2));
  if (!in) throw std::runtime_error("truncated WAV data: " + path.string());

  WaveClip clip;
  clip.sample_rate = h.sample_rate;
  clip.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) clip.samples[i] = static_cast<double>(raw[i]) / 32768.0;
  return clip;
}

WavInfo read_wav_info(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  WavHeader h = parse_header(in, path);
  return {h.data_bytes / 2, h.sample_rate};
}

void write_wav(const std::filesystem::path& path, const WaveClip& clip) {
  if (clip.samples.empty()) throw std::invalid_argument("write_wav: empty clip");
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());

    const std::uint32_t data_bytes = static_cast<std::uint32_t>(clip.samples.size() * 2);
    out.write("RIFF", 4);
    write_u32(out, 36 + data_bytes);
    out.write("WAVE", 4);
    out.write("fmt ", 4);
    write_u32(out, 16);
    write_u16(out, kFormatPcm);
    write_u16(out, 1);  // mono
    write_u32(out, static_cast<std::uint32_t>(clip.sample_rate));
    write_u32(out, static_cast<std::uint32_t>(clip.sample_rate * 2));
    write_u16(out, 2);   // block align
    write_u16(out, 16);  // bits
    out.write("data", 4);
    write_u32(out, data_bytes);
    for (double v : clip.samples) {
      long s = std::lround(v * 32768.0);
      s = std::clamp(s, -32768l, 32767l);
      write_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(s)));
    }
    if (!out) throw std::runtime_error("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace udtsep
