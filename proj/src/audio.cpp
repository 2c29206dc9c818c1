#include "ergl/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace ergl {

namespace {

uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

uint16_t read_u16(std::istream& in) {
  unsigned char b[2];
  in.read(reinterpret_cast<char*>(b), 2);
  return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

void write_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<char*>(b), 4);
}

void write_u16(std::ostream& out, uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
  out.write(reinterpret_cast<char*>(b), 2);
}

}  // namespace

AudioClip read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("wav: cannot open " + path);

  char tag[5] = {0};
  in.read(tag, 4);
  if (std::strncmp(tag, "RIFF", 4) != 0) throw FormatError("wav: missing RIFF header in " + path);
  read_u32(in);  // riff size
  in.read(tag, 4);
  if (std::strncmp(tag, "WAVE", 4) != 0) throw FormatError("wav: not a WAVE file: " + path);

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t sample_rate = 0;
  bool have_fmt = false;
  std::vector<int16_t> raw;

  while (in.read(tag, 4)) {
    uint32_t chunk_size = read_u32(in);
    if (std::strncmp(tag, "fmt ", 4) == 0) {
      format = read_u16(in);
      channels = read_u16(in);
      sample_rate = read_u32(in);
      read_u32(in);  // byte rate
      read_u16(in);  // block align
      bits = read_u16(in);
      if (chunk_size > 16) in.seekg(chunk_size - 16, std::ios::cur);
      have_fmt = true;
    } else if (std::strncmp(tag, "data", 4) == 0) {
      if (!have_fmt) throw FormatError("wav: data chunk before fmt in " + path);
      raw.resize(chunk_size / 2);
      in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size() * 2));
      if (!in) throw FormatError("wav: truncated data chunk in " + path);
      break;
    } else {
      in.seekg(chunk_size + (chunk_size & 1u), std::ios::cur);
    }
  }
  if (!have_fmt || raw.empty()) throw FormatError("wav: no usable fmt/data chunks in " + path);
  if (format != 1 || bits != 16)
    throw InputError("wav: only 16-bit PCM supported, got format " + std::to_string(format) + "/" +
                     std::to_string(bits) + " bits in " + path);
  if (channels != 1 && channels != 2)
    throw InputError("wav: expected mono or stereo, got " + std::to_string(channels) +
                     " channels in " + path);

  AudioClip clip;
  clip.sample_rate = static_cast<int>(sample_rate);
  size_t frames = raw.size() / channels;
  clip.samples.resize(frames);
  constexpr float kScale = 1.0f / 32768.0f;
  if (channels == 1) {
    for (size_t i = 0; i < frames; ++i) clip.samples[i] = raw[i] * kScale;
  } else {
    for (size_t i = 0; i < frames; ++i)
      clip.samples[i] = 0.5f * (raw[2 * i] + raw[2 * i + 1]) * kScale;
  }
  return clip;
}

void write_wav(const std::string& path, const std::vector<float>& samples, int sample_rate) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("wav: cannot write " + path);

  uint32_t data_bytes = static_cast<uint32_t>(samples.size() * 2);
  out.write("RIFF", 4);
  write_u32(out, 36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  write_u32(out, 16);
  write_u16(out, 1);  // PCM
  write_u16(out, 1);  // mono
  write_u32(out, static_cast<uint32_t>(sample_rate));
  write_u32(out, static_cast<uint32_t>(sample_rate * 2));
  write_u16(out, 2);
  write_u16(out, 16);
  out.write("data", 4);
  write_u32(out, data_bytes);
  for (float s : samples) {
    float c = std::clamp(s, -1.0f, 1.0f);
    auto v = static_cast<int16_t>(std::lrintf(c * 32767.0f));
    write_u16(out, static_cast<uint16_t>(v));
  }
}

AudioClip resample_linear(const AudioClip& clip, int target_rate) {
  if (clip.sample_rate <= 0) throw InputError("resample: clip has no sample rate");
  if (target_rate <= 0) throw ConfigError("resample: bad target rate " + std::to_string(target_rate));
  if (clip.sample_rate == target_rate || clip.samples.empty()) {
    AudioClip out = clip;
    out.sample_rate = target_rate;
    return out;
  }
  double ratio = static_cast<double>(clip.sample_rate) / target_rate;
  auto n_out =
      static_cast<size_t>(std::floor(static_cast<double>(clip.samples.size() - 1) / ratio) + 1);
  AudioClip out;
  out.clip_id = clip.clip_id;
  out.sample_rate = target_rate;
  out.samples.resize(n_out);
  for (size_t i = 0; i < n_out; ++i) {
    double pos = i * ratio;
    auto lo = static_cast<size_t>(pos);
    size_t hi = std::min(lo + 1, clip.samples.size() - 1);
    double frac = pos - static_cast<double>(lo);
    out.samples[i] = static_cast<float>((1.0 - frac) * clip.samples[lo] + frac * clip.samples[hi]);
  }
  return out;
}

}  // namespace ergl
