#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "avdf/error.hpp"

namespace avdf {

struct AudioClip {
  std::vector<double> samples;  // in [-1, 1]
  std::uint32_t sample_rate = 16000;

  double duration() const { return static_cast<double>(samples.size()) / sample_rate; }
};

namespace detail {

inline std::uint32_t read_u32le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
inline std::uint16_t read_u16le(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
inline void put_u32le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u16le(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>(v >> 8));
}

}  // namespace detail

// Parses an in-memory RIFF/WAVE image. Only 16-bit PCM, 1 or 2 channels.
inline AudioClip parse_wav(const std::string& bytes, const std::string& origin = "<memory>") {
  const auto* b = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t n = bytes.size();
  if (n < 12 || std::memcmp(b, "RIFF", 4) != 0 || std::memcmp(b + 8, "WAVE", 4) != 0) {
    throw InputError(InputErrorCode::UnsupportedEncoding, origin + ": not a RIFF/WAVE file");
  }
  std::uint16_t channels = 0, bits = 0, format = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;
  std::size_t pos = 12;
  while (pos + 8 <= n) {
    const unsigned char* chunk = b + pos;
    const std::uint32_t size = detail::read_u32le(chunk + 4);
    const std::size_t body = pos + 8;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16 || body + 16 > n) throw InputError(InputErrorCode::UnsupportedEncoding, origin + ": truncated fmt chunk");
      format = detail::read_u16le(b + body);
      channels = detail::read_u16le(b + body + 2);
      rate = detail::read_u32le(b + body + 4);
      bits = detail::read_u16le(b + body + 14);
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = b + body;
      data_size = std::min<std::size_t>(size, n - std::min(n, body));
      break;
    }
    pos = body + size + (size & 1u);
  }
  if (!have_fmt || data == nullptr) {
    throw InputError(InputErrorCode::UnsupportedEncoding, origin + ": missing fmt or data chunk");
  }
  if (format != 1 || bits != 16 || (channels != 1 && channels != 2) || rate == 0) {
    throw InputError(InputErrorCode::UnsupportedEncoding,
                     origin + ": unsupported encoding (format " + std::to_string(format) + ", " + std::to_string(bits) +
                         " bits, " + std::to_string(channels) + " channels)");
  }
  const std::size_t frame_bytes = 2u * channels;
  const std::size_t frames = data_size / frame_bytes;
  if (frames == 0) throw InputError(InputErrorCode::EmptyAudio, origin + ": no audio samples");

  AudioClip clip;
  clip.sample_rate = rate;
  clip.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      const auto raw = static_cast<std::int16_t>(detail::read_u16le(data + i * frame_bytes + 2 * c));
      acc += static_cast<double>(raw) / 32768.0;
    }
    clip.samples[i] = acc / channels;
  }
  return clip;
}

inline AudioClip read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError(InputErrorCode::MissingFile, path.string() + ": cannot open");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_wav(bytes, path.string());
}

// Encodes 16-bit PCM; samples are clamped to [-1, 1] and scaled by 32767.
inline std::string encode_wav(const std::vector<double>& samples, std::uint32_t sample_rate, std::uint16_t channels = 1) {
  std::string out;
  const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
  out += "RIFF";
  detail::put_u32le(out, 36 + data_bytes);
  out += "WAVEfmt ";
  detail::put_u32le(out, 16);
  detail::put_u16le(out, 1);
  detail::put_u16le(out, channels);
  detail::put_u32le(out, sample_rate);
  detail::put_u32le(out, sample_rate * channels * 2);
  detail::put_u16le(out, static_cast<std::uint16_t>(channels * 2));
  detail::put_u16le(out, 16);
  out += "data";
  detail::put_u32le(out, data_bytes);
  for (double s : samples) {
    const double c = std::clamp(s, -1.0, 1.0);
    detail::put_u16le(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(c * 32767.0))));
  }
  return out;
}

inline void write_wav(const std::filesystem::path& path, const std::vector<double>& samples, std::uint32_t sample_rate,
                      std::uint16_t channels = 1) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError(InputErrorCode::Io, path.string() + ": cannot write");
  const std::string bytes = encode_wav(samples, sample_rate, channels);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace avdf
