#pragma once

// Mono RIFF/WAV read and write, 16-bit integer PCM and 32-bit float.
// Samples live in [-1, 1] doubles on the library side.

#include "mdnmf/core.hpp"
#include "mdnmf/io.hpp"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>

namespace mdnmf {

enum class WavFormat { kPcm16, kFloat32 };

struct WavData {
  Vector samples;
  double sample_rate = 16000.0;
  WavFormat format = WavFormat::kPcm16;
};

namespace detail {

inline void put_u16_le(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

inline void put_f32_le(std::string& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  put_u32_le(out, bits);
}

}  // namespace detail

inline void write_wav(const std::filesystem::path& path, const Vector& samples,
                      double sample_rate, WavFormat format = WavFormat::kPcm16) {
  check_value(samples.size() > 0, "wav: no samples to write");
  check_value(samples.allFinite(), "wav: samples must be finite");
  check_config(sample_rate > 0 && sample_rate == std::floor(sample_rate),
               "wav: sample rate must be a positive integer");

  const std::uint16_t bits = format == WavFormat::kPcm16 ? 16 : 32;
  const std::uint16_t block_align = bits / 8;
  const auto rate = static_cast<std::uint32_t>(sample_rate);
  const auto data_size = static_cast<std::uint32_t>(samples.size()) * block_align;

  std::string out;
  out.reserve(44 + data_size);
  out += "RIFF";
  detail::put_u32_le(out, 36 + data_size);
  out += "WAVEfmt ";
  detail::put_u32_le(out, 16);
  detail::put_u16_le(out, format == WavFormat::kPcm16 ? 1 : 3);  // PCM / IEEE float
  detail::put_u16_le(out, 1);                                    // mono
  detail::put_u32_le(out, rate);
  detail::put_u32_le(out, rate * block_align);
  detail::put_u16_le(out, block_align);
  detail::put_u16_le(out, bits);
  out += "data";
  detail::put_u32_le(out, data_size);
  for (Index i = 0; i < samples.size(); ++i) {
    const double v = std::clamp(samples(i), -1.0, 1.0);
    if (format == WavFormat::kPcm16) {
      detail::put_u16_le(out, static_cast<std::uint16_t>(
                                  static_cast<std::int16_t>(std::lround(v * 32767.0))));
    } else {
      detail::put_f32_le(out, static_cast<float>(v));
    }
  }
  atomic_write(path, out);
}

inline WavData read_wav(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  detail::ByteReader r{bytes, 0, path.string()};
  r.need(12);
  check_io(bytes.compare(0, 4, "RIFF") == 0 && bytes.compare(8, 4, "WAVE") == 0,
           path.string() + ": not a RIFF/WAVE file");
  r.pos = 12;

  WavData wav;
  std::uint16_t fmt_code = 0, channels = 0, bit_depth = 0;
  bool have_fmt = false, have_data = false;
  size_t data_begin = 0, data_size = 0;

  while (r.pos + 8 <= bytes.size()) {
    const std::string id = bytes.substr(r.pos, 4);
    r.pos += 4;
    const std::uint32_t size = r.u32_le();
    r.need(size);
    const size_t body = r.pos;
    if (id == "fmt ") {
      check_io(size >= 16, path.string() + ": fmt chunk too small");
      detail::ByteReader f{bytes, body, path.string()};
      fmt_code = f.u16_le();
      channels = f.u16_le();
      wav.sample_rate = static_cast<double>(f.u32_le());
      f.u32_le();  // byte rate
      f.u16_le();  // block align
      bit_depth = f.u16_le();
      have_fmt = true;
    } else if (id == "data") {
      data_begin = body;
      data_size = size;
      have_data = true;
    }
    r.pos = body + size + (size % 2);  // chunks are word-aligned
  }
  check_io(have_fmt && have_data, path.string() + ": missing fmt or data chunk");
  check_io(channels == 1, path.string() + ": only mono WAV is supported");

  if (fmt_code == 1 && bit_depth == 16) {
    wav.format = WavFormat::kPcm16;
    const auto n = static_cast<Index>(data_size / 2);
    wav.samples.resize(n);
    for (Index i = 0; i < n; ++i) {
      const size_t p = data_begin + static_cast<size_t>(i) * 2;
      const auto u = static_cast<std::uint16_t>(
          static_cast<unsigned char>(bytes[p]) |
          (static_cast<unsigned char>(bytes[p + 1]) << 8));
      wav.samples(i) = static_cast<double>(static_cast<std::int16_t>(u)) / 32768.0;
    }
  } else if (fmt_code == 3 && bit_depth == 32) {
    wav.format = WavFormat::kFloat32;
    const auto n = static_cast<Index>(data_size / 4);
    wav.samples.resize(n);
    detail::ByteReader f{bytes, data_begin, path.string()};
    for (Index i = 0; i < n; ++i) {
      const std::uint32_t bits32 = f.u32_le();
      float v;
      std::memcpy(&v, &bits32, sizeof(v));
      wav.samples(i) = static_cast<double>(v);
    }
  } else {
    throw IoError(path.string() + ": unsupported WAV encoding (need 16-bit PCM or 32-bit float)");
  }
  return wav;
}

}  // namespace mdnmf
