// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rsed/data.hpp"
#include "rsed/errors.hpp"

namespace rsed {

struct Waveform {
  double sample_rate = 0.0;
  std::vector<double> samples;  // mono, nominal range [-1, 1]
};

enum class WavEncoding { pcm16, float32 };

/// Mono RIFF/WAVE, 16-bit PCM or 32-bit IEEE float.
inline Waveform decode_wav(const std::string& bytes, const std::string& source = "<memory>") {
  detail::ByteReader in(bytes, source);
  in.set_context("RIFF header");
  if (in.get_bytes(4) != "RIFF") in.fail("missing RIFF tag");
  in.get<std::uint32_t>();
  if (in.get_bytes(4) != "WAVE") in.fail("missing WAVE tag");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  for (;;) {
    in.set_context("chunk header");
    const std::string tag = in.get_bytes(4);
    const auto size = in.get<std::uint32_t>();
    if (tag == "fmt ") {
      in.set_context("fmt chunk");
      if (size < 16) in.fail("fmt chunk too short");
      const std::string body = in.get_bytes(size + (size & 1));
      detail::ByteReader f2(body, source);
      f2.set_context("fmt chunk");
      format = f2.get<std::uint16_t>();
      channels = f2.get<std::uint16_t>();
      rate = f2.get<std::uint32_t>();
      f2.get<std::uint32_t>();  // byte rate
      f2.get<std::uint16_t>();  // block align
      bits = f2.get<std::uint16_t>();
      if (format == 0xFFFE && size >= 40) {
        // WAVE_FORMAT_EXTENSIBLE: sub-format GUID starts at offset 24.
        format = static_cast<std::uint16_t>(static_cast<unsigned char>(body[24]) |
                                            (static_cast<unsigned char>(body[25]) << 8));
      }
      have_fmt = true;
    } else if (tag == "data") {
      in.set_context("data chunk");
      if (!have_fmt) in.fail("data chunk before fmt chunk");
      if (channels != 1) in.fail("only mono audio is supported, got " + std::to_string(channels) + " channels");
      Waveform w{static_cast<double>(rate), {}};
      if (format == 1 && bits == 16) {
        w.samples.resize(size / 2);
        for (auto& s : w.samples)
          s = static_cast<double>(in.get<std::int16_t>()) / 32768.0;
      } else if (format == 3 && bits == 32) {
        w.samples.resize(size / 4);
        for (auto& s : w.samples) s = static_cast<double>(in.get<float>());
      } else {
        in.fail("unsupported encoding (format " + std::to_string(format) + ", " +
                std::to_string(bits) + " bits)");
      }
      return w;
    } else {
      in.get_bytes(size + (size & 1));
    }
  }
}

inline std::string encode_wav(const Waveform& w, WavEncoding encoding = WavEncoding::pcm16) {
  const bool pcm = encoding == WavEncoding::pcm16;
  const std::uint16_t bits = pcm ? 16 : 32;
  const auto data_bytes = static_cast<std::uint32_t>(w.samples.size() * (bits / 8));
  const auto rate = static_cast<std::uint32_t>(std::lround(w.sample_rate));
  std::string out = "RIFF";
  detail::put_le<std::uint32_t>(out, 36 + data_bytes);
  out += "WAVEfmt ";
  detail::put_le<std::uint32_t>(out, 16);
  detail::put_le<std::uint16_t>(out, pcm ? 1 : 3);
  detail::put_le<std::uint16_t>(out, 1);  // channels
  detail::put_le<std::uint32_t>(out, rate);
  detail::put_le<std::uint32_t>(out, rate * (bits / 8));
  detail::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(bits / 8));
  detail::put_le<std::uint16_t>(out, bits);
  out += "data";
  detail::put_le<std::uint32_t>(out, data_bytes);
  for (double s : w.samples) {
    if (pcm) {
      const double c = std::clamp(s, -1.0, 32767.0 / 32768.0);
      detail::put_le<std::int16_t>(out, static_cast<std::int16_t>(std::lround(c * 32768.0)));
    } else {
      detail::put_le<float>(out, static_cast<float>(s));
    }
  }
  return out;
}

inline Waveform load_wav(const std::filesystem::path& path) {
  return decode_wav(read_file(path), path.string());
}

inline void save_wav(const std::filesystem::path& path, const Waveform& w,
                     WavEncoding encoding = WavEncoding::pcm16) {
  write_file_atomic(path, encode_wav(w, encoding));
}

}  // namespace rsed
