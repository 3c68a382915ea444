// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numbers>
#include <string>
#include <type_traits>
#include <vector>

#include "rsed/errors.hpp"
#include "rsed/numerics.hpp"
#include "rsed/random.hpp"
#include "rsed/utterance.hpp"

namespace rsed {

/// Feature-space generator for event-in-background utterances.
struct SynthConfig {
  std::size_t count = 100;
  double positive_fraction = 0.5;
  std::size_t frames = 150;
  std::size_t feature_dim = 16;
  std::vector<double> ebr_db = {-6.0, 0.0, 6.0};
  std::size_t min_duration = 10;  // frames
  std::size_t max_duration = 40;
  std::size_t scene_count = 15;
  std::uint64_t scene_seed = 2017;
  std::uint64_t seed = 1;
  std::string id_prefix = "utt";

  void validate() const {
    if (!(positive_fraction >= 0.0 && positive_fraction <= 1.0))
      throw ConfigError("positive_fraction must lie in [0, 1]");
    if (frames < 1) throw ConfigError("frames must be >= 1");
    if (feature_dim < 1) throw ConfigError("feature_dim must be >= 1");
    if (ebr_db.empty()) throw ConfigError("ebr_db must be nonempty");
    if (scene_count < 1) throw ConfigError("scene_count must be >= 1");
    if (min_duration < 1 || min_duration > max_duration || max_duration > frames)
      throw ConfigError("duration range [" + std::to_string(min_duration) + ", " +
                        std::to_string(max_duration) + "] does not fit in " +
                        std::to_string(frames) + " frames");
  }
};

namespace detail {

/// A few low-order cosines across the feature axis.
inline Vector band_limited_pattern(std::size_t dim, double amplitude, Rng& rng) {
  Vector out(dim, 0.0);
  for (int k = 1; k <= 3; ++k) {
    const double a = amplitude * rng.uniform() / k;
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    for (std::size_t f = 0; f < dim; ++f)
      out[f] += a * std::cos(2.0 * std::numbers::pi * k * (static_cast<double>(f) + 0.5) /
                                 static_cast<double>(dim) + phase);
  }
  return out;
}

}  // namespace detail

/// Unit-peak rising ridge of `duration` frames: a Gaussian bump across the
/// feature axis whose centre sweeps from d/4 to 3d/4.
inline Matrix event_template(std::size_t dim, std::size_t duration) {
  Matrix m(dim, duration);
  const double width = std::max(1.0, static_cast<double>(dim) / 16.0);
  for (std::size_t tau = 0; tau < duration; ++tau) {
    const double frac = duration > 1 ? static_cast<double>(tau) / static_cast<double>(duration - 1) : 0.5;
    const double centre = static_cast<double>(dim) * (0.25 + 0.5 * frac);
    for (std::size_t f = 0; f < dim; ++f) {
      const double u = (static_cast<double>(f) - centre) / width;
      m(f, tau) = std::exp(-0.5 * u * u);
    }
  }
  return m;
}

/// Utterance `index` of the stream defined by `config`. Each index draws from
/// its own RNG sub-stream, substream_seed(config.seed, index), so generation
/// order does not matter.
inline Utterance synth_feature_utterance(const SynthConfig& config, std::size_t index) {
  config.validate();
  const std::size_t d = config.feature_dim, T = config.frames;
  Rng rng(substream_seed(config.seed, index));

  const auto scene = rng.below(config.scene_count);
  Rng scene_rng(substream_seed(config.scene_seed, scene));
  Vector mean = detail::band_limited_pattern(d, 1.0, scene_rng);
  const Vector jitter = detail::band_limited_pattern(d, 0.25, rng);
  for (std::size_t f = 0; f < d; ++f) mean[f] += jitter[f];

  Matrix x(d, T);
  double energy = 0.0;
  for (std::size_t f = 0; f < d; ++f)
    for (std::size_t t = 0; t < T; ++t) {
      x(f, t) = mean[f] + rng.normal();
      energy += x(f, t) * x(f, t);
    }

  char id[64];
  std::snprintf(id, sizeof id, "%s_%05zu", config.id_prefix.c_str(), index);
  // Drawn unconditionally so positives and negatives consume the stream alike.
  const bool positive = rng.uniform() < config.positive_fraction;
  const double ebr = config.ebr_db[rng.below(config.ebr_db.size())];
  const std::size_t duration =
      config.min_duration + rng.below(config.max_duration - config.min_duration + 1);
  const std::size_t onset = rng.below(T - duration + 1);
  if (!positive) return make_negative(id, std::move(x));

  const double rms = std::sqrt(energy / static_cast<double>(d * T));
  const double gain = rms * std::pow(10.0, ebr / 20.0);
  const Matrix tmpl = event_template(d, duration);
  for (std::size_t f = 0; f < d; ++f)
    for (std::size_t tau = 0; tau < duration; ++tau) x(f, onset + tau) += gain * tmpl(f, tau);
  return make_positive(id, std::move(x), FrameSpan{onset, onset + duration - 1});
}

inline std::vector<Utterance> synth_dataset(const SynthConfig& config) {
  config.validate();
  std::vector<Utterance> out;
  out.reserve(config.count);
  for (std::size_t i = 0; i < config.count; ++i) out.push_back(synth_feature_utterance(config, i));
  return out;
}

struct Dataset {
  std::string metadata;  // opaque UTF-8 text, JSON by convention
  std::vector<Utterance> utterances;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

// Binary dataset layout, all integers and floats little-endian:
//
//   offset  size   field
//   0       8      magic "RSEDSET1"
//   8       4      u32 metadata length M
//   12      M      metadata bytes
//   12+M    8      u64 record count N
//   then N records:
//           4      u32 id length K
//           K      id bytes
//           4      u32 feature dim d
//           4      u32 frame count T
//           1      u8 utterance label (0 or 1)
//           T      u8 frame labels, present only when label == 1
//           8*d*T  f64 features, row-major d x T (IEEE-754 binary64)

inline constexpr char kDatasetMagic[9] = "RSEDSET1";

namespace detail {

template <class T>
using uint_of_size_t = std::conditional_t<
    sizeof(T) == 8, std::uint64_t,
    std::conditional_t<sizeof(T) == 4, std::uint32_t,
                       std::conditional_t<sizeof(T) == 2, std::uint16_t, std::uint8_t>>>;

template <class T>
void put_le(std::string& out, T value) {
  using U = uint_of_size_t<T>;
  const U bits = std::bit_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

class ByteReader {
 public:
  ByteReader(const std::string& bytes, std::string source)
      : bytes_(bytes), source_(std::move(source)) {}

  void set_context(std::string context) { context_ = std::move(context); }
  std::size_t offset() const { return pos_; }
  bool at_end() const { return pos_ == bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  template <class T>
  T get() {
    using U = uint_of_size_t<T>;
    need(sizeof(T));
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
      bits |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += sizeof(T);
    return std::bit_cast<T>(bits);
  }

  std::string get_bytes(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError(source_ + ": " + context_ + (context_.empty() ? "" : ": ") + what +
                     " (byte offset " + std::to_string(pos_) + ")");
  }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n)
      fail("truncated, needed " + std::to_string(n) + " more bytes, " +
           std::to_string(bytes_.size() - pos_) + " available");
  }

  const std::string& bytes_;
  std::string source_;
  std::string context_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string encode_dataset(const Dataset& ds) {
  std::string out(kDatasetMagic, 8);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ds.metadata.size()));
  out += ds.metadata;
  detail::put_le<std::uint64_t>(out, ds.utterances.size());
  for (const auto& u : ds.utterances) {
    validate(u);
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(u.id.size()));
    out += u.id;
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(u.feature_dim()));
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(u.frames()));
    detail::put_le<std::uint8_t>(out, u.label ? 1 : 0);
    for (auto v : u.frame_labels) detail::put_le<std::uint8_t>(out, v);
    for (double v : u.features.values()) detail::put_le<double>(out, v);
  }
  return out;
}

inline Dataset decode_dataset(const std::string& bytes, const std::string& source = "<memory>") {
  detail::ByteReader in(bytes, source);
  in.set_context("header");
  if (in.get_bytes(8) != std::string(kDatasetMagic, 8)) in.fail("bad magic, not a dataset file");
  Dataset ds;
  ds.metadata = in.get_bytes(in.get<std::uint32_t>());
  const auto n = in.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < n; ++i) {
    in.set_context("record " + std::to_string(i));
    Utterance u;
    u.id = in.get_bytes(in.get<std::uint32_t>());
    const auto d = in.get<std::uint32_t>();
    const auto T = in.get<std::uint32_t>();
    if (d == 0 || T == 0) in.fail("zero feature dim or frame count");
    const auto label = in.get<std::uint8_t>();
    if (label > 1) in.fail("label byte not in {0,1}");
    u.label = label == 1;
    if (u.label) {
      const std::string raw = in.get_bytes(T);
      u.frame_labels.assign(raw.begin(), raw.end());
    }
    const std::uint64_t count = std::uint64_t{d} * T;
    if (count > in.remaining() / sizeof(double))
      in.fail("truncated, " + std::to_string(count) + " feature values declared");
    std::vector<double> values(static_cast<std::size_t>(count));
    for (double& v : values) v = in.get<double>();
    u.features = Matrix(d, T, std::move(values));
    try {
      validate(u);
    } catch (const ConsistencyError& e) {
      in.fail(e.what());
    }
    ds.utterances.push_back(std::move(u));
  }
  in.set_context("trailer");
  if (!in.at_end()) in.fail("trailing bytes after last record");
  return ds;
}

/// Writes via a temporary file and rename.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw InputError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void save_dataset(const std::filesystem::path& path, const Dataset& ds) {
  write_file_atomic(path, encode_dataset(ds));
}

inline Dataset load_dataset(const std::filesystem::path& path) {
  return decode_dataset(read_file(path), path.string());
}

}  // namespace rsed
