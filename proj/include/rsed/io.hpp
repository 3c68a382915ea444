// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "rsed/data.hpp"
#include "rsed/detector.hpp"
#include "rsed/errors.hpp"
#include "rsed/train.hpp"

namespace rsed {

using Json = nlohmann::json;

inline constexpr const char* kVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Config field access with field-level error messages.

namespace detail {

class Fields {
 public:
  Fields(const Json& j, std::string scope) : j_(j), scope_(std::move(scope)) {
    if (!j_.is_object()) throw ConfigError(where("") + "expected a JSON object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  template <class T>
  void read(const std::string& key, T& out, bool required) {
    seen_.insert(key);
    if (!j_.contains(key)) {
      if (required) throw ConfigError("missing required field '" + path(key) + "'");
      return;
    }
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("field '" + path(key) + "' has the wrong type");
    }
  }

  const Json& sub(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }
  void mark(const std::string& key) { seen_.insert(key); }

  void reject_unknown() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError("unknown field '" + path(it.key()) + "'");
  }

  std::string path(const std::string& key) const { return scope_.empty() ? key : scope_ + "." + key; }

 private:
  std::string where(const std::string& key) const { return key.empty() ? scope_ + ": " : path(key) + ": "; }

  const Json& j_;
  std::string scope_;
  std::set<std::string> seen_;
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Synthetic data config.

struct SynthSplitConfig {
  SynthConfig base;  // count/id_prefix are set per split
  std::size_t train_count = 300;
  std::size_t dev_count = 100;
  double frame_shift = kDefaultFrameShiftSeconds;

  SynthConfig split(bool dev) const {
    SynthConfig c = base;
    c.count = dev ? dev_count : train_count;
    c.id_prefix = dev ? "dev" : "train";
    c.seed = substream_seed(base.seed, dev ? 0x646576ULL : 0x747261696eULL);
    return c;
  }
};

inline SynthSplitConfig desk_synth_preset() {
  SynthSplitConfig c;
  c.train_count = 300;
  c.dev_count = 100;
  c.base.frames = 150;
  c.base.feature_dim = 16;
  c.base.positive_fraction = 0.5;
  c.base.ebr_db = {12.0};
  c.base.min_duration = 10;
  c.base.max_duration = 40;
  c.base.scene_count = 15;
  c.base.scene_seed = 2017;
  c.base.seed = 1;
  return c;
}

/// Without "preset", train_count, dev_count, frames and feature_dim are required.
inline SynthSplitConfig parse_synth_config(const Json& j) {
  detail::Fields f(j, "");
  std::string preset;
  f.read("preset", preset, false);
  const bool use_preset = !preset.empty();
  if (use_preset && preset != "desk") throw ConfigError("unknown synth preset '" + preset + "'");
  SynthSplitConfig c = use_preset ? desk_synth_preset() : SynthSplitConfig{};
  f.read("train_count", c.train_count, !use_preset);
  f.read("dev_count", c.dev_count, !use_preset);
  f.read("frames", c.base.frames, !use_preset);
  f.read("feature_dim", c.base.feature_dim, !use_preset);
  f.read("positive_fraction", c.base.positive_fraction, false);
  f.read("ebr_db", c.base.ebr_db, false);
  f.read("min_duration", c.base.min_duration, false);
  f.read("max_duration", c.base.max_duration, false);
  f.read("scene_count", c.base.scene_count, false);
  f.read("scene_seed", c.base.scene_seed, false);
  f.read("seed", c.base.seed, false);
  f.read("frame_shift", c.frame_shift, false);
  f.reject_unknown();
  c.base.validate();
  if (!(c.frame_shift > 0.0)) throw ConfigError("frame_shift must be positive");
  return c;
}

inline Json to_json(const SynthSplitConfig& c) {
  return Json{{"train_count", c.train_count},
              {"dev_count", c.dev_count},
              {"frames", c.base.frames},
              {"feature_dim", c.base.feature_dim},
              {"positive_fraction", c.base.positive_fraction},
              {"ebr_db", c.base.ebr_db},
              {"min_duration", c.base.min_duration},
              {"max_duration", c.base.max_duration},
              {"scene_count", c.base.scene_count},
              {"scene_seed", c.base.scene_seed},
              {"seed", c.base.seed},
              {"frame_shift", c.frame_shift}};
}

// ---------------------------------------------------------------------------
// Training config.

inline Json to_json(const EncoderConfig& e) {
  return Json{{"kind", std::string(to_string(e.kind))},
              {"layers", e.layers},
              {"hidden", e.hidden},
              {"input_dim", e.input_dim},
              {"multires_bidirectional", e.multires_bidirectional}};
}

inline EncoderConfig parse_encoder_config(const Json& j, EncoderConfig base, bool required,
                                          const std::string& scope = "encoder") {
  detail::Fields f(j, scope);
  std::string kind = std::string(to_string(base.kind));
  f.read("kind", kind, required);
  base.kind = parse_encoder_kind(kind);
  f.read("layers", base.layers, required);
  f.read("hidden", base.hidden, required);
  f.read("input_dim", base.input_dim, false);
  f.read("multires_bidirectional", base.multires_bidirectional, false);
  f.reject_unknown();
  return base;
}

inline Json to_json(const TrainConfig& c) {
  return Json{{"alpha", c.alpha},         {"minibatch", c.minibatch}, {"stepsize", c.stepsize},
              {"epochs", c.epochs},       {"seed", c.seed},           {"encoder", to_json(c.encoder)},
              {"thres0", c.thres0},       {"thres1", c.thres1},       {"margin", c.margin},
              {"frame_shift", c.frame_shift}, {"collar", c.collar}};
}

/// Without "preset", alpha, epochs, seed and encoder{kind,layers,hidden} are
/// required. `seed_override` supplies the seed when given on the command line.
inline TrainConfig parse_train_config(const Json& j, bool seed_supplied = false) {
  detail::Fields f(j, "");
  std::string preset;
  f.read("preset", preset, false);
  TrainConfig c;
  const bool use_preset = !preset.empty();
  if (preset == "desk") c = desk_preset();
  else if (preset == "paper") c = paper_preset();
  else if (use_preset) throw ConfigError("unknown train preset '" + preset + "'");
  f.read("alpha", c.alpha, !use_preset);
  f.read("minibatch", c.minibatch, false);
  f.read("stepsize", c.stepsize, false);
  f.read("epochs", c.epochs, !use_preset);
  f.read("seed", c.seed, !use_preset && !seed_supplied);
  if (f.has("encoder")) c.encoder = parse_encoder_config(f.sub("encoder"), c.encoder, !use_preset);
  else if (!use_preset) throw ConfigError("missing required field 'encoder'");
  f.read("thres0", c.thres0, false);
  f.read("thres1", c.thres1, false);
  f.read("margin", c.margin, false);
  f.read("frame_shift", c.frame_shift, false);
  f.read("collar", c.collar, false);
  f.reject_unknown();
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Model snapshot: JSON object
//   {"format": "rsed-model", "version": 1, "encoder": {...}, "seed": s,
//    "parameter_count": n, "parameters": [n doubles in flatten() order]}
// Doubles are written in shortest round-trip form, so load(save(m)) == m.

inline Json model_to_json(const EventModel& m, std::uint64_t seed) {
  return Json{{"format", "rsed-model"},
              {"version", 1},
              {"encoder", to_json(m.config())},
              {"seed", seed},
              {"parameter_count", parameter_count(m)},
              {"parameters", flatten(m)}};
}

inline EventModel model_from_json(const Json& j) {
  try {
    if (j.at("format").get<std::string>() != "rsed-model") throw ParseError("not an rsed-model file");
    if (j.at("version").get<int>() != 1) throw ParseError("unsupported model version");
    const EncoderConfig config = parse_encoder_config(j.at("encoder"), EncoderConfig{}, true);
    EventModel m = EventModel::zeros(config);
    const auto params = j.at("parameters").get<std::vector<double>>();
    if (params.size() != parameter_count(m) ||
        j.at("parameter_count").get<std::size_t>() != params.size())
      throw ParseError("parameter count does not match encoder configuration");
    unflatten(params, m);
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed model file: ") + e.what());
  } catch (const ConfigError& e) {
    throw ParseError(std::string("malformed model file: ") + e.what());
  }
}

inline std::string dump(const Json& j) { return j.dump(2) + "\n"; }

inline void save_model(const std::filesystem::path& path, const EventModel& m, std::uint64_t seed) {
  write_file_atomic(path, dump(model_to_json(m, seed)));
}

inline EventModel load_model(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return model_from_json(j);
}

inline Json parse_json_file(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": invalid JSON: " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Training report.

inline Json to_json(const EpochRecord& r) {
  return Json{{"epoch", r.epoch},
              {"train_loss", r.train_loss},
              {"dev_error_rate", r.dev_error_rate},
              {"dev_f1", r.dev_f1},
              {"true_positives", r.dev_counts.true_positives},
              {"insertions", r.dev_counts.insertions},
              {"deletions", r.dev_counts.deletions},
              {"references", r.dev_counts.references}};
}

inline Json report_to_json(const TrainReport& r, const TrainConfig& c) {
  Json epochs = Json::array();
  for (const auto& e : r.epochs) epochs.push_back(to_json(e));
  return Json{{"format", "rsed-train-report"},
              {"version", 1},
              {"config", to_json(c)},
              {"best_epoch", r.best_epoch},
              {"epochs", epochs}};
}

inline std::string format_epoch_table(const TrainReport& r) {
  std::string out = "epoch\ttrain_loss\tdev_er\tdev_f1\ttp\tins\tdel\tn\n";
  char buf[256];
  for (const auto& e : r.epochs) {
    std::snprintf(buf, sizeof buf, "%zu\t%.9f\t%.4f\t%.2f\t%zu\t%zu\t%zu\t%zu\n", e.epoch, e.train_loss,
                  e.dev_error_rate, e.dev_f1, e.dev_counts.true_positives, e.dev_counts.insertions,
                  e.dev_counts.deletions, e.dev_counts.references);
    out += buf;
  }
  return out;
}

inline std::string format_sweep_table(const std::vector<SweepRow>& rows) {
  std::string out = "alpha\tbest_epoch\tdev_er\tdev_f1\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%g\t%zu\t%.4f\t%.2f\n", r.alpha, r.best_epoch, r.dev_error_rate, r.dev_f1);
    out += buf;
  }
  return out;
}

}  // namespace rsed
