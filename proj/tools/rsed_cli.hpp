// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rsed/data.hpp"
#include "rsed/detector.hpp"
#include "rsed/errors.hpp"
#include "rsed/io.hpp"
#include "rsed/metrics.hpp"
#include "rsed/train.hpp"

namespace rsed::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kFailure = 1, kInputError = 2, kConsistencyError = 3 };

struct Options {
  std::string config;
  std::string out;
  std::string train_path;
  std::string dev_path;
  std::string model_path;
  std::string data_path;
  std::string ref_path;
  std::string det_path;
  std::string alpha_grid;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  std::optional<double> alpha;
  std::optional<double> thres0;
  std::optional<double> thres1;
  std::optional<double> frame_shift;
  std::optional<double> collar;
};

class Manifest {
 public:
  explicit Manifest(std::string command)
      : start_(std::chrono::steady_clock::now()), j_{{"command", std::move(command)}, {"version", kVersion}} {
    j_["inputs"] = Json::object();
    j_["outputs"] = Json::array();
  }
  void config(Json c) { j_["config"] = std::move(c); }
  void seed(std::uint64_t s) { j_["seed"] = s; }
  void input(const std::string& role, const std::string& path) { j_["inputs"][role] = path; }
  void output(const fs::path& p) { j_["outputs"].push_back(p.string()); }

  void write(const fs::path& path) {
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    j_["wall_clock_seconds"] = secs;
    write_file_atomic(path, dump(j_));
  }

 private:
  std::chrono::steady_clock::time_point start_;
  Json j_;
};

inline Dataset load_dataset_checked(const std::string& path) {
  if (path.empty()) throw InputError("dataset path not given");
  return load_dataset(path);
}

inline double dataset_frame_shift(const Dataset& ds) {
  if (ds.metadata.empty()) return kDefaultFrameShiftSeconds;
  try {
    const Json j = Json::parse(ds.metadata);
    if (j.contains("frame_shift")) return j.at("frame_shift").get<double>();
  } catch (const nlohmann::json::exception&) {
  }
  return kDefaultFrameShiftSeconds;
}

inline Json load_config_json(const Options& o) {
  if (o.config.empty()) throw ConfigError("--config is required");
  Json j = parse_json_file(o.config);
  // A manifest is accepted as a config: its resolved "config" is re-run.
  if (j.is_object() && j.contains("command") && j.contains("config")) j = j.at("config");
  return j;
}

inline TrainConfig resolve_train_config(const Options& o) {
  TrainConfig c = parse_train_config(load_config_json(o), o.seed.has_value());
  if (o.seed) c.seed = *o.seed;
  if (o.epochs) c.epochs = *o.epochs;
  if (o.alpha) c.alpha = *o.alpha;
  if (o.thres0) c.thres0 = *o.thres0;
  if (o.thres1) c.thres1 = *o.thres1;
  if (o.frame_shift) c.frame_shift = *o.frame_shift;
  if (o.collar) c.collar = *o.collar;
  c.validate();
  return c;
}

inline std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> grid;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const double v = std::stod(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      grid.push_back(v);
    } catch (const std::logic_error&) {
      throw ConfigError("--alpha-grid: not a number: '" + item + "'");
    }
  }
  if (grid.empty()) throw ConfigError("--alpha-grid is empty");
  return grid;
}

inline void require_out(const Options& o) {
  if (o.out.empty()) throw ConfigError("--out is required");
}

inline int cmd_synth(const Options& o, std::ostream& log) {
  require_out(o);
  Manifest manifest("synth");
  SynthSplitConfig c = parse_synth_config(load_config_json(o));
  if (o.seed) c.base.seed = *o.seed;
  if (o.frame_shift) c.frame_shift = *o.frame_shift;
  manifest.config(to_json(c));
  manifest.seed(c.base.seed);
  manifest.input("config", o.config);
  const fs::path dir(o.out);
  for (const bool dev : {false, true}) {
    const SynthConfig split = c.split(dev);
    Json meta = to_json(c);
    meta["split"] = dev ? "dev" : "train";
    Dataset ds{meta.dump(), synth_dataset(split)};
    const std::string name = dev ? "dev" : "train";
    save_dataset(dir / (name + ".rsds"), ds);
    write_file_atomic(dir / (name + "_ref.tsv"),
                      format_annotations(reference_annotations(ds.utterances, c.frame_shift)));
    manifest.output(dir / (name + ".rsds"));
    manifest.output(dir / (name + "_ref.tsv"));
    std::size_t positives = 0;
    for (const auto& u : ds.utterances) positives += u.label;
    log << name << ": " << ds.utterances.size() << " utterances, " << positives << " with events\n";
  }
  manifest.write(dir / "manifest.json");
  return kOk;
}

inline int cmd_train(const Options& o, std::ostream& log) {
  require_out(o);
  Manifest manifest("train");
  TrainConfig c = resolve_train_config(o);
  const Dataset trainset = load_dataset_checked(o.train_path);
  const Dataset devset = load_dataset_checked(o.dev_path);
  if (trainset.utterances.empty()) throw InputError("training set is empty: " + o.train_path);
  c.encoder.input_dim = trainset.utterances.front().feature_dim();
  if (!devset.utterances.empty() && devset.utterances.front().feature_dim() != c.encoder.input_dim)
    throw ConsistencyError("training data has feature dim " + std::to_string(c.encoder.input_dim) +
                           " but development data has " +
                           std::to_string(devset.utterances.front().feature_dim()));
  manifest.config(to_json(c));
  manifest.seed(c.seed);
  manifest.input("config", o.config);
  manifest.input("train", o.train_path);
  manifest.input("dev", o.dev_path);

  const TrainReport report = train(c, trainset.utterances, devset.utterances, [&](const EpochRecord& e) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "epoch %zu  loss %.6f  dev ER %.4f  F1 %.2f\n", e.epoch, e.train_loss,
                  e.dev_error_rate, e.dev_f1);
    log << buf << std::flush;
  });
  const fs::path dir(o.out);
  save_model(dir / "model.json", report.best_model, c.seed);
  write_file_atomic(dir / "report.json", dump(report_to_json(report, c)));
  write_file_atomic(dir / "epochs.tsv", format_epoch_table(report));
  for (const char* name : {"model.json", "report.json", "epochs.tsv"}) manifest.output(dir / name);
  manifest.write(dir / "manifest.json");
  log << "best epoch " << report.best_epoch << "\n";
  return kOk;
}

inline int cmd_infer(const Options& o, std::ostream& log) {
  require_out(o);
  Manifest manifest("infer");
  if (o.model_path.empty()) throw InputError("--model is required");
  const EventModel model = load_model(o.model_path);
  const Dataset ds = load_dataset_checked(o.data_path);
  const double thres0 = o.thres0.value_or(0.5), thres1 = o.thres1.value_or(0.5);
  if (!(thres0 > 0.0 && thres0 < 1.0 && thres1 > 0.0 && thres1 < 1.0))
    throw ConfigError("thresholds must lie in (0, 1)");
  const double shift = o.frame_shift.value_or(dataset_frame_shift(ds));
  check_dataset_dims(ds.utterances, model.config().input_dim, "dataset " + o.data_path);
  std::vector<AnnotationRecord> out;
  out.reserve(ds.utterances.size());
  for (const auto& u : ds.utterances)
    out.push_back({u.id, to_seconds(infer(model, u.features, thres0, thres1), shift)});
  write_file_atomic(o.out, format_annotations(out));
  manifest.config(Json{{"thres0", thres0}, {"thres1", thres1}, {"frame_shift", shift}});
  manifest.input("model", o.model_path);
  manifest.input("data", o.data_path);
  manifest.output(o.out);
  manifest.write(o.out + ".manifest.json");
  std::size_t present = 0;
  for (const auto& r : out) present += r.event.has_value();
  log << out.size() << " utterances, " << present << " detections\n";
  return kOk;
}

inline std::string format_eval_table(const Evaluation& ev, double collar) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "er\tf1\ttp\tins\tdel\tn\tcollar\n%.4f\t%.2f\t%zu\t%zu\t%zu\t%zu\t%.3f\n",
                ev.error_rate, ev.f1, ev.counts.true_positives, ev.counts.insertions, ev.counts.deletions,
                ev.counts.references, collar);
  return buf;
}

inline int cmd_eval(const Options& o, std::ostream& log) {
  if (o.ref_path.empty() || o.det_path.empty()) throw ConfigError("--ref and --det are required");
  const double collar = o.collar.value_or(kDefaultCollarSeconds);
  if (!(collar > 0.0)) throw ConfigError("--collar must be positive");
  Manifest manifest("eval");
  const auto ref = load_annotations(o.ref_path);
  const auto det = load_annotations(o.det_path);
  const Evaluation ev = evaluate_dataset(ref, det, collar);
  const std::string table = format_eval_table(ev, collar);
  log << table;
  if (!o.out.empty()) {
    write_file_atomic(o.out, table);
    manifest.config(Json{{"collar", collar}});
    manifest.input("ref", o.ref_path);
    manifest.input("det", o.det_path);
    manifest.output(o.out);
    manifest.write(o.out + ".manifest.json");
  }
  return kOk;
}

inline int cmd_sweep(const Options& o, std::ostream& log) {
  require_out(o);
  Manifest manifest("sweep");
  const TrainConfig c = resolve_train_config(o);
  const std::vector<double> grid = o.alpha_grid.empty() ? default_alpha_grid() : parse_grid(o.alpha_grid);
  const Dataset trainset = load_dataset_checked(o.train_path);
  const Dataset devset = load_dataset_checked(o.dev_path);
  Json cj = to_json(c);
  cj["alpha_grid"] = grid;
  manifest.config(cj);
  manifest.seed(c.seed);
  manifest.input("config", o.config);
  manifest.input("train", o.train_path);
  manifest.input("dev", o.dev_path);
  const auto rows = alpha_sweep(c, grid, trainset.utterances, devset.utterances, [&](const SweepRow& r) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "alpha %g  best epoch %zu  dev ER %.4f  F1 %.2f\n", r.alpha, r.best_epoch,
                  r.dev_error_rate, r.dev_f1);
    log << buf << std::flush;
  });
  const fs::path dir(o.out);
  write_file_atomic(dir / "sweep.tsv", format_sweep_table(rows));
  manifest.output(dir / "sweep.tsv");
  manifest.write(dir / "manifest.json");
  return kOk;
}

struct ArchitectureRow {
  EncoderKind kind;
  std::size_t best_epoch;
  double dev_error_rate;
  double dev_f1;
};

inline std::vector<ArchitectureRow> compare_architectures(const TrainConfig& base,
                                                          const std::vector<Utterance>& trainset,
                                                          const std::vector<Utterance>& devset,
                                                          std::ostream& log) {
  std::vector<ArchitectureRow> rows;
  for (EncoderKind kind : {EncoderKind::unidirectional, EncoderKind::bidirectional,
                           EncoderKind::multiresolution}) {
    TrainConfig c = base;
    c.encoder.kind = kind;
    const TrainReport r = train(c, trainset, devset);
    ArchitectureRow row{kind, r.best_epoch, 0.0, 0.0};
    if (r.best_epoch > 0) {
      row.dev_error_rate = r.epochs[r.best_epoch - 1].dev_error_rate;
      row.dev_f1 = r.epochs[r.best_epoch - 1].dev_f1;
    }
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-16s best epoch %zu  dev ER %.4f  F1 %.2f\n",
                  std::string(to_string(kind)).c_str(), row.best_epoch, row.dev_error_rate, row.dev_f1);
    log << buf << std::flush;
    rows.push_back(row);
  }
  return rows;
}

inline std::string format_architecture_table(const std::vector<ArchitectureRow>& rows) {
  std::string out = "architecture\tbest_epoch\tdev_er\tdev_f1\n";
  char buf[160];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%s\t%zu\t%.4f\t%.2f\n", std::string(to_string(r.kind)).c_str(),
                  r.best_epoch, r.dev_error_rate, r.dev_f1);
    out += buf;
  }
  return out;
}

inline int cmd_compare(const Options& o, std::ostream& log) {
  require_out(o);
  Manifest manifest("compare");
  const TrainConfig c = resolve_train_config(o);
  const Dataset trainset = load_dataset_checked(o.train_path);
  const Dataset devset = load_dataset_checked(o.dev_path);
  manifest.config(to_json(c));
  manifest.seed(c.seed);
  manifest.input("config", o.config);
  manifest.input("train", o.train_path);
  manifest.input("dev", o.dev_path);
  const auto rows = compare_architectures(c, trainset.utterances, devset.utterances, log);
  const fs::path dir(o.out);
  write_file_atomic(dir / "architectures.tsv", format_architecture_table(rows));
  manifest.output(dir / "architectures.tsv");
  manifest.write(dir / "manifest.json");
  return kOk;
}

/// Entry point shared by the `rsed` binary and the tests.
inline int run(const std::vector<std::string>& args, std::ostream& log = std::cout,
               std::ostream& err = std::cerr) {
  CLI::App app{"Rare sound event detection: synthesize, train, infer, score"};
  app.require_subcommand(1);
  Options o;

  auto add_seed = [&](CLI::App* c) { c->add_option("--seed", o.seed, "RNG seed (overrides config)"); };
  auto add_thresholds = [&](CLI::App* c) {
    c->add_option("--thres0", o.thres0, "utterance-level threshold");
    c->add_option("--thres1", o.thres1, "frame-level threshold");
  };
  auto add_training = [&](CLI::App* c) {
    c->add_option("--config", o.config, "JSON training config (or a previous manifest)");
    c->add_option("--train", o.train_path, "training dataset (.rsds)");
    c->add_option("--dev", o.dev_path, "development dataset (.rsds)");
    c->add_option("--out", o.out, "output directory");
    c->add_option("--epochs", o.epochs, "epoch budget (overrides config)");
    c->add_option("--alpha", o.alpha, "frame-loss weight (overrides config)");
    c->add_option("--frame-shift", o.frame_shift, "seconds per frame");
    c->add_option("--collar", o.collar, "onset collar in seconds");
    add_seed(c);
    add_thresholds(c);
  };

  auto* synth = app.add_subcommand("synth", "generate synthetic train/dev datasets");
  synth->add_option("--config", o.config, "JSON synth config");
  synth->add_option("--out", o.out, "output directory");
  synth->add_option("--frame-shift", o.frame_shift, "seconds per frame");
  add_seed(synth);

  auto* trn = app.add_subcommand("train", "train a detector");
  add_training(trn);

  auto* inf = app.add_subcommand("infer", "run detection on a dataset");
  inf->add_option("--model", o.model_path, "model snapshot (model.json)");
  inf->add_option("--data", o.data_path, "dataset (.rsds)");
  inf->add_option("--out", o.out, "detection annotation file (.tsv)");
  inf->add_option("--frame-shift", o.frame_shift, "seconds per frame");
  add_thresholds(inf);

  auto* ev = app.add_subcommand("eval", "score detections against references");
  ev->add_option("--ref", o.ref_path, "reference annotation file");
  ev->add_option("--det", o.det_path, "detection annotation file");
  ev->add_option("--collar", o.collar, "onset collar in seconds");
  ev->add_option("--out", o.out, "write the score table here");

  auto* sweep = app.add_subcommand("sweep", "train one model per alpha");
  add_training(sweep);
  sweep->add_option("--alpha-grid", o.alpha_grid, "comma-separated alphas (default 0.1,0.5,1,5,10)");

  auto* cmp = app.add_subcommand("compare", "train uni/bi/multi-resolution encoders");
  add_training(cmp);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    log << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  }

  try {
    if (synth->parsed()) return cmd_synth(o, log);
    if (trn->parsed()) return cmd_train(o, log);
    if (inf->parsed()) return cmd_infer(o, log);
    if (ev->parsed()) return cmd_eval(o, log);
    if (sweep->parsed()) return cmd_sweep(o, log);
    if (cmp->parsed()) return cmd_compare(o, log);
  } catch (const ConsistencyError& e) {
    err << "error: " << e.what() << "\n";
    return kConsistencyError;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kFailure;
}

inline int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args);
}

}  // namespace rsed::cli
