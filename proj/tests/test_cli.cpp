// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "rsed_cli.hpp"
#include "support.hpp"

using namespace rsed;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) { return read_file(p); }

void write(const fs::path& p, const std::string& text) { write_file_atomic(p, text); }

constexpr const char* kSynth = R"({"train_count": 20, "dev_count": 10, "frames": 40, "feature_dim": 6,
  "min_duration": 5, "max_duration": 12, "ebr_db": [12], "seed": 4})";
constexpr const char* kTrain = R"({"alpha": 1, "epochs": 2, "seed": 9, "stepsize": 0.01, "margin": 10,
  "encoder": {"kind": "multires", "layers": 2, "hidden": 4}})";

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = fixtures::scratch_dir("cli");
    write(dir_ / "synth.json", kSynth);
    write(dir_ / "train.json", kTrain);
    ASSERT_EQ(run({"synth", "--config", (dir_ / "synth.json").string(), "--out", (dir_ / "data").string()}).code,
              0);
  }
  static fs::path data(const std::string& name) { return dir_ / "data" / name; }
  static inline fs::path dir_;
};

}  // namespace

TEST_F(Cli, SynthWritesSplitsAndManifest) {
  const Dataset train = load_dataset(data("train.rsds"));
  EXPECT_EQ(train.utterances.size(), 20u);
  EXPECT_EQ(load_dataset(data("dev.rsds")).utterances.size(), 10u);
  EXPECT_EQ(load_annotations(data("train_ref.tsv").string()).size(), 20u);
  const Json m = Json::parse(slurp(data("manifest.json")));
  EXPECT_EQ(m["command"], "synth");
  EXPECT_EQ(m["seed"], 4);
  EXPECT_EQ(m["version"], kVersion);
  EXPECT_TRUE(m.contains("wall_clock_seconds"));
  EXPECT_EQ(m["outputs"].size(), 4u);
  EXPECT_EQ(m["config"]["train_count"], 20);
}

TEST_F(Cli, SynthIsIdempotentAndSeedOverrides) {
  const auto out = dir_ / "again";
  ASSERT_EQ(run({"synth", "--config", (dir_ / "synth.json").string(), "--out", out.string()}).code, 0);
  EXPECT_EQ(slurp(out / "train.rsds"), slurp(data("train.rsds")));
  EXPECT_EQ(slurp(out / "dev_ref.tsv"), slurp(data("dev_ref.tsv")));
  const auto other = dir_ / "seed5";
  ASSERT_EQ(run({"synth", "--config", (dir_ / "synth.json").string(), "--out", other.string(), "--seed", "5"}).code,
            0);
  EXPECT_NE(slurp(other / "train.rsds"), slurp(data("train.rsds")));
  // Rerunning from the manifest reproduces the files.
  const auto rerun = dir_ / "rerun_synth";
  ASSERT_EQ(run({"synth", "--config", (other / "manifest.json").string(), "--out", rerun.string()}).code, 0);
  EXPECT_EQ(slurp(rerun / "train.rsds"), slurp(other / "train.rsds"));
}

TEST_F(Cli, SynthConfigErrorsExitTwo) {
  write(dir_ / "bad.json", R"({"train_count": 3, "dev_count": 2, "frames": 40})");
  const Result r = run({"synth", "--config", (dir_ / "bad.json").string(), "--out", (dir_ / "x").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("feature_dim"), std::string::npos) << r.err;
  write(dir_ / "broken.json", "{not json");
  EXPECT_EQ(run({"synth", "--config", (dir_ / "broken.json").string(), "--out", "x"}).code, 2);
  EXPECT_EQ(run({"synth", "--config", (dir_ / "missing.json").string(), "--out", "x"}).code, 2);
  EXPECT_EQ(run({"synth", "--out", "x"}).code, 2);
  EXPECT_EQ(run({"frobnicate"}).code, 2);
  EXPECT_EQ(run({}).code, 2);
}

TEST_F(Cli, TrainInferEvalPipeline) {
  const auto out = dir_ / "model";
  const std::vector<std::string> args = {"train", "--config", (dir_ / "train.json").string(), "--train",
                                         data("train.rsds").string(), "--dev", data("dev.rsds").string(),
                                         "--out", out.string()};
  ASSERT_EQ(run(args).code, 0);
  for (const char* f : {"model.json", "report.json", "epochs.tsv", "manifest.json"})
    EXPECT_TRUE(fs::exists(out / f)) << f;
  const std::string table = slurp(out / "epochs.tsv");
  EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 3);

  const auto det = dir_ / "det.tsv";
  ASSERT_EQ(run({"infer", "--model", (out / "model.json").string(), "--data", data("dev.rsds").string(), "--out",
                 det.string()})
                .code,
            0);
  EXPECT_TRUE(fs::exists(dir_ / "det.tsv.manifest.json"));
  EXPECT_EQ(load_annotations(det.string()).size(), 10u);
  const Result ev = run({"eval", "--ref", data("dev_ref.tsv").string(), "--det", det.string()});
  EXPECT_EQ(ev.code, 0);
  EXPECT_EQ(ev.out.rfind("er\tf1\ttp\tins\tdel\tn\tcollar\n", 0), 0u) << ev.out;

  // Idempotence, and rerunning from the manifest.
  const auto out2 = dir_ / "model2";
  std::vector<std::string> again = args;
  again.back() = out2.string();
  ASSERT_EQ(run(again).code, 0);
  const auto out3 = dir_ / "model3";
  ASSERT_EQ(run({"train", "--config", (out / "manifest.json").string(), "--train", data("train.rsds").string(),
                 "--dev", data("dev.rsds").string(), "--out", out3.string()})
                .code,
            0);
  for (const char* f : {"model.json", "report.json", "epochs.tsv"}) {
    EXPECT_EQ(slurp(out / f), slurp(out2 / f)) << f;
    EXPECT_EQ(slurp(out / f), slurp(out3 / f)) << f;
  }
  const auto det2 = dir_ / "det2.tsv";
  ASSERT_EQ(run({"infer", "--model", (out2 / "model.json").string(), "--data", data("dev.rsds").string(), "--out",
                 det2.string()})
                .code,
            0);
  EXPECT_EQ(slurp(det), slurp(det2));
}

TEST_F(Cli, TrainEpochOverrideAndDimensionMismatch) {
  const auto out = dir_ / "one_epoch";
  ASSERT_EQ(run({"train", "--config", (dir_ / "train.json").string(), "--train", data("train.rsds").string(),
                 "--dev", data("dev.rsds").string(), "--out", out.string(), "--epochs", "1"})
                .code,
            0);
  const Json report = Json::parse(slurp(out / "report.json"));
  EXPECT_EQ(report["epochs"].size(), 1u);

  write(dir_ / "synth8.json", R"({"train_count": 4, "dev_count": 4, "frames": 40, "feature_dim": 8,
    "min_duration": 5, "max_duration": 12})");
  ASSERT_EQ(
      run({"synth", "--config", (dir_ / "synth8.json").string(), "--out", (dir_ / "data8").string()}).code, 0);
  const Result r = run({"train", "--config", (dir_ / "train.json").string(), "--train", data("train.rsds").string(),
                        "--dev", (dir_ / "data8" / "dev.rsds").string(), "--out", (dir_ / "mm").string()});
  EXPECT_EQ(r.code, 3) << r.err;
  const Result inf = run({"infer", "--model", (out / "model.json").string(), "--data",
                          (dir_ / "data8" / "dev.rsds").string(), "--out", (dir_ / "mm.tsv").string()});
  EXPECT_EQ(inf.code, 3) << inf.err;
}

TEST_F(Cli, InferEdgeCases) {
  // A model with w = 0 scores every utterance at exactly 0.5.
  EventModel m = EventModel::create({EncoderKind::unidirectional, 1, 3, 6, false}, 1);
  std::fill(m.w.begin(), m.w.end(), 0.0);
  save_model(dir_ / "zero_w.json", m, 1);
  const auto det = dir_ / "zero_det.tsv";
  ASSERT_EQ(run({"infer", "--model", (dir_ / "zero_w.json").string(), "--data", data("dev.rsds").string(), "--out",
                 det.string()})
                .code,
            0);
  for (const auto& r : load_annotations(det.string())) EXPECT_FALSE(r.event.has_value()) << r.id;

  save_dataset(dir_ / "empty.rsds", Dataset{});
  const auto empty_det = dir_ / "empty_det.tsv";
  ASSERT_EQ(run({"infer", "--model", (dir_ / "zero_w.json").string(), "--data", (dir_ / "empty.rsds").string(),
                 "--out", empty_det.string()})
                .code,
            0);
  EXPECT_EQ(slurp(empty_det), "id\tlabel\tonset\toffset\n");

  EXPECT_EQ(run({"infer", "--model", (dir_ / "nope.json").string(), "--data", data("dev.rsds").string(), "--out",
                 (dir_ / "n.tsv").string()})
                .code,
            2);
  EXPECT_EQ(run({"infer", "--model", (dir_ / "zero_w.json").string(), "--data", data("dev.rsds").string(), "--out",
                 (dir_ / "n.tsv").string(), "--thres0", "1.5"})
                .code,
            2);
}

TEST_F(Cli, EvalFixtures) {
  const std::string refs = "id\tlabel\tonset\toffset\nu1\t1\t1.0\t1.5\nu2\t1\t2.0\t2.5\nu3\t0\t\t\n";
  write(dir_ / "ref.tsv", refs);
  write(dir_ / "sys.tsv", "id\tlabel\tonset\toffset\nu1\t1\t1.2\t1.5\nu2\t0\t\t\nu3\t1\t0.5\t0.7\n");
  const Result same = run({"eval", "--ref", (dir_ / "ref.tsv").string(), "--det", (dir_ / "ref.tsv").string()});
  EXPECT_EQ(same.code, 0);
  EXPECT_NE(same.out.find("\n0.0000\t100.00\t2\t0\t0\t2\t"), std::string::npos) << same.out;
  const auto table = dir_ / "score.tsv";
  const Result hand = run({"eval", "--ref", (dir_ / "ref.tsv").string(), "--det", (dir_ / "sys.tsv").string(),
                           "--out", table.string()});
  EXPECT_EQ(hand.code, 0);
  EXPECT_NE(hand.out.find("\n1.0000\t50.00\t1\t1\t1\t2\t"), std::string::npos) << hand.out;
  EXPECT_EQ(slurp(table), hand.out);
  EXPECT_TRUE(fs::exists(dir_ / "score.tsv.manifest.json"));

  // 0.3 s onset error: inside a 0.5 s collar, outside a 0.1 s collar.
  write(dir_ / "late.tsv", "id\tlabel\tonset\toffset\nu1\t1\t1.3\t1.5\nu2\t1\t2.3\t2.5\nu3\t0\t\t\n");
  const Result wide = run({"eval", "--ref", (dir_ / "ref.tsv").string(), "--det", (dir_ / "late.tsv").string(),
                           "--collar", "0.5"});
  EXPECT_NE(wide.out.find("\n0.0000\t100.00\t2\t0\t0\t2\t"), std::string::npos) << wide.out;
  const Result narrow = run({"eval", "--ref", (dir_ / "ref.tsv").string(), "--det", (dir_ / "late.tsv").string(),
                             "--collar", "0.1"});
  EXPECT_NE(narrow.out.find("\n2.0000\t0.00\t0\t2\t2\t2\t"), std::string::npos) << narrow.out;

  write(dir_ / "other.tsv", "id\tlabel\tonset\toffset\nu1\t0\t\t\nq9\t0\t\t\nu3\t0\t\t\n");
  const Result mismatch = run({"eval", "--ref", (dir_ / "ref.tsv").string(), "--det", (dir_ / "other.tsv").string()});
  EXPECT_EQ(mismatch.code, 3);
  EXPECT_NE(mismatch.err.find("u2"), std::string::npos);
  EXPECT_NE(mismatch.err.find("q9"), std::string::npos);
  write(dir_ / "garbled.tsv", "id\tlabel\tonset\toffset\nu1\tmaybe\t\t\n");
  EXPECT_EQ(run({"eval", "--ref", (dir_ / "ref.tsv").string(), "--det", (dir_ / "garbled.tsv").string()}).code, 2);
}

TEST_F(Cli, SweepTables) {
  const std::vector<std::string> base = {"sweep", "--config", (dir_ / "train.json").string(), "--train",
                                         data("train.rsds").string(), "--dev", data("dev.rsds").string(),
                                         "--epochs", "1"};
  auto with = [&](std::vector<std::string> extra) {
    std::vector<std::string> a = base;
    a.insert(a.end(), extra.begin(), extra.end());
    return run(a);
  };
  ASSERT_EQ(with({"--out", (dir_ / "sw1").string(), "--alpha-grid", "1.0"}).code, 0);
  const std::string one = slurp(dir_ / "sw1" / "sweep.tsv");
  EXPECT_EQ(std::count(one.begin(), one.end(), '\n'), 2);

  ASSERT_EQ(with({"--out", (dir_ / "sw5").string()}).code, 0);
  std::istringstream rows(slurp(dir_ / "sw5" / "sweep.tsv"));
  std::string line;
  std::getline(rows, line);
  EXPECT_EQ(line, "alpha\tbest_epoch\tdev_er\tdev_f1");
  std::vector<double> alphas;
  while (std::getline(rows, line)) alphas.push_back(std::stod(line.substr(0, line.find('\t'))));
  EXPECT_EQ(alphas, (std::vector<double>{0.1, 0.5, 1.0, 5.0, 10.0}));

  ASSERT_EQ(with({"--out", (dir_ / "sw5b").string()}).code, 0);
  EXPECT_EQ(slurp(dir_ / "sw5" / "sweep.tsv"), slurp(dir_ / "sw5b" / "sweep.tsv"));
  EXPECT_EQ(with({"--out", (dir_ / "swx").string(), "--alpha-grid", "1,x"}).code, 2);
}
