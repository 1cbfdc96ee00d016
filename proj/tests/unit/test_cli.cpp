#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "cli/commands.hpp"
#include "cli/run_config.hpp"
#include "lsed/checkpoint.hpp"
#include "lsed/errors.hpp"
#include "test_util.hpp"

using namespace lsed;
using namespace lsed::cli;

namespace {

const fs::path kSourceDir = LSED_SOURCE_DIR;

std::vector<std::string> tiny_overrides() {
  return {"--override", "epochs=2",           "--override", "lr=1e-3",
          "--override", "model.branches=2",   "--override", "model.dilation_bases=2,3",
          "--override", "model.filters=4",    "--override", "model.layers_per_branch=1",
          "--override", "model.classifier_hidden=4,1", "--override", "val_holdout=2"};
}

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::size_t count_lines(const fs::path& p) {
  const auto s = testutil::read_file(p);
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

}  // namespace

TEST(RunConfig, DefaultFileMatchesBuiltInDefaults) {
  auto from_file = load_run_config(kSourceDir / "configs" / "default.conf");
  finalize(from_file);
  auto defaults = default_run_config();
  finalize(defaults);
  EXPECT_EQ(render(from_file), render(defaults));
  EXPECT_EQ(defaults.train.epochs, 200);
  EXPECT_EQ(defaults.train.lr, 1e-5);
  EXPECT_EQ(defaults.model.dilation_bases, (std::vector<int>{2, 3, 4}));
}

TEST(RunConfig, ParseCommentsOverridesAndRoundTrip) {
  auto c = parse_run_config("# comment\nseed = 9\n\nmodel.fusion_mode = feature_concat  # trailing\nlr=0.125\n");
  apply_override(c, "model.branches=2");
  finalize(c);
  EXPECT_EQ(c.train.seed, 9u);
  EXPECT_EQ(c.train.lr, 0.125);
  EXPECT_EQ(c.model.fusion, model::FusionMode::FeatureConcat);
  EXPECT_EQ(c.model.dilation_bases, (std::vector<int>{2, 3}));
  auto again = parse_run_config(render(c));
  finalize(again);
  EXPECT_EQ(render(again), render(c));
  EXPECT_EQ(again.model, c.model);
  const auto keys = known_keys();
  EXPECT_NE(std::find(keys.begin(), keys.end(), "window.hop_s"), keys.end());
}

TEST(RunConfig, RejectsBadInput) {
  RunConfig c = default_run_config();
  EXPECT_THROW(apply_setting(c, "nonsense", "1"), InvalidArgument);
  EXPECT_THROW(apply_setting(c, "epochs", "many"), InvalidArgument);
  EXPECT_THROW(apply_setting(c, "lr", "0.1x"), InvalidArgument);
  EXPECT_THROW(apply_override(c, "epochs"), InvalidArgument);
  EXPECT_THROW(parse_run_config("just words\n"), InvalidArgument);
  c = default_run_config();
  apply_setting(c, "model.dilation_bases", "2,3,4");
  apply_setting(c, "model.branches", "1");
  EXPECT_THROW(finalize(c), InvalidArgument);
  EXPECT_THROW(load_run_config("/nonexistent/run.conf"), DataError);
}

TEST(Cli, UsageErrorsMapToExitCodeOne) {
  EXPECT_EQ(run({}).code, kUsage);
  EXPECT_EQ(run({"frobnicate"}).code, kUsage);
  EXPECT_EQ(run({"synth"}).code, kUsage);
  EXPECT_EQ(run({"--help"}).code, kOk);
  EXPECT_EQ(run({"synth", "--out", "/tmp/x", "--count", "0"}).code, kUsage);
  EXPECT_EQ(run({"info", "--model", "/nonexistent/m.ckpt"}).code, kData);
}

class CliPipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new testutil::TempDir("cli");
    const auto d = dir_->path().string();
    ASSERT_EQ(run({"synth", "--seed", "5", "--count", "6", "--duration", "4", "--out", d + "/corpus"}).code, kOk);
    std::vector<std::string> args{"train", "--config", (kSourceDir / "configs" / "desk.conf").string(), "--task",
                                  "inhalation", "--train-manifest", d + "/corpus/manifest.json", "--out", d + "/run"};
    for (const auto& o : tiny_overrides()) args.push_back(o);
    const auto r = run(args);
    ASSERT_EQ(r.code, kOk) << r.err;
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }
  static fs::path path(const std::string& rel) { return dir_->path() / rel; }
  static testutil::TempDir* dir_;
};
testutil::TempDir* CliPipeline::dir_ = nullptr;

TEST_F(CliPipeline, TrainWritesCheckpointHistoryAndConfig) {
  EXPECT_TRUE(fs::exists(path("corpus/manifest.json")));
  EXPECT_EQ(count_lines(path("run/history.csv")), 3u);
  const auto ck = model::load_checkpoint(path("run/model.ckpt"));
  EXPECT_EQ(ck.model.config().filters, 4);
  EXPECT_EQ(ck.metadata.at("task"), "inhalation");
  const auto config = testutil::read_file(path("run/config.txt"));
  EXPECT_NE(config.find("model.filters = 4"), std::string::npos);
  EXPECT_NE(config.find("epochs = 2"), std::string::npos);
  // The written config reproduces the run.
  auto reparsed = parse_run_config(config);
  finalize(reparsed);
  EXPECT_EQ(reparsed.model.dilation_bases, (std::vector<int>{2, 3}));
}

TEST_F(CliPipeline, PredictEvaluateInterpretInfo) {
  const auto d = dir_->path().string();
  auto r = run({"predict", "--model", d + "/run/model.ckpt", "--manifest", d + "/corpus/manifest.json", "--out",
                d + "/pred"});
  ASSERT_EQ(r.code, kOk) << r.err;
  // 4 s recordings, 1 s windows every 0.5 s -> 7 windows each.
  EXPECT_EQ(count_lines(path("pred/probabilities.jsonl")), 6u * 7u);
  EXPECT_TRUE(fs::exists(path("pred/events.jsonl")));

  r = run({"evaluate", "--pred", d + "/pred/events.jsonl", "--truth", d + "/corpus/manifest.json", "--task",
           "inhalation", "--out", d + "/eval"});
  ASSERT_EQ(r.code, kOk) << r.err;
  const auto metrics = nlohmann::json::parse(testutil::read_file(path("eval/metrics.json")));
  EXPECT_EQ(metrics.at("per_recording").size(), 6u);
  EXPECT_TRUE(metrics.at("aggregate").contains("f1"));
  EXPECT_TRUE(fs::exists(path("eval/metrics.csv")));

  const auto manifest = nlohmann::json::parse(testutil::read_file(path("corpus/manifest.json")));
  const std::string wav = (path("corpus") / manifest.at("recordings").at(0).at("wav").get<std::string>()).string();
  r = run({"interpret", "--model", d + "/run/model.ckpt", "--wav", wav, "--window", "3", "--id", "r0", "--steps", "4",
           "--out", d + "/interp"});
  ASSERT_EQ(r.code, kOk) << r.err;
  EXPECT_TRUE(fs::exists(path("interp/r0.3.report.json")));
  EXPECT_TRUE(fs::exists(path("interp/r0.3.layer_conductance_b1.csv")));
  r = run({"interpret", "--model", d + "/run/model.ckpt", "--wav", wav, "--window", "99", "--out", d + "/interp"});
  EXPECT_EQ(r.code, kUsage);

  r = run({"info", "--model", d + "/run/model.ckpt"});
  ASSERT_EQ(r.code, kOk) << r.err;
  EXPECT_NE(r.out.find("branch 1: base 3, dilations [1], receptive radius 1 frames"), std::string::npos) << r.out;
  const std::size_t expected = 2 * (65 * 4 + 4 + 3 * 16 + 4 + 16 + 4) + (4 * 4 + 4) + (4 + 1);
  EXPECT_NE(r.out.find("param_count: " + std::to_string(expected)), std::string::npos) << r.out;
  r = run({"info", "--model", d + "/run/model.ckpt", "--json"});
  EXPECT_EQ(nlohmann::json::parse(r.out).at("param_count"), expected);
}

TEST_F(CliPipeline, DataErrorsMapToExitCodeTwo) {
  const auto d = dir_->path().string();
  testutil::write_file(path("bad.wav"), "RIFF....not a wave");
  EXPECT_EQ(run({"predict", "--model", d + "/run/model.ckpt", "--wav", d + "/bad.wav", "--out", d + "/p2"}).code, kData);
  testutil::write_file(path("stray.jsonl"), R"({"recording_id": "nobody", "start_s": 0, "end_s": 1, "label": "inhalation"})"
                                            "\n");
  EXPECT_EQ(run({"evaluate", "--pred", d + "/stray.jsonl", "--truth", d + "/corpus/manifest.json", "--out", d + "/e2"})
                .code,
            kData);
  EXPECT_EQ(run({"train", "--train-manifest", d + "/missing.json", "--out", d + "/t2"}).code, kData);
}

TEST_F(CliPipeline, DivergentTrainingMapsToExitCodeThree) {
  const auto d = dir_->path().string();
  std::vector<std::string> args{"train", "--config", (kSourceDir / "configs" / "desk.conf").string(),
                                "--train-manifest", d + "/corpus/manifest.json", "--out", d + "/boom"};
  for (const auto& o : tiny_overrides()) args.push_back(o);
  args.insert(args.end(), {"--override", "lr=1e300", "--override", "epochs=4"});
  const auto r = run(args);
  EXPECT_EQ(r.code, kNumerical) << r.err;
  EXPECT_NE(r.err.find("epoch"), std::string::npos) << r.err;
}
