#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "lsed/corpus.hpp"
#include "lsed/eval.hpp"
#include "lsed/train.hpp"
#include "run_config.hpp"

namespace lsed::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

struct SynthOptions {
  std::uint64_t seed = 0;
  std::size_t count = 10;
  double duration_s = 20.0;
  fs::path out;
  std::string prefix = "rec";
};
corpus::Manifest cmd_synth(const SynthOptions& opt, std::ostream& log);

struct TrainOptions {
  std::optional<fs::path> config;
  std::optional<std::string> task;
  fs::path train_manifest;
  std::optional<fs::path> val_manifest;
  fs::path out;
  std::vector<std::string> overrides;
};
/// Writes model.ckpt, history.csv and config.txt under `out`.
train::TrainResult cmd_train(const TrainOptions& opt, std::ostream& log);

struct PredictOptions {
  fs::path model;
  std::optional<fs::path> wav;
  std::optional<fs::path> manifest;
  std::optional<std::string> id;  ///< recording id for a single WAV (defaults to the file stem)
  fs::path out;
};
/// Writes probabilities.jsonl, events.jsonl and config.txt under `out`.
void cmd_predict(const PredictOptions& opt, std::ostream& log);

struct EvaluateOptions {
  fs::path pred;
  fs::path truth;  ///< annotation JSONL or a corpus manifest (.json)
  std::optional<std::string> task;
  fs::path out;
};
/// Writes metrics.json, metrics.csv and config.txt under `out`.
eval::ScoreReport cmd_evaluate(const EvaluateOptions& opt, std::ostream& log);

struct InterpretOptions {
  fs::path model;
  fs::path wav;
  std::size_t window = 0;
  std::optional<std::string> id;
  double p = 0.05;
  int steps = 128;
  fs::path out;
};
std::vector<fs::path> cmd_interpret(const InterpretOptions& opt, std::ostream& log);

struct InfoOptions {
  fs::path model;
  bool json = false;
};
std::string cmd_info(const InfoOptions& opt);

/// Parses `args` (without the program name), runs the subcommand and maps
/// errors to exit codes: 1 usage, 2 data, 3 numerical.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace lsed::cli
