#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "lsed/features.hpp"
#include "lsed/model.hpp"
#include "lsed/pipeline.hpp"
#include "lsed/random.hpp"

namespace lsed::train {

struct TrainConfig {
  int epochs = 200;
  double lr = 1e-5;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  bool augment_enabled = true;
  features::AugmentConfig augment;
  std::string task = "inhalation";
  /// Progress callback cadence in epochs (0 disables it).
  int log_every = 1;

  void validate() const;
};

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t t = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

/// One bias-corrected Adam update of every tensor in `params`. Moments are
/// allocated on the first call; later calls must pass the same shapes.
void adam_step(std::span<ad::Tensor* const> params, std::span<const std::vector<double>> grads, AdamState& state,
               double lr);

/// Index batches for one epoch: a seeded permutation of [0, n) cut into
/// chunks of batch_size, keeping the final short chunk.
std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size, Rng& rng);

/// 1 iff prob > 0.5.
inline int threshold(double prob) { return prob > 0.5 ? 1 : 0; }
std::vector<int> threshold(std::span<const double> probs);

/// Window-level F1 of thresholded probabilities (0 when undefined).
double window_f1(std::span<const double> probs, std::span<const int> labels);
/// Mean clamped binary cross entropy, matching the training loss.
double mean_bce(std::span<const double> probs, std::span<const int> labels);

struct EpochRecord {
  int epoch = 0;  ///< 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_f1 = 0.0;
  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  int selected_epoch = 0;  ///< epoch whose parameters were kept
  friend bool operator==(const TrainHistory&, const TrainHistory&) = default;
};

/// epoch,train_loss,val_loss,val_f1 with round-trip precision.
std::string history_csv(const TrainHistory& history);
void write_history_csv(const std::filesystem::path& path, const TrainHistory& history);

struct TrainResult {
  model::MultiBranchTCN model;
  TrainHistory history;
};

using ProgressFn = std::function<void(const EpochRecord&)>;

/// Adam on mean BCE over shuffled mini-batches. The model is initialised
/// with init_seed = derive_seed(cfg.seed, "init"); shuffling and masking use
/// the "shuffle" and "augment" streams. Returns the parameters of the epoch
/// with the highest validation F1 (the later epoch wins ties). Throws
/// NumericalError naming the epoch and batch if the loss becomes NaN.
TrainResult train(const pipeline::Dataset& train_set, const pipeline::Dataset& val_set,
                  model::ModelConfig model_config, const TrainConfig& cfg, const ProgressFn& progress = {});

}  // namespace lsed::train
