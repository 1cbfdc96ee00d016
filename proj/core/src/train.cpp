#include "lsed/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "lsed/errors.hpp"
#include "lsed/ops.hpp"

namespace lsed::train {

void TrainConfig::validate() const {
  if (epochs < 0) throw InvalidArgument("epochs must be >= 0");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw InvalidArgument("lr must be a finite value >= 0");
  if (batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
  if (log_every < 0) throw InvalidArgument("log_every must be >= 0");
  augment.validate();
  audio::task_labels(task);
}

void adam_step(std::span<ad::Tensor* const> params, std::span<const std::vector<double>> grads, AdamState& s,
               double lr) {
  if (params.size() != grads.size()) throw InvalidArgument("adam_step: parameter and gradient counts differ");
  if (s.m.empty()) {
    for (const auto* p : params) {
      s.m.emplace_back(p->size(), 0.0);
      s.v.emplace_back(p->size(), 0.0);
    }
  }
  if (s.m.size() != params.size()) throw InvalidArgument("adam_step: state was built for a different model");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].size() != params[i]->size() || s.m[i].size() != params[i]->size()) {
      throw InvalidArgument("adam_step: shape mismatch at parameter " + std::to_string(i));
    }
  }
  ++s.t;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.t));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& theta = params[i]->values();
    auto& m = s.m[i];
    auto& v = s.v[i];
    const auto& g = grads[i];
    for (std::size_t j = 0; j < theta.size(); ++j) {
      m[j] = s.beta1 * m[j] + (1.0 - s.beta1) * g[j];
      v[j] = s.beta2 * v[j] + (1.0 - s.beta2) * g[j] * g[j];
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      theta[j] -= lr * mhat / (std::sqrt(vhat) + s.eps);
    }
  }
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size, Rng& rng) {
  if (batch_size == 0) throw InvalidArgument("make_batches: batch_size must be >= 1");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  // Fisher-Yates with an explicit draw so the permutation does not depend on
  // the standard library's shuffle implementation.
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t lo = 0; lo < n; lo += batch_size) {
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(lo),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(n, lo + batch_size)));
  }
  return batches;
}

std::vector<int> threshold(std::span<const double> probs) {
  std::vector<int> out;
  out.reserve(probs.size());
  for (double p : probs) out.push_back(threshold(p));
  return out;
}

double window_f1(std::span<const double> probs, std::span<const int> labels) {
  if (probs.size() != labels.size()) throw InvalidArgument("window_f1: size mismatch");
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const int p = threshold(probs[i]);
    tp += p == 1 && labels[i] == 1;
    fp += p == 1 && labels[i] == 0;
    fn += p == 0 && labels[i] == 1;
  }
  const std::size_t denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

double mean_bce(std::span<const double> probs, std::span<const int> labels) {
  if (probs.size() != labels.size() || probs.empty()) throw InvalidArgument("mean_bce: size mismatch or empty");
  double loss = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double q = std::clamp(probs[i], ad::kBceClamp, 1.0 - ad::kBceClamp);
    loss -= labels[i] == 1 ? std::log(q) : std::log(1.0 - q);
  }
  return loss / static_cast<double>(probs.size());
}

std::string history_csv(const TrainHistory& history) {
  std::ostringstream out;
  out << "epoch,train_loss,val_loss,val_f1\n" << std::setprecision(17);
  for (const auto& e : history.epochs) {
    out << e.epoch << ',' << e.train_loss << ',' << e.val_loss << ',' << e.val_f1 << '\n';
  }
  return out.str();
}

void write_history_csv(const std::filesystem::path& path, const TrainHistory& history) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write history '" + path.string() + "'");
  out << history_csv(history);
}

namespace {

void check_split(const pipeline::Dataset& ds, const char* name) {
  if (ds.windows.empty()) throw InvalidArgument(std::string(name) + " split is empty");
  if (ds.windows.size() != ds.labels.size()) throw InvalidArgument(std::string(name) + " split: label count mismatch");
  for (int y : ds.labels) {
    if (y != 0 && y != 1) throw InvalidArgument(std::string(name) + " split: labels must be 0 or 1");
  }
}

}  // namespace

TrainResult train(const pipeline::Dataset& train_set, const pipeline::Dataset& val_set,
                  model::ModelConfig model_config, const TrainConfig& cfg, const ProgressFn& progress) {
  cfg.validate();
  check_split(train_set, "training");
  check_split(val_set, "validation");
  model_config.init_seed = derive_seed(cfg.seed, "init");
  auto model = model::MultiBranchTCN::init(model_config);

  Rng shuffle_rng = make_rng(cfg.seed, "shuffle");
  Rng augment_rng = make_rng(cfg.seed, "augment");
  AdamState adam;
  TrainResult result{model, {}};
  double best_f1 = -1.0;

  std::vector<ad::Tensor*> params;
  for (auto& [name, t] : model.named_parameters()) params.push_back(t);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double loss_sum = 0.0;
    const auto batches = make_batches(train_set.size(), cfg.batch_size, shuffle_rng);
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      const auto& batch = batches[bi];
      std::vector<features::FeatureWindow> augmented;
      std::vector<const features::FeatureWindow*> inputs;
      std::vector<double> targets;
      augmented.reserve(batch.size());
      for (std::size_t idx : batch) {
        const auto& fw = train_set.windows[idx];
        if (cfg.augment_enabled) {
          augmented.push_back(features::spec_augment(fw, cfg.augment, augment_rng));
          inputs.push_back(&augmented.back());
        } else {
          inputs.push_back(&fw);
        }
        targets.push_back(static_cast<double>(train_set.labels[idx]));
      }

      ad::Tape tape;
      const auto tr = model.trace(tape, tape.constant(model::stack_windows(inputs)), /*track_param_grads=*/true);
      const auto loss = ad::bce(tr.probs, tape.constant(ad::Tensor({batch.size()}, std::move(targets))));
      const double value = loss.item();
      if (!std::isfinite(value)) {
        throw NumericalError("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(bi + 1) + " of " + std::to_string(batches.size()));
      }
      tape.backward(loss);
      std::vector<std::vector<double>> grads;
      grads.reserve(tr.params.size());
      for (const auto& p : tr.params) grads.push_back(tape.grad(p));
      adam_step(params, grads, adam, cfg.lr);
      loss_sum += value * static_cast<double>(batch.size());
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(train_set.size());
    const auto val_probs = model.predict(val_set.windows);
    rec.val_loss = mean_bce(val_probs, val_set.labels);
    rec.val_f1 = window_f1(val_probs, val_set.labels);
    result.history.epochs.push_back(rec);
    if (rec.val_f1 >= best_f1) {
      best_f1 = rec.val_f1;
      result.model = model;
      result.history.selected_epoch = epoch;
    }
    if (progress && cfg.log_every > 0 && (epoch % cfg.log_every == 0 || epoch == cfg.epochs)) progress(rec);
  }
  return result;
}

}  // namespace lsed::train
