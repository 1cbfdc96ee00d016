#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lsed/audio.hpp"
#include "lsed/pipeline.hpp"

namespace lsed::eval {

inline constexpr double kSlotSeconds = 0.5;

/// Binary decisions on a fixed grid of `slot_s` seconds; slot i covers
/// [i * slot_s, (i + 1) * slot_s).
struct Timeline {
  double slot_s = kSlotSeconds;
  std::vector<double> probs;  ///< mean covering-window probability per slot
  std::vector<int> slots;     ///< probs > 0.5
};

/// floor(duration / slot) slots. Each slot averages the probabilities of the
/// windows covering it; slots no window covers get probability 0. Throws
/// InvalidArgument for window starts off the slot grid.
Timeline assemble_timeline(std::span<const pipeline::WindowPrediction> windows, double duration_s,
                           double win_s = 1.0, double slot_s = kSlotSeconds);

/// Reference timeline: a slot is positive when the union of `events` covers
/// more than half of it.
Timeline timeline_from_events(const std::vector<audio::EventInterval>& events, double duration_s,
                              double slot_s = kSlotSeconds);

/// Maximal runs of positive slots, labelled `label`.
std::vector<audio::EventInterval> extract_events(const Timeline& timeline, const std::string& label = "event");

double jaccard(const audio::EventInterval& a, const audio::EventInterval& b);

struct EventMetrics {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  double ppv = 0.0;
  double se = 0.0;
  double f1 = 0.0;
  bool ppv_undefined = false;
  bool se_undefined = false;
  bool f1_undefined = false;

  static EventMetrics from_counts(std::size_t tp, std::size_t fp, std::size_t fn);
};

/// Events within each list must not overlap (InvalidArgument otherwise).
/// Pairs are matched one-to-one greedily by descending Jaccard; a matched
/// pair with J > 0.5 is a true positive. FN = ground-truth events without a
/// true positive. FP = predictions overlapping no ground-truth event.
EventMetrics match_and_score(const std::vector<audio::EventInterval>& gt,
                             const std::vector<audio::EventInterval>& pred);

/// Micro average: counts are summed before ratios are formed.
EventMetrics aggregate(std::span<const EventMetrics> parts);

nlohmann::json to_json(const EventMetrics& m);

struct RecordingScore {
  std::string recording_id;
  EventMetrics metrics;
};

struct ScoreReport {
  std::vector<RecordingScore> per_recording;
  EventMetrics aggregate;
};

/// Scores every recording present in `truth`; recordings missing from
/// `pred` count as having no predicted events. Only events whose labels are
/// in `labels` are considered (all labels if empty).
ScoreReport score(const std::map<std::string, std::vector<audio::EventInterval>>& truth,
                  const std::map<std::string, std::vector<audio::EventInterval>>& pred,
                  const std::set<std::string>& labels = {});

nlohmann::json to_json(const ScoreReport& report);
std::string to_csv(const ScoreReport& report);

}  // namespace lsed::eval
