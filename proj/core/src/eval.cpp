#include "lsed/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <sstream>
#include <tuple>

#include "lsed/errors.hpp"

namespace lsed::eval {

namespace {

constexpr double kGridTol = 1e-6;

std::size_t slot_count(double duration_s, double slot_s) {
  if (!(slot_s > 0.0)) throw InvalidArgument("slot length must be > 0");
  if (duration_s < 0.0) throw InvalidArgument("duration must be >= 0");
  return static_cast<std::size_t>(std::floor(duration_s / slot_s + kGridTol));
}

void finish(Timeline& t) {
  t.slots.resize(t.probs.size());
  for (std::size_t i = 0; i < t.probs.size(); ++i) t.slots[i] = t.probs[i] > 0.5 ? 1 : 0;
}

void require_disjoint(std::vector<audio::EventInterval> events, const char* which) {
  std::sort(events.begin(), events.end(), [](const auto& a, const auto& b) { return a.start_s < b.start_s; });
  for (const auto& e : events) {
    if (!(e.end_s > e.start_s)) throw InvalidArgument(std::string(which) + " contains an empty or reversed event");
  }
  for (std::size_t i = 1; i < events.size(); ++i) {
    if (events[i].start_s < events[i - 1].end_s) {
      throw InvalidArgument(std::string(which) + " events overlap at " + std::to_string(events[i].start_s) + " s");
    }
  }
}

double overlap(const audio::EventInterval& a, const audio::EventInterval& b) {
  return std::max(0.0, std::min(a.end_s, b.end_s) - std::max(a.start_s, b.start_s));
}

double ratio(std::size_t num, std::size_t den, bool& undefined) {
  undefined = den == 0;
  return undefined ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

Timeline assemble_timeline(std::span<const pipeline::WindowPrediction> windows, double duration_s, double win_s,
                           double slot_s) {
  Timeline t;
  t.slot_s = slot_s;
  const std::size_t n = slot_count(duration_s, slot_s);
  const double per_window = win_s / slot_s;
  const auto span_slots = static_cast<std::size_t>(std::llround(per_window));
  if (std::abs(per_window - static_cast<double>(span_slots)) > kGridTol || span_slots == 0) {
    throw InvalidArgument("window length must be a whole number of slots");
  }
  std::vector<double> sum(n, 0.0);
  std::vector<int> count(n, 0);
  for (const auto& w : windows) {
    const double pos = w.start_s / slot_s;
    const double rounded = std::round(pos);
    if (w.start_s < 0.0 || std::abs(pos - rounded) > kGridTol) {
      throw InvalidArgument("window start " + std::to_string(w.start_s) + " s is not on the " +
                            std::to_string(slot_s) + " s grid");
    }
    const auto first = static_cast<std::size_t>(rounded);
    for (std::size_t s = first; s < first + span_slots && s < n; ++s) {
      sum[s] += w.prob;
      ++count[s];
    }
  }
  t.probs.resize(n, 0.0);
  for (std::size_t s = 0; s < n; ++s) t.probs[s] = count[s] > 0 ? sum[s] / count[s] : 0.0;
  finish(t);
  return t;
}

Timeline timeline_from_events(const std::vector<audio::EventInterval>& events, double duration_s, double slot_s) {
  Timeline t;
  t.slot_s = slot_s;
  const std::size_t n = slot_count(duration_s, slot_s);
  t.probs.resize(n, 0.0);
  for (std::size_t s = 0; s < n; ++s) {
    const audio::EventInterval slot{static_cast<double>(s) * slot_s, static_cast<double>(s + 1) * slot_s, ""};
    // Union coverage: sort-free since events of one label do not overlap;
    // clip the sum to the slot length in case they do.
    double covered = 0.0;
    for (const auto& e : events) covered += overlap(slot, e);
    t.probs[s] = std::min(covered, slot_s) > slot_s / 2 ? 1.0 : 0.0;
  }
  finish(t);
  return t;
}

std::vector<audio::EventInterval> extract_events(const Timeline& timeline, const std::string& label) {
  std::vector<audio::EventInterval> out;
  const std::size_t n = timeline.slots.size();
  for (std::size_t i = 0; i < n;) {
    if (timeline.slots[i] == 0) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < n && timeline.slots[j] != 0) ++j;
    out.push_back({static_cast<double>(i) * timeline.slot_s, static_cast<double>(j) * timeline.slot_s, label});
    i = j;
  }
  return out;
}

double jaccard(const audio::EventInterval& a, const audio::EventInterval& b) {
  const double inter = overlap(a, b);
  const double uni = (a.end_s - a.start_s) + (b.end_s - b.start_s) - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

EventMetrics EventMetrics::from_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
  EventMetrics m;
  m.tp = tp;
  m.fp = fp;
  m.fn = fn;
  m.ppv = ratio(tp, tp + fp, m.ppv_undefined);
  m.se = ratio(tp, tp + fn, m.se_undefined);
  // Equal to 2 ppv se / (ppv + se) whenever that is defined.
  m.f1 = ratio(2 * tp, 2 * tp + fp + fn, m.f1_undefined);
  return m;
}

EventMetrics match_and_score(const std::vector<audio::EventInterval>& gt,
                             const std::vector<audio::EventInterval>& pred) {
  require_disjoint(gt, "ground truth");
  require_disjoint(pred, "prediction");

  std::vector<std::tuple<double, std::size_t, std::size_t>> pairs;
  for (std::size_t g = 0; g < gt.size(); ++g) {
    for (std::size_t p = 0; p < pred.size(); ++p) {
      const double j = jaccard(gt[g], pred[p]);
      if (j > 0.0) pairs.emplace_back(j, g, p);
    }
  }
  std::sort(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) {
    if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) > std::get<0>(b);
    return std::tie(std::get<1>(a), std::get<2>(a)) < std::tie(std::get<1>(b), std::get<2>(b));
  });
  std::vector<bool> gt_used(gt.size(), false), pred_used(pred.size(), false);
  std::size_t tp = 0;
  for (const auto& [j, g, p] : pairs) {
    if (gt_used[g] || pred_used[p]) continue;
    gt_used[g] = pred_used[p] = true;
    if (j > 0.5) ++tp;
  }

  std::size_t fp = 0;
  for (const auto& p : pred) {
    const bool touches = std::any_of(gt.begin(), gt.end(), [&](const auto& g) { return overlap(g, p) > 0.0; });
    if (!touches) ++fp;
  }
  return EventMetrics::from_counts(tp, fp, gt.size() - tp);
}

EventMetrics aggregate(std::span<const EventMetrics> parts) {
  std::size_t tp = 0, fp = 0, fn = 0;
  for (const auto& m : parts) {
    tp += m.tp;
    fp += m.fp;
    fn += m.fn;
  }
  return EventMetrics::from_counts(tp, fp, fn);
}

nlohmann::json to_json(const EventMetrics& m) {
  nlohmann::json j{{"tp", m.tp}, {"fp", m.fp}, {"fn", m.fn}, {"ppv", m.ppv}, {"se", m.se}, {"f1", m.f1}};
  nlohmann::json undefined = nlohmann::json::array();
  if (m.ppv_undefined) undefined.push_back("ppv");
  if (m.se_undefined) undefined.push_back("se");
  if (m.f1_undefined) undefined.push_back("f1");
  j["undefined"] = undefined;
  return j;
}

ScoreReport score(const std::map<std::string, std::vector<audio::EventInterval>>& truth,
                  const std::map<std::string, std::vector<audio::EventInterval>>& pred,
                  const std::set<std::string>& labels) {
  auto keep = [&](const std::vector<audio::EventInterval>& events) {
    std::vector<audio::EventInterval> out;
    for (const auto& e : events) {
      if (labels.empty() || labels.contains(e.label)) out.push_back(e);
    }
    return out;
  };
  for (const auto& [id, events] : pred) {
    if (!truth.contains(id)) throw DataError("predictions reference recording '" + id + "' absent from the truth");
  }
  ScoreReport report;
  std::vector<EventMetrics> parts;
  for (const auto& [id, gt_events] : truth) {
    const auto it = pred.find(id);
    const auto p = it == pred.end() ? std::vector<audio::EventInterval>{} : keep(it->second);
    report.per_recording.push_back({id, match_and_score(keep(gt_events), p)});
    parts.push_back(report.per_recording.back().metrics);
  }
  report.aggregate = aggregate(parts);
  return report;
}

nlohmann::json to_json(const ScoreReport& report) {
  nlohmann::json per = nlohmann::json::array();
  for (const auto& r : report.per_recording) {
    auto j = to_json(r.metrics);
    j["recording_id"] = r.recording_id;
    per.push_back(std::move(j));
  }
  return nlohmann::json{{"per_recording", per}, {"aggregate", to_json(report.aggregate)}};
}

std::string to_csv(const ScoreReport& report) {
  std::ostringstream out;
  out << "recording_id,tp,fp,fn,ppv,se,f1\n" << std::setprecision(17);
  auto row = [&](const std::string& id, const EventMetrics& m) {
    out << id << ',' << m.tp << ',' << m.fp << ',' << m.fn << ',' << m.ppv << ',' << m.se << ',' << m.f1 << '\n';
  };
  for (const auto& r : report.per_recording) row(r.recording_id, r.metrics);
  row("__aggregate__", report.aggregate);
  return out.str();
}

}  // namespace lsed::eval
