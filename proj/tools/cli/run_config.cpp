#include "run_config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "lsed/errors.hpp"

namespace lsed::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
  // Shortest representation that parses back to the same value.
  for (int precision = 1; precision <= 17; ++precision) {
    std::ostringstream out;
    out.precision(precision);
    out << v;
    if (std::stod(out.str()) == v) return out.str();
  }
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw InvalidArgument("config key '" + key + "': '" + v + "' is not a number");
}

template <typename Int>
Int to_int(const std::string& key, const std::string& v) {
  Int out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) {
    throw InvalidArgument("config key '" + key + "': '" + v + "' is not a valid integer");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw InvalidArgument("config key '" + key + "': '" + v + "' is not a boolean");
}

std::vector<int> to_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_int<int>(key, trim(item)));
  if (out.empty()) throw InvalidArgument("config key '" + key + "': empty list");
  return out;
}

std::string fmt_list(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

struct Field {
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define LSED_DOUBLE(expr)                                                                             \
  Field {                                                                                             \
    [](RunConfig& c, const std::string& k, const std::string& v) { c.expr = to_double(k, v); },       \
        [](const RunConfig& c) { return fmt_double(c.expr); }                                         \
  }
#define LSED_INT(type, expr)                                                                          \
  Field {                                                                                             \
    [](RunConfig& c, const std::string& k, const std::string& v) { c.expr = to_int<type>(k, v); },    \
        [](const RunConfig& c) { return std::to_string(c.expr); }                                     \
  }

const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = {
      {"seed", LSED_INT(std::uint64_t, train.seed)},
      {"task", {[](RunConfig& c, const std::string&, const std::string& v) { c.train.task = v; },
                [](const RunConfig& c) { return c.train.task; }}},
      {"epochs", LSED_INT(int, train.epochs)},
      {"lr", LSED_DOUBLE(train.lr)},
      {"batch_size", LSED_INT(std::size_t, train.batch_size)},
      {"log_every", LSED_INT(int, train.log_every)},
      {"augment", {[](RunConfig& c, const std::string& k, const std::string& v) { c.train.augment_enabled = to_bool(k, v); },
                   [](const RunConfig& c) { return std::string(c.train.augment_enabled ? "true" : "false"); }}},
      {"augment.apply_prob", LSED_DOUBLE(train.augment.apply_prob)},
      {"augment.freq_width_min", LSED_INT(int, train.augment.freq_width_min)},
      {"augment.freq_width_max", LSED_INT(int, train.augment.freq_width_max)},
      {"augment.time_width_min", LSED_INT(int, train.augment.time_width_min)},
      {"augment.time_width_max", LSED_INT(int, train.augment.time_width_max)},
      {"model.branches", LSED_INT(int, model.branches)},
      {"model.layers_per_branch", LSED_INT(int, model.layers_per_branch)},
      {"model.filters", LSED_INT(int, model.filters)},
      {"model.kernel", LSED_INT(int, model.kernel)},
      {"model.dilation_bases",
       {[](RunConfig& c, const std::string& k, const std::string& v) {
          c.model.dilation_bases = to_int_list(k, v);
          c.explicit_bases = true;
        },
        [](const RunConfig& c) { return fmt_list(c.model.dilation_bases); }}},
      {"model.classifier_hidden",
       {[](RunConfig& c, const std::string& k, const std::string& v) { c.model.classifier_hidden = to_int_list(k, v); },
        [](const RunConfig& c) { return fmt_list(c.model.classifier_hidden); }}},
      {"model.fusion_mode",
       {[](RunConfig& c, const std::string&, const std::string& v) { c.model.fusion = model::parse_fusion_mode(v); },
        [](const RunConfig& c) { return std::string(model::to_string(c.model.fusion)); }}},
      {"features.frame_s", LSED_DOUBLE(pipeline.features.frame_s)},
      {"features.step_s", LSED_DOUBLE(pipeline.features.step_s)},
      {"features.f_lo", LSED_DOUBLE(pipeline.features.f_lo)},
      {"features.f_hi", LSED_DOUBLE(pipeline.features.f_hi)},
      {"features.delta_n", LSED_INT(int, pipeline.features.delta_n)},
      {"features.energy_floor", LSED_DOUBLE(pipeline.features.energy_floor)},
      {"window.win_s", LSED_DOUBLE(pipeline.windowing.win_s)},
      {"window.hop_s", LSED_DOUBLE(pipeline.windowing.hop_s)},
      {"workers", LSED_INT(unsigned, workers)},
      {"val_holdout", LSED_INT(std::size_t, val_holdout)},
      {"feature_cache", {[](RunConfig& c, const std::string&, const std::string& v) { c.feature_cache = v; },
                         [](const RunConfig& c) { return c.feature_cache; }}},
  };
  return table;
}

#undef LSED_DOUBLE
#undef LSED_INT

}  // namespace

RunConfig default_run_config() {
  RunConfig c;
  c.train.epochs = 200;
  c.train.lr = 1e-5;
  return c;
}

void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& [name, field] : fields()) {
    if (name == key) {
      field.set(cfg, key, value);
      return;
    }
  }
  throw InvalidArgument("unknown config key '" + key + "'");
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw InvalidArgument("override '" + assignment + "' is not of the form key=value");
  apply_setting(cfg, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

RunConfig parse_run_config(const std::string& text, const std::string& origin) {
  RunConfig cfg = default_run_config();
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    try {
      apply_override(cfg, line);
    } catch (const InvalidArgument& e) {
      throw InvalidArgument(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), path.string());
}

void finalize(RunConfig& cfg) {
  if (!cfg.explicit_bases && cfg.model.branches >= 1) {
    cfg.model.dilation_bases.clear();
    for (int b = 0; b < cfg.model.branches; ++b) cfg.model.dilation_bases.push_back(b + 2);
  }
  cfg.model.validate();
  cfg.train.validate();
  if (cfg.workers < 1) throw InvalidArgument("workers must be >= 1");
  if (!(cfg.pipeline.windowing.win_s > 0.0) || !(cfg.pipeline.windowing.hop_s > 0.0)) {
    throw InvalidArgument("window.win_s and window.hop_s must be > 0");
  }
}

std::string render(const RunConfig& cfg) {
  std::string out;
  for (const auto& [name, field] : fields()) out += name + " = " + field.get(cfg) + "\n";
  return out;
}

std::vector<std::string> known_keys() {
  std::vector<std::string> out;
  for (const auto& [name, field] : fields()) out.push_back(name);
  return out;
}

}  // namespace lsed::cli
