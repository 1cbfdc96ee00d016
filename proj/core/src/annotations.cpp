#include <cstdio>
#include <fstream>
#include <sstream>

#include "lsed/corpus.hpp"
#include "lsed/errors.hpp"
#include "lsed/random.hpp"

namespace lsed::corpus {

namespace fs = std::filesystem;
using nlohmann::json;

AnnotationMap read_annotations(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open annotation file '" + path.string() + "'");
  AnnotationMap out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno) + ": ";
    json j;
    try {
      j = json::parse(line);
      audio::EventInterval e{j.at("start_s").get<double>(), j.at("end_s").get<double>(),
                             j.at("label").get<std::string>()};
      if (e.label.empty()) throw DataError(where + "empty label");
      if (!(e.end_s > e.start_s)) throw DataError(where + "end_s must exceed start_s");
      out[j.at("recording_id").get<std::string>()].push_back(std::move(e));
    } catch (const json::exception& ex) {
      throw DataError(where + ex.what());
    }
  }
  return out;
}

void write_annotations(const fs::path& path, const AnnotationMap& annotations) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write annotation file '" + path.string() + "'");
  for (const auto& [id, events] : annotations) {
    for (const auto& e : events) {
      out << json{{"recording_id", id}, {"start_s", e.start_s}, {"end_s", e.end_s}, {"label", e.label}}
                 .dump()
          << '\n';
    }
  }
}

void write_annotations(const fs::path& path, const std::string& recording_id,
                       const std::vector<audio::EventInterval>& events) {
  write_annotations(path, AnnotationMap{{recording_id, events}});
}

Manifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest '" + path.string() + "'");
  Manifest m;
  try {
    const json j = json::parse(in);
    m.format_version = j.at("format_version").get<int>();
    if (m.format_version != 1) {
      throw DataError("manifest '" + path.string() + "': unsupported format_version " +
                      std::to_string(m.format_version));
    }
    m.base_seed = j.value("base_seed", std::uint64_t{0});
    for (const auto& r : j.at("recordings")) {
      ManifestEntry e;
      e.id = r.at("id").get<std::string>();
      e.seed = r.value("seed", std::uint64_t{0});
      if (r.contains("scenario")) e.scenario = r.at("scenario").get<synth::Scenario>();
      e.wav = r.at("wav").get<std::string>();
      e.annotations = r.at("annotations").get<std::string>();
      m.recordings.push_back(std::move(e));
    }
  } catch (const json::exception& ex) {
    throw DataError("manifest '" + path.string() + "': " + ex.what());
  }
  m.directory = path.parent_path();
  return m;
}

void write_manifest(const fs::path& path, const Manifest& m) {
  json recs = json::array();
  for (const auto& e : m.recordings) {
    recs.push_back(json{{"id", e.id},
                        {"seed", e.seed},
                        {"scenario", e.scenario},
                        {"wav", e.wav.generic_string()},
                        {"annotations", e.annotations.generic_string()}});
  }
  const json j{{"format_version", m.format_version},
               {"base_seed", m.base_seed},
               {"sample_rate_hz", audio::kModelSampleRate},
               {"recordings", recs}};
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest '" + path.string() + "'");
  out << j.dump(2) << '\n';
  if (!out) throw DataError("failed writing manifest '" + path.string() + "'");
}

audio::AnnotatedRecording load_recording(const Manifest& manifest, const ManifestEntry& entry) {
  audio::AnnotatedRecording rec;
  rec.id = entry.id;
  rec.clip = audio::read_wav(manifest.directory / entry.wav);
  const AnnotationMap ann = read_annotations(manifest.directory / entry.annotations);
  if (auto it = ann.find(entry.id); it != ann.end()) rec.events = it->second;
  audio::validate(rec);
  return rec;
}

std::vector<audio::AnnotatedRecording> load_all(const Manifest& manifest) {
  std::vector<audio::AnnotatedRecording> out;
  out.reserve(manifest.recordings.size());
  for (const auto& e : manifest.recordings) out.push_back(load_recording(manifest, e));
  return out;
}

namespace {

std::string recording_id(const std::string& prefix, std::size_t i) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%04zu", i);
  return prefix + buf;
}

}  // namespace

std::vector<audio::AnnotatedRecording> synthesize_corpus(std::uint64_t base_seed, std::size_t count,
                                                         double duration_s,
                                                         const std::string& id_prefix) {
  std::vector<audio::AnnotatedRecording> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint64_t seed = derive_seed(base_seed, "recording:" + std::to_string(i));
    out.push_back(synth::synthesize_recording(seed, synth::corpus_scenario(seed, duration_s),
                                              recording_id(id_prefix, i)));
  }
  return out;
}

Manifest generate_corpus(const fs::path& out_dir, std::uint64_t base_seed, std::size_t count,
                         double duration_s, const std::string& id_prefix) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw DataError("cannot create directory '" + out_dir.string() + "': " + ec.message());

  Manifest m;
  m.base_seed = base_seed;
  m.directory = out_dir;
  for (std::size_t i = 0; i < count; ++i) {
    ManifestEntry e;
    e.id = recording_id(id_prefix, i);
    e.seed = derive_seed(base_seed, "recording:" + std::to_string(i));
    e.scenario = synth::corpus_scenario(e.seed, duration_s);
    e.wav = e.id + ".wav";
    e.annotations = e.id + ".jsonl";
    const auto rec = synth::synthesize_recording(e.seed, e.scenario, e.id);
    audio::write_wav(out_dir / e.wav, rec.clip);
    write_annotations(out_dir / e.annotations, e.id, rec.events);
    m.recordings.push_back(std::move(e));
  }
  write_manifest(out_dir / "manifest.json", m);
  return m;
}

}  // namespace lsed::corpus
