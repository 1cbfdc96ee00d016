#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "lsed/corpus.hpp"
#include "lsed/errors.hpp"
#include "lsed/synth.hpp"
#include "test_util.hpp"

using namespace lsed;
using testutil::TempDir;

namespace {

std::vector<audio::EventInterval> with_label(const audio::AnnotatedRecording& r, const std::string& label) {
  std::vector<audio::EventInterval> out;
  for (const auto& e : r.events)
    if (e.label == label) out.push_back(e);
  return out;
}

double rms(const std::vector<double>& x, double a_s, double b_s, int fs) {
  const auto lo = static_cast<std::size_t>(std::max(0.0, a_s) * fs);
  const auto hi = std::min(x.size(), static_cast<std::size_t>(b_s * fs));
  double acc = 0.0;
  for (std::size_t i = lo; i < hi; ++i) acc += x[i] * x[i];
  return std::sqrt(acc / static_cast<double>(hi - lo));
}

}  // namespace

TEST(Synth, FifteenBreathsPerMinuteOverTwentySeconds) {
  synth::Scenario s;
  s.duration_s = 20.0;
  s.breaths_per_min = 15.0;
  s.hum_amplitude = 0.0;
  const auto rec = synth::synthesize_recording(7, s, "r7");
  EXPECT_EQ(rec.clip.sample_rate_hz, 4000);
  EXPECT_EQ(rec.clip.samples.size(), 80000u);
  EXPECT_EQ(with_label(rec, "inhalation").size(), 5u);
  EXPECT_EQ(with_label(rec, "exhalation").size(), 5u);
  EXPECT_NO_THROW(audio::validate(rec));
}

TEST(Synth, BoundariesMatchEnvelopeOnsetsWithin10ms) {
  synth::Scenario s;
  s.hum_amplitude = 0.0;
  const auto rec = synth::synthesize_recording(7, s, "r7");
  const auto& x = rec.clip.samples;
  const double floor = s.noise_rms;
  for (const auto& e : rec.events) {
    if (e.label == "inhalation") {
      EXPECT_LT(rms(x, e.start_s - 0.030, e.start_s - 0.010, 4000), 2.0 * floor) << e.start_s;
      EXPECT_GT(rms(x, e.start_s + 0.010, e.start_s + 0.030, 4000), 5.0 * floor) << e.start_s;
    }
    if (e.label == "exhalation") {
      EXPECT_GT(rms(x, e.end_s - 0.030, e.end_s - 0.010, 4000), 5.0 * floor) << e.end_s;
      EXPECT_LT(rms(x, e.end_s + 0.010, e.end_s + 0.030, 4000), 2.0 * floor) << e.end_s;
    }
  }
}

TEST(Synth, SameSeedIsBitIdentical) {
  const auto s = synth::corpus_scenario(3, 20.0);
  const auto a = synth::synthesize_recording(42, s), b = synth::synthesize_recording(42, s);
  EXPECT_EQ(a.clip.samples, b.clip.samples);
  EXPECT_EQ(a.events, b.events);
  const auto c = synth::synthesize_recording(43, s);
  EXPECT_NE(a.clip.samples, c.clip.samples);
}

TEST(Synth, WheezeProbabilityOneMarksEveryInhalation) {
  synth::Scenario s;
  s.wheeze_prob = 1.0;
  const auto rec = synth::synthesize_recording(9, s);
  const auto inh = with_label(rec, "inhalation");
  const auto wz = with_label(rec, "wheeze");
  ASSERT_EQ(inh.size(), wz.size());
  for (const auto& i : inh) {
    const bool covered = std::any_of(wz.begin(), wz.end(), [&](const auto& w) {
      return w.start_s >= i.start_s && w.end_s <= i.end_s;
    });
    EXPECT_TRUE(covered) << i.start_s;
  }
}

TEST(Synth, CracklesAreShortAndInsideInhalations) {
  synth::Scenario s;
  s.crackle_rate_hz = 5.0;
  const auto rec = synth::synthesize_recording(10, s);
  const auto inh = with_label(rec, "inhalation");
  const auto cr = with_label(rec, "crackle");
  ASSERT_FALSE(cr.empty());
  for (const auto& c : cr) {
    EXPECT_GE(c.duration_s(), 0.005 - 1e-9);
    EXPECT_LE(c.duration_s(), 0.015 + 1e-9);
    EXPECT_TRUE(std::any_of(inh.begin(), inh.end(), [&](const auto& i) {
      return c.start_s >= i.start_s && c.end_s <= i.end_s;
    }));
  }
}

TEST(Synth, SamplesStayWithinUnitRange) {
  synth::Scenario s = synth::corpus_scenario(1, 20.0);
  s.breath_amplitude = 2.0;
  const auto rec = synth::synthesize_recording(1, s);
  for (double v : rec.clip.samples) ASSERT_LE(std::abs(v), 1.0);
}

TEST(Synth, ZeroDurationRejected) {
  synth::Scenario s;
  s.duration_s = 0.0;
  EXPECT_THROW(synth::synthesize_recording(1, s), InvalidArgument);
}

TEST(Corpus, AnnotationsRoundTrip) {
  TempDir dir("ann");
  corpus::AnnotationMap m{{"a", {{0.25, 1.5, "inhalation"}, {1.5, 2.0, "exhalation"}}}, {"b", {{0.0, 0.1, "crackle"}}}};
  corpus::write_annotations(dir / "x.jsonl", m);
  EXPECT_EQ(corpus::read_annotations(dir / "x.jsonl"), m);
}

TEST(Corpus, MalformedAnnotationLineNamesTheProblem) {
  TempDir dir("ann");
  testutil::write_file(dir / "bad.jsonl", "{\"recording_id\":\"a\",\"start_s\":2,\"end_s\":1,\"label\":\"wheeze\"}\n");
  EXPECT_THROW(corpus::read_annotations(dir / "bad.jsonl"), DataError);
  testutil::write_file(dir / "bad2.jsonl", "not json\n");
  EXPECT_THROW(corpus::read_annotations(dir / "bad2.jsonl"), DataError);
}

TEST(Corpus, GenerationIsDeterministicAndLoadable) {
  TempDir a("corpus"), b("corpus");
  const auto m = corpus::generate_corpus(a.path(), 5, 3, 4.0);
  corpus::generate_corpus(b.path(), 5, 3, 4.0);
  EXPECT_EQ(testutil::read_file(a / "manifest.json"), testutil::read_file(b / "manifest.json"));
  EXPECT_EQ(testutil::read_file(a / "rec0001.wav"), testutil::read_file(b / "rec0001.wav"));

  const auto loaded = corpus::read_manifest(a / "manifest.json");
  ASSERT_EQ(loaded.recordings.size(), 3u);
  EXPECT_EQ(loaded.base_seed, 5u);
  EXPECT_EQ(loaded.recordings[2].id, "rec0002");
  EXPECT_EQ(loaded.recordings[2].scenario, m.recordings[2].scenario);

  const auto recs = corpus::load_all(loaded);
  const auto mem = corpus::synthesize_corpus(5, 3, 4.0);
  ASSERT_EQ(recs.size(), mem.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    EXPECT_EQ(recs[i].id, mem[i].id);
    EXPECT_EQ(recs[i].events, mem[i].events);
    ASSERT_EQ(recs[i].clip.samples.size(), mem[i].clip.samples.size());
    for (std::size_t j = 0; j < mem[i].clip.samples.size(); ++j) {
      ASSERT_NEAR(recs[i].clip.samples[j], mem[i].clip.samples[j], 1.0 / 32768);
    }
  }
}

TEST(Corpus, MissingManifestNamesThePath) {
  try {
    corpus::read_manifest("/nonexistent/dir/manifest.json");
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/dir/manifest.json"), std::string::npos);
  }
}
