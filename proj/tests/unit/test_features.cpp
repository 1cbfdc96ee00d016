#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "lsed/dsp.hpp"
#include "lsed/errors.hpp"
#include "lsed/feature_cache.hpp"
#include "lsed/features.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace lsed;
using namespace lsed::features;

namespace {

Matrix to_matrix(const std::vector<double>& v, std::size_t rows, std::size_t cols) {
  Matrix m(rows, cols);
  m.data() = v;
  return m;
}

audio::Window noise_window(std::uint64_t seed, double amp = 0.3) {
  return audio::Window{0.0, testutil::uniform(4000, seed, -amp, amp), "w"};
}

}  // namespace

TEST(FrameSignal, NinetyEightFramesPerSecond) {
  const auto frames = frame_signal(testutil::uniform(4000, 1), 4000);
  EXPECT_EQ(frames.rows(), 98u);
  EXPECT_EQ(frames.cols(), 100u);
}

TEST(FrameSignal, ConstantSignalYieldsHammingCurve) {
  const auto frames = frame_signal(std::vector<double>(4000, 1.0), 4000);
  const auto w = dsp::hamming(100);
  for (std::size_t r = 0; r < frames.rows(); ++r)
    for (std::size_t c = 0; c < 100; ++c) ASSERT_DOUBLE_EQ(frames(r, c), w[c]);
}

TEST(FrameSignal, FrameAsLongAsSignalGivesOneFrame) {
  EXPECT_EQ(frame_signal(std::vector<double>(4000, 1.0), 4000, 1.0, 0.01).rows(), 1u);
  EXPECT_THROW(frame_signal(std::vector<double>(50, 1.0), 4000), InvalidArgument);
}

TEST(Mel, HtkFormula) {
  EXPECT_NEAR(hz_to_mel(700.0), 781.17, 0.01);
  EXPECT_NEAR(hz_to_mel(700.0), 2595.0 * std::log10(2.0), 1e-12);
  for (double f : {0.0, 100.0, 1234.5, 2000.0}) EXPECT_NEAR(mel_to_hz(hz_to_mel(f)), f, 1e-9);
}

TEST(Mel, FilterCentersEquallySpacedOnMelScale) {
  const FeatureExtractor fx;
  const auto expected = oracle::mel_centers(26, 0.0, 2000.0);
  ASSERT_EQ(fx.filterbank().centers_hz().size(), 26u);
  for (std::size_t i = 0; i < 26; ++i) EXPECT_NEAR(fx.filterbank().centers_hz()[i], expected[i], 1e-9);
  EXPECT_THROW(MelFilterbank(26, 128, 4000, 0.0, 2500.0), InvalidArgument);
}

TEST(LogMel, SilentFrameHitsTheFloor) {
  const FeatureExtractor fx;
  const auto e = fx.log_mel_energies(std::vector<double>(100, 0.0));
  ASSERT_EQ(e.size(), 26u);
  for (double v : e) EXPECT_NEAR(v, std::log(1e-10), 1e-12);
  EXPECT_NEAR(std::log(1e-10), -23.026, 1e-3);
}

TEST(LogMel, ToneLandsInNearestFilter) {
  const FeatureExtractor fx;
  const auto centers = oracle::mel_centers(26, 0.0, 2000.0);
  for (double f : {300.0, 400.0, 1000.0, 1500.0}) {
    auto frame = testutil::sine(f, 4000, 100, 0.5);
    const auto w = dsp::hamming(100);
    for (std::size_t i = 0; i < 100; ++i) frame[i] *= w[i];
    const auto e = fx.log_mel_energies(frame);
    const auto got = std::max_element(e.begin(), e.end()) - e.begin();
    std::size_t nearest = 0;
    for (std::size_t i = 0; i < 26; ++i)
      if (std::abs(centers[i] - f) < std::abs(centers[nearest] - f)) nearest = i;
    EXPECT_EQ(static_cast<std::size_t>(got), nearest) << f;
  }
}

TEST(Mfcc, ConstantLogEnergiesGiveOnlyC0) {
  const auto c = dct2(std::vector<double>(26, 3.5), 13);
  ASSERT_EQ(c.size(), 13u);
  EXPECT_NEAR(c[0], 3.5 * std::sqrt(26.0), 1e-12);
  for (std::size_t k = 1; k < 13; ++k) EXPECT_NEAR(c[k], 0.0, 1e-12);
}

TEST(Mfcc, SilentFrame) {
  const FeatureExtractor fx;
  const auto c = fx.mfcc(std::vector<double>(100, 0.0));
  EXPECT_NEAR(c[0], std::log(1e-10) * std::sqrt(26.0), 1e-9);
  for (std::size_t k = 1; k < 13; ++k) EXPECT_NEAR(c[k], 0.0, 1e-9);
}

TEST(Mfcc, DctMatchesDirectSum) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto x = testutil::uniform(26, seed, -30, 5);
    const auto got = dct2(x, 13);
    const auto expected = oracle::dct2(x, 13);
    for (std::size_t k = 0; k < 13; ++k) EXPECT_NEAR(got[k], expected[k], 1e-9);
  }
  const FeatureExtractor fx;
  auto frame = testutil::uniform(100, 77);
  const auto e = fx.log_mel_energies(frame);
  const auto c = fx.mfcc(frame);
  const auto expected = oracle::dct2(e, 13);
  for (std::size_t k = 0; k < 13; ++k) EXPECT_NEAR(c[k], expected[k], 1e-9);
}

TEST(Mfcc, OrthonormalTransposeRecoversInput) {
  const auto x = testutil::uniform(26, 8, -20, 0);
  const auto back = oracle::idct2(dct2(x, 26));
  for (std::size_t i = 0; i < 26; ++i) EXPECT_NEAR(back[i], x[i], 1e-9);
}

TEST(Deltas, ConstantSequenceHasZeroDeltas) {
  const auto d = deltas(Matrix(10, 13, 4.2));
  for (double v : d.data()) EXPECT_EQ(v, 0.0);
}

TEST(Deltas, RampHasUnitSlopeInInterior) {
  Matrix m(12, 13);
  for (std::size_t t = 0; t < 12; ++t)
    for (std::size_t c = 0; c < 13; ++c) m(t, c) = static_cast<double>(t);
  const auto d = deltas(m);
  for (std::size_t t = 2; t < 10; ++t)
    for (std::size_t c = 0; c < 13; ++c) EXPECT_NEAR(d(t, c), 1.0, 1e-12);
}

TEST(Deltas, MatchDirectRegressionWithEdgeReplication) {
  const auto v = testutil::uniform(130, 21);
  const auto d = deltas(to_matrix(v, 10, 13), 2);
  const auto expected = oracle::deltas(v, 10, 13, 2);
  for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_NEAR(d.data()[i], expected[i], 1e-12);
  const auto one = deltas(to_matrix(testutil::uniform(13, 2), 1, 13));
  for (double x : one.data()) EXPECT_EQ(x, 0.0);
}

TEST(Assemble, ShapeRangeAndLayout) {
  const auto fw = assemble_features(noise_window(3));
  ASSERT_EQ(fw.matrix.rows(), 98u);
  ASSERT_EQ(fw.matrix.cols(), 65u);
  for (double v : fw.matrix.data()) {
    ASSERT_TRUE(std::isfinite(v));
    ASSERT_GE(v, 0.0);
    ASSERT_LE(v, 1.0);
  }
}

TEST(Assemble, ColumnsFollowStaticDeltaDeltaDeltaLogMelOrder) {
  const auto win = noise_window(4);
  const FeatureExtractor fx;
  const auto frames = frame_signal(win.samples, 4000);
  std::vector<double> mf, lm;
  for (std::size_t r = 0; r < frames.rows(); ++r) {
    const auto c = fx.mfcc(frames.row(r));
    const auto e = fx.log_mel_energies(frames.row(r));
    mf.insert(mf.end(), c.begin(), c.end());
    lm.insert(lm.end(), e.begin(), e.end());
  }
  const auto d1 = oracle::deltas(mf, 98, 13, 2);
  const auto d2 = oracle::deltas(d1, 98, 13, 2);
  auto norm_col = [](std::vector<double> col) {
    const auto [lo, hi] = std::minmax_element(col.begin(), col.end());
    const double a = *lo, b = *hi;
    for (auto& v : col) v = b > a ? (v - a) / (b - a) : 0.0;
    return col;
  };
  const auto fw = fx.assemble(win);
  auto check = [&](const std::vector<double>& src, std::size_t width, std::size_t offset) {
    for (std::size_t c = 0; c < width; ++c) {
      std::vector<double> col(98);
      for (std::size_t r = 0; r < 98; ++r) col[r] = src[r * width + c];
      const auto n = norm_col(col);
      for (std::size_t r = 0; r < 98; ++r) ASSERT_NEAR(fw.matrix(r, offset + c), n[r], 1e-9) << offset + c;
    }
  };
  check(mf, 13, kStaticBegin);
  check(d1, 13, kDeltaBegin);
  check(d2, 13, kDeltaDeltaBegin);
  check(lm, 26, kLogMelBegin);
}

TEST(Assemble, ConstantColumnNormalisesToZero) {
  Matrix m(5, 2);
  for (std::size_t r = 0; r < 5; ++r) {
    m(r, 0) = 7.0;
    m(r, 1) = static_cast<double>(r);
  }
  minmax_normalize_columns(m);
  for (std::size_t r = 0; r < 5; ++r) {
    EXPECT_EQ(m(r, 0), 0.0);
    EXPECT_DOUBLE_EQ(m(r, 1), r / 4.0);
  }
}

TEST(Assemble, SilenceIsFiniteAndDeterministic) {
  const audio::Window silent{0.0, std::vector<double>(4000, 0.0), "s"};
  const auto a = assemble_features(silent), b = assemble_features(silent);
  EXPECT_EQ(a.matrix, b.matrix);
  EXPECT_EQ(a.matrix.rows(), 98u);
  for (double v : a.matrix.data()) EXPECT_TRUE(std::isfinite(v));
}

TEST(Assemble, NormalisationIsIdempotent) {
  auto fw = assemble_features(noise_window(5));
  const auto before = fw.matrix;
  minmax_normalize_columns(fw.matrix);
  for (std::size_t i = 0; i < before.size(); ++i) EXPECT_NEAR(fw.matrix.data()[i], before.data()[i], 1e-15);
}

TEST(Assemble, ExtremeInputsStayFinite) {
  for (double amp : {1e-12, 1.0}) {
    const auto fw = assemble_features(noise_window(6, amp));
    for (double v : fw.matrix.data()) ASSERT_TRUE(std::isfinite(v));
  }
}

TEST(Augment, DisabledMasksLeaveInputUntouched) {
  const auto fw = assemble_features(noise_window(7));
  AugmentConfig cfg;
  cfg.apply_prob = 0.0;
  Rng rng(1);
  EXPECT_EQ(spec_augment(fw, cfg, rng).matrix, fw.matrix);
}

TEST(Augment, WidthEightAtColumnZero) {
  const auto fw = assemble_features(noise_window(8));
  MaskPlan plan;
  plan.freq = MaskBand{0, 8};
  const auto out = apply_masks(fw, plan);
  for (std::size_t r = 0; r < 98; ++r)
    for (std::size_t c = 0; c < 65; ++c) ASSERT_EQ(out.matrix(r, c), c < 8 ? 0.0 : fw.matrix(r, c));
  plan = {};
  plan.time = MaskBand{90, 8};
  const auto t = apply_masks(fw, plan);
  for (std::size_t r = 0; r < 98; ++r)
    for (std::size_t c = 0; c < 65; ++c) ASSERT_EQ(t.matrix(r, c), r >= 90 ? 0.0 : fw.matrix(r, c));
}

TEST(Augment, DrawnBandsRespectRangesAndLeaveOriginalIntact) {
  const auto fw = assemble_features(noise_window(9));
  const auto copy = fw.matrix;
  AugmentConfig cfg;
  Rng rng(2);
  std::size_t with_time = 0;
  const int trials = 10000;
  for (int i = 0; i < trials; ++i) {
    const auto plan = draw_mask_plan(cfg, 98, 65, rng);
    if (plan.freq) {
      EXPECT_GE(plan.freq->width, 2u);
      EXPECT_LE(plan.freq->width, 8u);
      EXPECT_LE(plan.freq->start + plan.freq->width, 65u);
    }
    if (plan.time) {
      ++with_time;
      EXPECT_GE(plan.time->width, 5u);
      EXPECT_LE(plan.time->width, 10u);
      EXPECT_LE(plan.time->start + plan.time->width, 98u);
    }
  }
  const double frac = static_cast<double>(with_time) / trials;
  EXPECT_GE(frac, 0.48);
  EXPECT_LE(frac, 0.52);
  Rng rng2(3);
  (void)spec_augment(fw, cfg, rng2);
  EXPECT_EQ(fw.matrix, copy);
}

TEST(Augment, SameSeedSameMasks) {
  const auto fw = assemble_features(noise_window(10));
  AugmentConfig cfg;
  Rng a(5), b(5);
  for (int i = 0; i < 20; ++i) EXPECT_EQ(spec_augment(fw, cfg, a).matrix, spec_augment(fw, cfg, b).matrix);
}

TEST(Augment, InvalidConfigRejected) {
  AugmentConfig cfg;
  cfg.apply_prob = 1.5;
  EXPECT_THROW(cfg.validate(), InvalidArgument);
  cfg = {};
  cfg.freq_width_min = 9;
  EXPECT_THROW(cfg.validate(), InvalidArgument);
}

TEST(FeatureCache, RoundTripAndParameterInvalidation) {
  testutil::TempDir dir("cache");
  std::vector<FeatureWindow> windows;
  for (std::uint64_t s = 0; s < 3; ++s) {
    auto fw = assemble_features(noise_window(s));
    fw.start_s = 0.5 * static_cast<double>(s);
    fw.source_id = "rec";
    windows.push_back(fw);
  }
  const nlohmann::json params{{"k", 1}};
  save_feature_cache(dir / "rec.feat", windows, params);
  const auto back = load_feature_cache(dir / "rec.feat", params);
  ASSERT_TRUE(back.has_value());
  ASSERT_EQ(back->size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ((*back)[i].matrix, windows[i].matrix);
    EXPECT_EQ((*back)[i].start_s, windows[i].start_s);
    EXPECT_EQ((*back)[i].source_id, "rec");
  }
  EXPECT_FALSE(load_feature_cache(dir / "rec.feat", nlohmann::json{{"k", 2}}).has_value());
  EXPECT_FALSE(load_feature_cache(dir / "none.feat", params).has_value());
  auto bytes = testutil::read_file(dir / "rec.feat");
  bytes.resize(bytes.size() / 2);
  testutil::write_file(dir / "rec.feat", bytes);
  EXPECT_FALSE(load_feature_cache(dir / "rec.feat", params).has_value());
}
