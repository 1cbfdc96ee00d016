#include <gtest/gtest.h>

#include <cmath>

#include "lsed/errors.hpp"
#include "lsed/grad_check.hpp"
#include "lsed/model.hpp"
#include "lsed/ops.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace lsed;
using namespace lsed::model;
using ad::Shape;
using ad::Tape;
using ad::Tensor;
using ad::Var;

namespace {

ModelConfig small_config(int branches = 2, int layers = 2, int filters = 4) {
  ModelConfig c;
  c.branches = branches;
  c.layers_per_branch = layers;
  c.filters = filters;
  c.dilation_bases.clear();
  for (int b = 0; b < branches; ++b) c.dilation_bases.push_back(b + 2);
  c.classifier_hidden = {6, 1};
  c.init_seed = 11;
  return c;
}

features::FeatureWindow random_window(std::size_t frames, std::uint64_t seed) {
  features::FeatureWindow w;
  w.matrix = Matrix(frames, features::kFeatureDim);
  w.matrix.data() = testutil::uniform(w.matrix.size(), seed);
  return w;
}

// Independent forward pass built only from the naive convolution loop.
double oracle_probability(const MultiBranchTCN& m, const features::FeatureWindow& w) {
  const auto& c = m.config();
  const std::size_t T = w.frames(), k = static_cast<std::size_t>(c.filters);
  std::vector<double> pooled(k, 0.0);
  for (const auto& br : m.branches()) {
    auto h = oracle::conv1d(w.matrix.data(), 1, T, features::kFeatureDim, br.proj_w.values(), 1, k, br.proj_b.values(), 1);
    for (const auto& layer : br.layers) {
      auto r = oracle::conv1d(h, 1, T, k, layer.w1.values(), static_cast<std::size_t>(c.kernel), k, layer.b1.values(),
                              layer.dilation);
      for (auto& v : r) v = std::max(v, 0.0);
      const auto p = oracle::conv1d(r, 1, T, k, layer.w2.values(), 1, k, layer.b2.values(), 1);
      for (std::size_t i = 0; i < h.size(); ++i) h[i] += p[i];
    }
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t o = 0; o < k; ++o) pooled[o] += h[t * k + o] / static_cast<double>(T * m.branches().size());
  }
  std::vector<double> a = pooled;
  for (std::size_t i = 0; i < m.classifier().size(); ++i) {
    const auto& d = m.classifier()[i];
    const std::size_t in = d.w.dim(0), out = d.w.dim(1);
    std::vector<double> z(d.b.values());
    for (std::size_t o = 0; o < out; ++o)
      for (std::size_t j = 0; j < in; ++j) z[o] += a[j] * d.w[j * out + o];
    if (i + 1 < m.classifier().size())
      for (auto& v : z) v = std::max(v, 0.0);
    a = z;
  }
  return oracle::sigmoid(a[0]);
}

std::size_t param_formula(int B, int L, int k, int kernel, int input, const std::vector<int>& head, int pooled) {
  std::size_t n = 0;
  const auto per_layer = static_cast<std::size_t>(kernel * k * k + k + k * k + k);
  n += static_cast<std::size_t>(B) * (static_cast<std::size_t>(input * k + k) + static_cast<std::size_t>(L) * per_layer);
  int in = pooled;
  for (int h : head) {
    n += static_cast<std::size_t>(in * h + h);
    in = h;
  }
  return n;
}

}  // namespace

TEST(Dilation, ScheduleAndReceptiveRadius) {
  EXPECT_EQ(dilation_schedule(2, 3), (std::vector<int>{1, 2, 4}));
  EXPECT_EQ(dilation_schedule(3, 3), (std::vector<int>{1, 3, 9}));
  EXPECT_EQ(dilation_schedule(4, 3), (std::vector<int>{1, 4, 16}));
  EXPECT_EQ(receptive_radius(2, 3), 7);
  EXPECT_EQ(receptive_radius(3, 3), 13);
  EXPECT_EQ(receptive_radius(4, 3), 21);
  EXPECT_EQ(receptive_radius(2, 1, 5), 2);
}

TEST(Dilation, ImpulseSupportMatchesRadius) {
  // The gradient of one output frame w.r.t. the input is non-zero exactly
  // within the receptive field.
  auto cfg = ModelConfig{};
  cfg.filters = 6;
  cfg.init_seed = 5;
  const auto init = MultiBranchTCN::init(cfg);
  // Large dilated-conv biases keep every ReLU active, so no path is cut.
  auto branches = init.branches();
  for (auto& br : branches)
    for (auto& layer : br.layers) layer.b1 = Tensor({6}, 100.0);
  const MultiBranchTCN m(cfg, branches, init.classifier());
  const std::size_t T = 61, centre = 30;
  for (std::size_t b = 0; b < 3; ++b) {
    Tape tape;
    const auto x = tape.variable(Tensor({1, T, features::kFeatureDim}, testutil::uniform(T * 65, 3 + b, 0.5, 1.0)));
    const auto bound = bind(tape, m.branches()[b], false);
    const auto out = branch_forward(x, bound).output;
    Tensor sel({1, T, 6});
    for (std::size_t o = 0; o < 6; ++o) sel[centre * 6 + o] = 1.0;
    tape.backward(ad::sum(ad::mul(out, tape.constant(sel))));
    const auto g = tape.grad(x);
    long lo = 1000, hi = -1000;
    for (std::size_t t = 0; t < T; ++t) {
      double mag = 0;
      for (std::size_t f = 0; f < 65; ++f) mag += std::abs(g[t * 65 + f]);
      if (mag > 0) {
        lo = std::min(lo, static_cast<long>(t));
        hi = std::max(hi, static_cast<long>(t));
      }
    }
    const int radius = receptive_radius(cfg.dilation_bases[b], 3);
    EXPECT_EQ(centre - lo, radius) << "branch " << b;
    EXPECT_EQ(hi - static_cast<long>(centre), radius) << "branch " << b;
  }
}

TEST(Config, ValidationRejectsInconsistentShapes) {
  EXPECT_NO_THROW(ModelConfig{}.validate());
  auto c = ModelConfig{};
  c.dilation_bases = {2, 3};
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = ModelConfig{};
  c.kernel = 4;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = ModelConfig{};
  c.classifier_hidden = {80, 2};
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = ModelConfig{};
  c.filters = 0;
  EXPECT_THROW(c.validate(), InvalidArgument);
  EXPECT_THROW(parse_fusion_mode("attention"), InvalidArgument);
  EXPECT_EQ(parse_fusion_mode(to_string(FusionMode::FeatureConcat)), FusionMode::FeatureConcat);
}

TEST(Config, JsonRoundTrip) {
  auto c = small_config(3, 2, 5);
  c.fusion = FusionMode::FeatureConcat;
  c.init_seed = 0xFFFFFFFFFFFFull;
  nlohmann::json j = c;
  EXPECT_EQ(j.get<ModelConfig>(), c);
}

TEST(ParamCount, DefaultAndSingleBranch) {
  const ModelConfig c;
  EXPECT_EQ(param_formula(3, 3, 80, 3, 65, {80, 32, 1}, 80), 256785u);
  EXPECT_EQ(MultiBranchTCN::init(c).param_count(), 256785u);
  auto one = c;
  one.branches = 1;
  one.dilation_bases = {2};
  EXPECT_EQ(MultiBranchTCN::init(one).param_count(), 91665u);
  auto fc = c;
  fc.fusion = FusionMode::FeatureConcat;
  EXPECT_EQ(MultiBranchTCN::init(fc).param_count(), param_formula(3, 3, 80, 3, 65, {80, 32, 1}, 240));
}

TEST(Init, GlorotBoundsZeroBiasAndDeterminism) {
  const auto c = small_config(3, 2, 5);
  const auto a = MultiBranchTCN::init(c), b = MultiBranchTCN::init(c);
  auto c2 = c;
  c2.init_seed = 12;
  const auto other = MultiBranchTCN::init(c2);
  const auto pa = a.named_parameters(), pb = b.named_parameters(), po = other.named_parameters();
  ASSERT_EQ(pa.size(), 3u * (2 + 2 * 4) + 2 * 2);
  EXPECT_EQ(pa.front().first, "branch0.proj.weight");
  EXPECT_EQ(pa[2].first, "branch0.layer0.dilated.weight");
  EXPECT_EQ(pa.back().first, "classifier.1.bias");
  bool any_diff = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(*pa[i].second, *pb[i].second) << pa[i].first;
    const auto& t = *pa[i].second;
    if (pa[i].first.ends_with("bias")) {
      for (double v : t.values()) EXPECT_EQ(v, 0.0);
      continue;
    }
    any_diff |= !(t == *po[i].second);
    // fan_in/out: conv [K, cin, cout] -> K*cin, K*cout; dense [in, out].
    const double K = t.rank() == 3 ? static_cast<double>(t.dim(0)) : 1.0;
    const double fin = K * static_cast<double>(t.dim(t.rank() - 2)), fout = K * static_cast<double>(t.dim(t.rank() - 1));
    const double limit = std::sqrt(6.0 / (fin + fout));
    double peak = 0;
    for (double v : t.values()) peak = std::max(peak, std::abs(v));
    EXPECT_LE(peak, limit) << pa[i].first;
    EXPECT_GT(peak, 0.5 * limit) << pa[i].first;
  }
  EXPECT_TRUE(any_diff);
}

TEST(Forward, MatchesNaiveOracle) {
  const auto m = MultiBranchTCN::init(small_config(3, 3, 5));
  std::vector<features::FeatureWindow> windows;
  for (std::uint64_t s = 0; s < 5; ++s) windows.push_back(random_window(29, 100 + s));
  const auto probs = m.predict(windows);
  for (std::size_t i = 0; i < windows.size(); ++i) EXPECT_NEAR(probs[i], oracle_probability(m, windows[i]), 1e-12);
}

TEST(Forward, IndependentOfBatchingAndConsistentWithLogits) {
  const auto m = MultiBranchTCN::init(small_config());
  std::vector<features::FeatureWindow> windows;
  for (std::uint64_t s = 0; s < 7; ++s) windows.push_back(random_window(s % 2 ? 29 : 17, s));
  const auto a = m.predict(windows, 64), b = m.predict(windows, 1), c = m.predict(windows, 3);
  const auto z = m.logits(windows);
  for (std::size_t i = 0; i < windows.size(); ++i) {
    EXPECT_EQ(a[i], b[i]);
    EXPECT_EQ(a[i], c[i]);
    EXPECT_NEAR(a[i], oracle::sigmoid(z[i]), 1e-15);
  }
}

TEST(Fusion, TimeConcatWeightsBranchesByLength) {
  Tape tape({.record = false});
  const auto a = tape.constant(Tensor({1, 3, 2}, {1, 1, 1, 1, 1, 1}));
  const auto b = tape.constant(Tensor({1, 5, 2}, std::vector<double>(10, 9.0)));
  const Var parts[] = {a, b};
  const auto f = fuse(parts, FusionMode::TimeConcat);
  ASSERT_EQ(f.shape(), (Shape{1, 2}));
  EXPECT_NEAR(f.value()[0], 3.0 / 8.0 * 1.0 + 5.0 / 8.0 * 9.0, 1e-15);
}

TEST(Fusion, EqualLengthTimeConcatIsLinearMeanOfBranchMeans) {
  Tape tape({.record = false});
  const auto A = Tensor({2, 4, 3}, testutil::uniform(24, 1)), Bt = Tensor({2, 4, 3}, testutil::uniform(24, 2));
  const Var parts[] = {tape.constant(A), tape.constant(Bt)};
  const auto f = fuse(parts, FusionMode::TimeConcat);
  const auto fc = fuse(parts, FusionMode::FeatureConcat);
  ASSERT_EQ(fc.shape(), (Shape{2, 6}));
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t o = 0; o < 3; ++o) {
      double ma = 0, mb = 0;
      for (std::size_t t = 0; t < 4; ++t) {
        ma += A[(n * 4 + t) * 3 + o] / 4;
        mb += Bt[(n * 4 + t) * 3 + o] / 4;
      }
      EXPECT_NEAR(f.value()[n * 3 + o], (ma + mb) / 2, 1e-15);
      EXPECT_NEAR(fc.value()[n * 6 + o], ma, 1e-15);
      EXPECT_NEAR(fc.value()[n * 6 + 3 + o], mb, 1e-15);
    }
}

TEST(Forward, ParameterGradientsPassFiniteDifferences) {
  auto cfg = small_config(2, 2, 3);
  const auto m = MultiBranchTCN::init(cfg);
  std::vector<Tensor> params;
  for (const auto& [name, t] : m.named_parameters()) params.push_back(*t);
  std::vector<features::FeatureWindow> windows{random_window(9, 1), random_window(9, 2)};
  const auto x = stack_windows(windows);
  const Tensor y({2}, {1.0, 0.0});
  auto f = [&](Tape& tape, std::span<const Var> v) {
    // Parameters arrive in named_parameters() order.
    std::vector<BoundBranch> branches;
    std::size_t p = 0;
    for (const auto& br : m.branches()) {
      BoundBranch bb{v[p], v[p + 1], {}};
      p += 2;
      for (const auto& layer : br.layers) {
        bb.layers.push_back({v[p], v[p + 1], v[p + 2], v[p + 3], layer.dilation});
        p += 4;
      }
      branches.push_back(bb);
    }
    std::vector<BoundDense> head;
    for (; p < v.size(); p += 2) head.push_back({v[p], v[p + 1]});
    const auto input = tape.constant(x);
    std::vector<Var> outs;
    for (const auto& bb : branches) outs.push_back(branch_forward(input, bb).output);
    return ad::bce(classify(fuse(outs, cfg.fusion), head), tape.constant(y));
  };
  const auto r = ad::grad_check(f, params);
  EXPECT_GT(r.checked, 100u);
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst_input << "[" << r.worst_index << "]";
}

TEST(Construct, RejectsMismatchedParameters) {
  const auto cfg = small_config();
  const auto m = MultiBranchTCN::init(cfg);
  auto branches = m.branches();
  branches[1].layers[0].w1 = Tensor({3, 4, 5});
  EXPECT_THROW(MultiBranchTCN(cfg, branches, m.classifier()), DataError);
  auto head = m.classifier();
  head.pop_back();
  EXPECT_THROW(MultiBranchTCN(cfg, m.branches(), head), DataError);
  EXPECT_NO_THROW(MultiBranchTCN(cfg, m.branches(), m.classifier()));
}

TEST(StackWindows, LayoutAndMismatch) {
  std::vector<features::FeatureWindow> w{random_window(4, 1), random_window(4, 2)};
  const auto t = stack_windows(w);
  EXPECT_EQ(t.shape(), (Shape{2, 4, 65}));
  EXPECT_EQ(t[4 * 65 + 3], w[1].matrix(0, 3));
  w.push_back(random_window(5, 3));
  EXPECT_THROW(stack_windows(w), Error);
}
