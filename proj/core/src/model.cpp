#include "lsed/model.hpp"

#include <cmath>
#include <map>
#include <random>

#include "lsed/errors.hpp"
#include "lsed/ops.hpp"
#include "lsed/random.hpp"

namespace lsed::model {

using ad::Shape;
using ad::Tape;
using ad::Tensor;
using ad::Var;

std::string_view to_string(FusionMode mode) {
  return mode == FusionMode::TimeConcat ? "time_concat" : "feature_concat";
}

FusionMode parse_fusion_mode(std::string_view text) {
  if (text == "time_concat") return FusionMode::TimeConcat;
  if (text == "feature_concat") return FusionMode::FeatureConcat;
  throw InvalidArgument("unknown fusion mode '" + std::string(text) + "' (expected time_concat|feature_concat)");
}

void ModelConfig::validate() const {
  if (branches < 1) throw InvalidArgument("model: branches must be >= 1");
  if (static_cast<std::size_t>(branches) != dilation_bases.size()) {
    throw InvalidArgument("model: " + std::to_string(branches) + " branches but " +
                          std::to_string(dilation_bases.size()) + " dilation bases");
  }
  for (int b : dilation_bases) {
    if (b < 1) throw InvalidArgument("model: dilation bases must be >= 1");
  }
  if (layers_per_branch < 1) throw InvalidArgument("model: layers_per_branch must be >= 1");
  if (filters < 1) throw InvalidArgument("model: filters must be >= 1");
  if (kernel < 1 || kernel % 2 == 0) throw InvalidArgument("model: kernel must be odd and >= 1");
  if (input_dim < 1) throw InvalidArgument("model: input_dim must be >= 1");
  if (classifier_hidden.empty() || classifier_hidden.back() != 1) {
    throw InvalidArgument("model: classifier_hidden must end with 1");
  }
  for (int h : classifier_hidden) {
    if (h < 1) throw InvalidArgument("model: classifier widths must be >= 1");
  }
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"branches", c.branches},
                     {"layers_per_branch", c.layers_per_branch},
                     {"filters", c.filters},
                     {"kernel", c.kernel},
                     {"dilation_bases", c.dilation_bases},
                     {"classifier_hidden", c.classifier_hidden},
                     {"fusion_mode", std::string(to_string(c.fusion))},
                     {"input_dim", c.input_dim},
                     {"init_seed", c.init_seed}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  c.branches = j.at("branches").get<int>();
  c.layers_per_branch = j.at("layers_per_branch").get<int>();
  c.filters = j.at("filters").get<int>();
  c.kernel = j.at("kernel").get<int>();
  c.dilation_bases = j.at("dilation_bases").get<std::vector<int>>();
  c.classifier_hidden = j.at("classifier_hidden").get<std::vector<int>>();
  c.fusion = parse_fusion_mode(j.at("fusion_mode").get<std::string>());
  c.input_dim = j.at("input_dim").get<int>();
  c.init_seed = j.at("init_seed").get<std::uint64_t>();
}

std::vector<int> dilation_schedule(int base, int layers) {
  if (base < 1 || layers < 1) throw InvalidArgument("dilation_schedule: base and layers must be >= 1");
  std::vector<int> out;
  int d = 1;
  for (int l = 0; l < layers; ++l) {
    out.push_back(d);
    d *= base;
  }
  return out;
}

int receptive_radius(int base, int layers, int kernel) {
  int r = 0;
  for (int d : dilation_schedule(base, layers)) r += d * (kernel - 1) / 2;
  return r;
}

namespace {

Var bind_tensor(Tape& tape, const Tensor& t, bool track) {
  return track ? tape.variable(t) : tape.constant(t);
}

}  // namespace

BoundLayer bind(Tape& tape, const ResidualDilatedLayer& layer, bool track) {
  return BoundLayer{bind_tensor(tape, layer.w1, track), bind_tensor(tape, layer.b1, track),
                    bind_tensor(tape, layer.w2, track), bind_tensor(tape, layer.b2, track), layer.dilation};
}

BoundBranch bind(Tape& tape, const BranchEncoder& branch, bool track) {
  BoundBranch out{bind_tensor(tape, branch.proj_w, track), bind_tensor(tape, branch.proj_b, track), {}};
  for (const auto& l : branch.layers) out.layers.push_back(bind(tape, l, track));
  return out;
}

BoundDense bind(Tape& tape, const DenseLayer& dense, bool track) {
  return BoundDense{bind_tensor(tape, dense.w, track), bind_tensor(tape, dense.b, track)};
}

Var residual_layer_forward(Var h_prev, const BoundLayer& layer) {
  const Var hidden = ad::relu(ad::conv1d(h_prev, layer.w1, layer.b1, layer.dilation));
  return ad::add(h_prev, ad::conv1d(hidden, layer.w2, layer.b2, 1));
}

BranchTrace branch_forward(Var input, const BoundBranch& branch, std::size_t max_layers) {
  const Shape& in = input.shape();
  const Shape& pw = branch.proj_w.shape();
  if (in.size() != 3 || in[2] != pw[1]) {
    throw InvalidArgument("branch_forward: expected input [batch, time, " + std::to_string(pw[1]) + "], got " +
                          ad::to_string(in));
  }
  BranchTrace trace;
  trace.projected = ad::conv1d(input, branch.proj_w, branch.proj_b, 1);
  Var h = trace.projected;
  for (std::size_t l = 0; l < branch.layers.size() && l < max_layers; ++l) {
    h = residual_layer_forward(h, branch.layers[l]);
    trace.layer_outputs.push_back(h);
  }
  trace.output = h;
  return trace;
}

Var fuse(std::span<const Var> outputs, FusionMode mode) {
  if (outputs.empty()) throw InvalidArgument("fuse: no branch outputs");
  for (Var v : outputs) {
    if (v.shape().size() != 3) throw InvalidArgument("fuse: branch outputs must be [batch, time, k]");
  }
  if (mode == FusionMode::TimeConcat) {
    return ad::mean(ad::concat(outputs, 1), 1);
  }
  return ad::mean(ad::concat(outputs, 2), 1);
}

Var classifier_logits(Var pooled, std::span<const BoundDense> layers) {
  if (layers.empty()) throw InvalidArgument("classifier: no layers");
  Var h = pooled;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = ad::affine(h, layers[i].w, layers[i].b);
    if (i + 1 < layers.size()) h = ad::relu(h);
  }
  if (h.shape().size() != 2 || h.shape()[1] != 1) throw InvalidArgument("classifier: final layer must have width 1");
  return ad::reshape(h, {h.shape()[0]});
}

Var classify(Var pooled, std::span<const BoundDense> layers) {
  return ad::sigmoid(classifier_logits(pooled, layers));
}

Tensor stack_windows(std::span<const features::FeatureWindow* const> windows) {
  if (windows.empty()) throw InvalidArgument("stack_windows: empty batch");
  const std::size_t frames = windows.front()->frames();
  const std::size_t cols = windows.front()->matrix.cols();
  std::vector<double> data;
  data.reserve(windows.size() * frames * cols);
  for (const auto* w : windows) {
    if (w->frames() != frames || w->matrix.cols() != cols) {
      throw InvalidArgument("stack_windows: windows in one batch must share a shape");
    }
    data.insert(data.end(), w->matrix.data().begin(), w->matrix.data().end());
  }
  return Tensor({windows.size(), frames, cols}, std::move(data));
}

Tensor stack_windows(std::span<const features::FeatureWindow> windows) {
  std::vector<const features::FeatureWindow*> ptrs;
  for (const auto& w : windows) ptrs.push_back(&w);
  return stack_windows(std::span<const features::FeatureWindow* const>(ptrs));
}

namespace {

void expect_shape(const Tensor& t, const Shape& s, const std::string& name) {
  if (t.shape() != s) {
    throw DataError("parameter '" + name + "' has shape " + ad::to_string(t.shape()) + ", config requires " +
                    ad::to_string(s));
  }
}

}  // namespace

MultiBranchTCN::MultiBranchTCN(ModelConfig config, std::vector<BranchEncoder> branches,
                               std::vector<DenseLayer> classifier)
    : config_(std::move(config)), branches_(std::move(branches)), classifier_(std::move(classifier)) {
  config_.validate();
  const auto k = static_cast<std::size_t>(config_.filters);
  const auto kernel = static_cast<std::size_t>(config_.kernel);
  if (branches_.size() != static_cast<std::size_t>(config_.branches)) {
    throw DataError("model has " + std::to_string(branches_.size()) + " branches, config requires " +
                    std::to_string(config_.branches));
  }
  for (std::size_t b = 0; b < branches_.size(); ++b) {
    auto& br = branches_[b];
    const std::string p = "branch" + std::to_string(b);
    expect_shape(br.proj_w, {1, static_cast<std::size_t>(config_.input_dim), k}, p + ".proj.weight");
    expect_shape(br.proj_b, {k}, p + ".proj.bias");
    if (br.base != config_.dilation_bases[b]) throw DataError(p + ": dilation base does not match config");
    const auto schedule = dilation_schedule(br.base, config_.layers_per_branch);
    if (br.layers.size() != schedule.size()) throw DataError(p + ": wrong number of layers");
    for (std::size_t l = 0; l < br.layers.size(); ++l) {
      auto& layer = br.layers[l];
      const std::string q = p + ".layer" + std::to_string(l);
      expect_shape(layer.w1, {kernel, k, k}, q + ".dilated.weight");
      expect_shape(layer.b1, {k}, q + ".dilated.bias");
      expect_shape(layer.w2, {1, k, k}, q + ".pointwise.weight");
      expect_shape(layer.b2, {k}, q + ".pointwise.bias");
      if (layer.dilation != schedule[l]) throw DataError(q + ": dilation does not follow base^l");
    }
  }
  if (classifier_.size() != config_.classifier_hidden.size()) throw DataError("classifier depth does not match config");
  auto in = static_cast<std::size_t>(config_.pooled_dim());
  for (std::size_t i = 0; i < classifier_.size(); ++i) {
    const auto out = static_cast<std::size_t>(config_.classifier_hidden[i]);
    expect_shape(classifier_[i].w, {in, out}, "classifier." + std::to_string(i) + ".weight");
    expect_shape(classifier_[i].b, {out}, "classifier." + std::to_string(i) + ".bias");
    in = out;
  }
}

MultiBranchTCN MultiBranchTCN::init(const ModelConfig& config) {
  config.validate();
  Rng rng(config.init_seed);
  const auto k = static_cast<std::size_t>(config.filters);
  const auto kernel = static_cast<std::size_t>(config.kernel);

  auto glorot = [&](Shape shape, std::size_t fan_in, std::size_t fan_out) {
    Tensor t(std::move(shape));
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& v : t.values()) v = dist(rng);
    return t;
  };

  std::vector<BranchEncoder> branches;
  for (int b = 0; b < config.branches; ++b) {
    BranchEncoder br;
    br.base = config.dilation_bases[static_cast<std::size_t>(b)];
    const auto in = static_cast<std::size_t>(config.input_dim);
    br.proj_w = glorot({1, in, k}, in, k);
    br.proj_b = Tensor({k});
    for (int d : dilation_schedule(br.base, config.layers_per_branch)) {
      ResidualDilatedLayer layer;
      layer.w1 = glorot({kernel, k, k}, kernel * k, kernel * k);
      layer.b1 = Tensor({k});
      layer.w2 = glorot({1, k, k}, k, k);
      layer.b2 = Tensor({k});
      layer.dilation = d;
      br.layers.push_back(std::move(layer));
    }
    branches.push_back(std::move(br));
  }
  std::vector<DenseLayer> classifier;
  auto in = static_cast<std::size_t>(config.pooled_dim());
  for (int h : config.classifier_hidden) {
    const auto out = static_cast<std::size_t>(h);
    classifier.push_back(DenseLayer{glorot({in, out}, in, out), Tensor({out})});
    in = out;
  }
  return MultiBranchTCN(config, std::move(branches), std::move(classifier));
}

std::vector<std::pair<std::string, const Tensor*>> MultiBranchTCN::named_parameters() const {
  std::vector<std::pair<std::string, const Tensor*>> out;
  for (std::size_t b = 0; b < branches_.size(); ++b) {
    const auto& br = branches_[b];
    const std::string p = "branch" + std::to_string(b);
    out.emplace_back(p + ".proj.weight", &br.proj_w);
    out.emplace_back(p + ".proj.bias", &br.proj_b);
    for (std::size_t l = 0; l < br.layers.size(); ++l) {
      const auto& layer = br.layers[l];
      const std::string q = p + ".layer" + std::to_string(l);
      out.emplace_back(q + ".dilated.weight", &layer.w1);
      out.emplace_back(q + ".dilated.bias", &layer.b1);
      out.emplace_back(q + ".pointwise.weight", &layer.w2);
      out.emplace_back(q + ".pointwise.bias", &layer.b2);
    }
  }
  for (std::size_t i = 0; i < classifier_.size(); ++i) {
    out.emplace_back("classifier." + std::to_string(i) + ".weight", &classifier_[i].w);
    out.emplace_back("classifier." + std::to_string(i) + ".bias", &classifier_[i].b);
  }
  return out;
}

std::vector<std::pair<std::string, Tensor*>> MultiBranchTCN::named_parameters() {
  std::vector<std::pair<std::string, Tensor*>> out;
  for (auto& [name, t] : std::as_const(*this).named_parameters()) out.emplace_back(name, const_cast<Tensor*>(t));
  return out;
}

std::size_t MultiBranchTCN::param_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : named_parameters()) n += t->size();
  return n;
}

MultiBranchTCN::Trace MultiBranchTCN::trace(Tape& tape, Var input, bool track) const {
  const Shape& s = input.shape();
  if (s.size() != 3 || s[2] != static_cast<std::size_t>(config_.input_dim)) {
    throw InvalidArgument("model input must be [batch, time, " + std::to_string(config_.input_dim) + "], got " +
                          ad::to_string(s));
  }
  Trace t;
  t.input = input;
  std::vector<BoundBranch> bound;
  for (const auto& br : branches_) {
    bound.push_back(bind(tape, br, track));
    const auto& bb = bound.back();
    t.params.push_back(bb.proj_w);
    t.params.push_back(bb.proj_b);
    for (const auto& l : bb.layers) t.params.insert(t.params.end(), {l.w1, l.b1, l.w2, l.b2});
  }
  std::vector<BoundDense> dense;
  for (const auto& d : classifier_) {
    dense.push_back(bind(tape, d, track));
    t.params.push_back(dense.back().w);
    t.params.push_back(dense.back().b);
  }

  std::vector<Var> outputs;
  for (const auto& bb : bound) {
    t.branches.push_back(branch_forward(input, bb));
    outputs.push_back(t.branches.back().output);
  }
  t.pooled = fuse(outputs, config_.fusion);
  t.logits = classifier_logits(t.pooled, dense);
  t.probs = ad::sigmoid(t.logits);
  return t;
}

namespace {

template <typename Pick>
std::vector<double> run_inference(const MultiBranchTCN& model, std::span<const features::FeatureWindow> windows,
                                  std::size_t batch, Pick pick) {
  if (batch == 0) throw InvalidArgument("inference batch size must be >= 1");
  std::vector<double> out(windows.size());
  // Group by frame count so each batch is rectangular.
  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < windows.size(); ++i) groups[windows[i].frames()].push_back(i);
  for (const auto& [frames, idx] : groups) {
    for (std::size_t lo = 0; lo < idx.size(); lo += batch) {
      const std::size_t hi = std::min(idx.size(), lo + batch);
      std::vector<const features::FeatureWindow*> chunk;
      for (std::size_t i = lo; i < hi; ++i) chunk.push_back(&windows[idx[i]]);
      Tape tape({.record = false});
      const auto tr = model.trace(tape, tape.constant(stack_windows(chunk)));
      const auto values = pick(tr).value();
      for (std::size_t i = lo; i < hi; ++i) out[idx[i]] = values[i - lo];
    }
  }
  return out;
}

}  // namespace

std::vector<double> MultiBranchTCN::predict(std::span<const features::FeatureWindow> windows, std::size_t batch) const {
  return run_inference(*this, windows, batch, [](const Trace& t) { return t.probs; });
}

std::vector<double> MultiBranchTCN::logits(std::span<const features::FeatureWindow> windows, std::size_t batch) const {
  return run_inference(*this, windows, batch, [](const Trace& t) { return t.logits; });
}

}  // namespace lsed::model
