#include "lsed/interpret.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "lsed/errors.hpp"
#include "lsed/ops.hpp"

namespace lsed::interpret {

namespace {

constexpr std::size_t kPathChunk = 16;

void check_steps(int steps) {
  if (steps < 1) throw InvalidArgument("attribution steps must be >= 1, got " + std::to_string(steps));
}

Matrix resolve_baseline(const features::FeatureWindow& x, const std::optional<Matrix>& baseline) {
  if (!baseline) return Matrix(x.matrix.rows(), x.matrix.cols());
  if (baseline->rows() != x.matrix.rows() || baseline->cols() != x.matrix.cols()) {
    throw InvalidArgument("baseline shape differs from the input window");
  }
  return *baseline;
}

/// Path points (m - 1/2)/steps for m in [lo, hi), stacked as [hi-lo, T, D].
ad::Tensor path_batch(const Matrix& x, const Matrix& base, int steps, int lo, int hi) {
  const std::size_t cells = x.size();
  std::vector<double> data(static_cast<std::size_t>(hi - lo) * cells);
  for (int m = lo; m < hi; ++m) {
    const double alpha = (m + 0.5) / steps;
    double* out = data.data() + static_cast<std::size_t>(m - lo) * cells;
    for (std::size_t i = 0; i < cells; ++i) out[i] = base.data()[i] + alpha * (x.data()[i] - base.data()[i]);
  }
  return ad::Tensor({static_cast<std::size_t>(hi - lo), x.rows(), x.cols()}, std::move(data));
}

/// Sums a [batch, T, D] gradient over the batch axis into `acc`.
void accumulate_over_batch(std::vector<double>& acc, const std::vector<double>& g) {
  const std::size_t cells = acc.size();
  for (std::size_t i = 0; i < g.size(); ++i) acc[i % cells] += g[i];
}

Matrix scale_by_delta(const std::vector<double>& grad_sum, const Matrix& x, const Matrix& base, int steps) {
  Matrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.data()[i] = (x.data()[i] - base.data()[i]) * grad_sum[i] / steps;
  }
  return out;
}

double logit_of(const model::MultiBranchTCN& model, const Matrix& m) {
  ad::Tape tape({.record = false});
  ad::Tensor t({1, m.rows(), m.cols()}, m.data());
  return model.trace(tape, tape.constant(std::move(t))).logits.item();
}

}  // namespace

std::string_view to_string(Method m) {
  return m == Method::InputAttribution ? "input_attribution" : "layer_conductance";
}

double AttributionMap::total() const {
  return std::accumulate(matrix.data().begin(), matrix.data().end(), 0.0);
}

std::vector<double> integrated_gradients(const GradientFn& grad, std::span<const double> x,
                                         std::span<const double> baseline, int steps) {
  check_steps(steps);
  if (x.size() != baseline.size()) throw InvalidArgument("integrated_gradients: baseline size differs from input");
  std::vector<double> sum(x.size(), 0.0), point(x.size());
  for (int m = 0; m < steps; ++m) {
    const double alpha = (m + 0.5) / steps;
    for (std::size_t i = 0; i < x.size(); ++i) point[i] = baseline[i] + alpha * (x[i] - baseline[i]);
    const auto g = grad(point);
    if (g.size() != x.size()) throw InvalidArgument("integrated_gradients: gradient has the wrong size");
    for (std::size_t i = 0; i < x.size(); ++i) sum[i] += g[i];
  }
  std::vector<double> attr(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) attr[i] = (x[i] - baseline[i]) * sum[i] / steps;
  return attr;
}

AttributionMap integrated_gradients(const model::MultiBranchTCN& model, const features::FeatureWindow& x, int steps,
                                    const std::optional<Matrix>& baseline) {
  check_steps(steps);
  const Matrix base = resolve_baseline(x, baseline);
  std::vector<double> sum(x.matrix.size(), 0.0);
  for (int lo = 0; lo < steps; lo += static_cast<int>(kPathChunk)) {
    const int hi = std::min(steps, lo + static_cast<int>(kPathChunk));
    ad::Tape tape;
    const auto input = tape.variable(path_batch(x.matrix, base, steps, lo, hi));
    const auto tr = model.trace(tape, input);
    // Windows in a batch are independent, so d(sum of logits)/d(input) holds
    // each point's own gradient.
    tape.backward(ad::sum(tr.logits));
    accumulate_over_batch(sum, tape.grad(input));
  }
  AttributionMap out;
  out.matrix = scale_by_delta(sum, x.matrix, base, steps);
  out.method = Method::InputAttribution;
  out.target = logit_of(model, x.matrix);
  return out;
}

std::vector<AttributionMap> layer_conductance(const model::MultiBranchTCN& model, const features::FeatureWindow& x,
                                              std::span<const LayerRef> layers, int steps,
                                              const std::optional<Matrix>& baseline) {
  check_steps(steps);
  const auto& branches = model.branches();
  for (const auto& ref : layers) {
    if (ref.branch < 0 || static_cast<std::size_t>(ref.branch) >= branches.size()) {
      throw InvalidArgument("branch index " + std::to_string(ref.branch) + " out of range [0, " +
                            std::to_string(branches.size()) + ")");
    }
    const auto n_layers = branches[static_cast<std::size_t>(ref.branch)].layers.size();
    if (ref.layer < 0 || static_cast<std::size_t>(ref.layer) >= n_layers) {
      throw InvalidArgument("layer index " + std::to_string(ref.layer) + " out of range [0, " +
                            std::to_string(n_layers) + ")");
    }
  }
  const Matrix base = resolve_baseline(x, baseline);
  std::vector<std::vector<double>> sums(layers.size(), std::vector<double>(x.matrix.size(), 0.0));

  for (int lo = 0; lo < steps; lo += static_cast<int>(kPathChunk)) {
    const int hi = std::min(steps, lo + static_cast<int>(kPathChunk));
    const ad::Tensor points = path_batch(x.matrix, base, steps, lo, hi);

    // Pass 1: dF/dy for every requested layer output.
    ad::Tape outer;
    const auto tr = model.trace(outer, outer.variable(points));
    outer.backward(ad::sum(tr.logits));

    // Pass 2: vector-Jacobian product of each layer output with dF/dy.
    for (std::size_t r = 0; r < layers.size(); ++r) {
      const auto b = static_cast<std::size_t>(layers[r].branch);
      const auto l = static_cast<std::size_t>(layers[r].layer);
      const ad::Var y_outer = tr.branches[b].layer_outputs[l];
      ad::Tensor dfdy(y_outer.shape(), outer.grad(y_outer));

      ad::Tape inner;
      const auto input = inner.variable(points);
      const auto bound = model::bind(inner, branches[b], /*track_grad=*/false);
      const auto bt = model::branch_forward(input, bound, l + 1);
      inner.backward(ad::sum(ad::mul(bt.layer_outputs[l], inner.constant(std::move(dfdy)))));
      accumulate_over_batch(sums[r], inner.grad(input));
    }
  }

  const double target = logit_of(model, x.matrix);
  std::vector<AttributionMap> out;
  for (std::size_t r = 0; r < layers.size(); ++r) {
    AttributionMap m;
    m.matrix = scale_by_delta(sums[r], x.matrix, base, steps);
    m.method = Method::LayerConductance;
    m.target = target;
    m.branch = layers[r].branch;
    m.layer = layers[r].layer;
    out.push_back(std::move(m));
  }
  return out;
}

AttributionMap layer_conductance(const model::MultiBranchTCN& model, const features::FeatureWindow& x, int branch,
                                 int layer, int steps) {
  const LayerRef ref{branch, layer};
  return std::move(layer_conductance(model, x, std::span<const LayerRef>(&ref, 1), steps).front());
}

std::vector<std::uint8_t> salient_mask(const Matrix& attribution, double p) {
  if (!(p > 0.0 && p <= 1.0)) throw InvalidArgument("salient fraction p must be in (0, 1]");
  const std::size_t cells = attribution.size();
  const auto keep = std::min(cells, static_cast<std::size_t>(std::ceil(p * static_cast<double>(cells) - 1e-9)));
  std::vector<std::size_t> order(cells);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(attribution.data()[a]) > std::abs(attribution.data()[b]);
  });
  std::vector<std::uint8_t> mask(cells, 0);
  for (std::size_t i = 0; i < keep; ++i) mask[order[i]] = 1;
  return mask;
}

InterpretationReport interpretation_report(const model::MultiBranchTCN& model,
                                           const std::vector<features::FeatureWindow>& windows,
                                           const std::string& recording_id, std::size_t window_index, double p,
                                           int steps) {
  if (window_index >= windows.size()) {
    throw InvalidArgument("window index " + std::to_string(window_index) + " out of range: recording '" +
                          recording_id + "' has " + std::to_string(windows.size()) + " windows");
  }
  const auto& fw = windows[window_index];
  InterpretationReport r;
  r.recording_id = recording_id;
  r.window_index = window_index;
  r.start_s = fw.start_s;
  r.steps = steps;
  r.p = p;
  r.input_attribution = integrated_gradients(model, fw, steps);
  r.logit = r.input_attribution.target;
  r.probability = 1.0 / (1.0 + std::exp(-r.logit));
  r.baseline_logit = logit_of(model, Matrix(fw.matrix.rows(), fw.matrix.cols()));
  std::vector<LayerRef> refs;
  for (std::size_t b = 0; b < model.branches().size(); ++b) {
    refs.push_back({static_cast<int>(b), static_cast<int>(model.branches()[b].layers.size()) - 1});
  }
  r.conductance = layer_conductance(model, fw, refs, steps);
  r.mask = salient_mask(r.input_attribution.matrix, p);
  double peak = 0.0;
  for (double v : r.input_attribution.matrix.data()) peak = std::max(peak, std::abs(v));
  for (const auto& c : r.conductance) {
    for (double v : c.matrix.data()) peak = std::max(peak, std::abs(v));
  }
  r.near_zero = peak < 1e-12;
  return r;
}

nlohmann::json to_json(const InterpretationReport& r) {
  nlohmann::json conductance = nlohmann::json::array();
  for (const auto& c : r.conductance) {
    conductance.push_back({{"branch", c.branch}, {"layer", c.layer}, {"total", c.total()}});
  }
  const auto salient = std::count(r.mask.begin(), r.mask.end(), std::uint8_t{1});
  return nlohmann::json{{"recording_id", r.recording_id},
                        {"window_index", r.window_index},
                        {"start_s", r.start_s},
                        {"probability", r.probability},
                        {"logit", r.logit},
                        {"baseline_logit", r.baseline_logit},
                        {"steps", r.steps},
                        {"p", r.p},
                        {"frames", r.input_attribution.matrix.rows()},
                        {"columns", r.input_attribution.matrix.cols()},
                        {"input_attribution_total", r.input_attribution.total()},
                        {"conductance", conductance},
                        {"salient_cells", salient},
                        {"near_zero", r.near_zero}};
}

std::string matrix_csv(const Matrix& m) {
  std::ostringstream out;
  out << std::setprecision(17);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) out << (c ? "," : "") << m(r, c);
    out << '\n';
  }
  return out.str();
}

std::vector<std::filesystem::path> write_report(const std::filesystem::path& dir, const InterpretationReport& r) {
  std::filesystem::create_directories(dir);
  const std::string stem = r.recording_id + "." + std::to_string(r.window_index) + ".";
  std::vector<std::filesystem::path> written;
  auto emit = [&](const std::string& name, const std::string& text) {
    const auto path = dir / (stem + name);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    out << text;
    written.push_back(path);
  };
  emit("report.json", to_json(r).dump(2) + "\n");
  emit(std::string(to_string(Method::InputAttribution)) + ".csv", matrix_csv(r.input_attribution.matrix));
  for (const auto& c : r.conductance) {
    emit(std::string(to_string(Method::LayerConductance)) + "_b" + std::to_string(c.branch) + ".csv",
         matrix_csv(c.matrix));
  }
  Matrix mask(r.input_attribution.matrix.rows(), r.input_attribution.matrix.cols());
  for (std::size_t i = 0; i < mask.size(); ++i) mask.data()[i] = r.mask[i];
  emit("salient_mask.csv", matrix_csv(mask));
  return written;
}

}  // namespace lsed::interpret
