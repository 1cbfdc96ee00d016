#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lsed/features.hpp"
#include "lsed/matrix.hpp"
#include "lsed/model.hpp"

namespace lsed::interpret {

enum class Method { InputAttribution, LayerConductance };
std::string_view to_string(Method m);

/// Input-shaped (frames x 65) signed attribution.
struct AttributionMap {
  Matrix matrix;
  Method method = Method::InputAttribution;
  double target = 0.0;  ///< logit F(x) being explained
  int branch = -1;      ///< set for layer conductance
  int layer = -1;

  double total() const;
};

/// Gradient of a scalar function at one point.
using GradientFn = std::function<std::vector<double>(std::span<const double> x)>;

/// attr_i = (x_i - b_i) / steps * sum_{m=1..steps} dF/dx_i at b + (m - 1/2)/steps (x - b).
std::vector<double> integrated_gradients(const GradientFn& grad, std::span<const double> x,
                                         std::span<const double> baseline, int steps);

/// Integrated gradients of the pre-sigmoid logit. The baseline defaults to
/// the all-zero matrix.
AttributionMap integrated_gradients(const model::MultiBranchTCN& model, const features::FeatureWindow& x,
                                    int steps = 128, const std::optional<Matrix>& baseline = std::nullopt);

struct LayerRef {
  int branch = 0;
  int layer = 0;  ///< 0-based residual layer index within the branch
};

/// Conductance of the logit through every unit of the referenced layer,
/// projected back onto input coordinates:
///   cond_i = (x_i - b_i) / steps * sum_m sum_j dF/dy_j * dy_j/dx_i
/// evaluated at the same midpoints as integrated_gradients. For a fixed
/// layer index the maps of all branches add up to the input attribution.
std::vector<AttributionMap> layer_conductance(const model::MultiBranchTCN& model, const features::FeatureWindow& x,
                                              std::span<const LayerRef> layers, int steps = 128,
                                              const std::optional<Matrix>& baseline = std::nullopt);

AttributionMap layer_conductance(const model::MultiBranchTCN& model, const features::FeatureWindow& x, int branch,
                                 int layer, int steps = 128);

/// Row-major indicator of the ceil(p * cells) cells with the largest |value|
/// (ties resolved towards the lower index).
std::vector<std::uint8_t> salient_mask(const Matrix& attribution, double p);

struct InterpretationReport {
  std::string recording_id;
  std::size_t window_index = 0;
  double start_s = 0.0;
  double probability = 0.0;
  double logit = 0.0;
  double baseline_logit = 0.0;
  int steps = 128;
  double p = 0.05;
  AttributionMap input_attribution;
  std::vector<AttributionMap> conductance;  ///< final layer of each branch
  std::vector<std::uint8_t> mask;
  /// True when every attribution is below 1e-12 in magnitude, which happens
  /// for untrained or degenerate models.
  bool near_zero = false;
};

InterpretationReport interpretation_report(const model::MultiBranchTCN& model,
                                           const std::vector<features::FeatureWindow>& windows,
                                           const std::string& recording_id, std::size_t window_index,
                                           double p = 0.05, int steps = 128);

nlohmann::json to_json(const InterpretationReport& report);
std::string matrix_csv(const Matrix& m);

/// Writes {id}.{window}.report.json, {id}.{window}.input_attribution.csv,
/// {id}.{window}.layer_conductance_b{b}.csv and {id}.{window}.salient_mask.csv.
/// Returns the written paths.
std::vector<std::filesystem::path> write_report(const std::filesystem::path& dir, const InterpretationReport& report);

}  // namespace lsed::interpret
