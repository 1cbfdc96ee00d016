#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "lsed/features.hpp"
#include "lsed/tensor.hpp"

namespace lsed::model {

/// How branch outputs are merged before global average pooling.
///  - TimeConcat: join along time, pool -> [batch, k]
///  - FeatureConcat: join along channels, pool -> [batch, B*k]
enum class FusionMode { TimeConcat, FeatureConcat };

std::string_view to_string(FusionMode mode);
FusionMode parse_fusion_mode(std::string_view text);

struct ModelConfig {
  int branches = 3;
  int layers_per_branch = 3;
  int filters = 80;
  int kernel = 3;
  std::vector<int> dilation_bases{2, 3, 4};
  std::vector<int> classifier_hidden{80, 32, 1};
  FusionMode fusion = FusionMode::TimeConcat;
  int input_dim = static_cast<int>(features::kFeatureDim);
  std::uint64_t init_seed = 0;

  /// Throws InvalidArgument when the invariants do not hold.
  void validate() const;
  /// Width of the pooled vector fed to the classifier.
  int pooled_dim() const { return fusion == FusionMode::TimeConcat ? filters : branches * filters; }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

/// [base^0, base^1, ..., base^(layers-1)]
std::vector<int> dilation_schedule(int base, int layers);

/// Receptive-field radius (frames either side) of one branch.
int receptive_radius(int base, int layers, int kernel = 3);

struct ResidualDilatedLayer {
  ad::Tensor w1, b1;  ///< dilated conv, [kernel, k, k] and [k]
  ad::Tensor w2, b2;  ///< pointwise conv, [1, k, k] and [k]
  int dilation = 1;
};

struct BranchEncoder {
  ad::Tensor proj_w, proj_b;  ///< pointwise input projection, [1, input_dim, k] and [k]
  std::vector<ResidualDilatedLayer> layers;
  int base = 2;
};

struct DenseLayer {
  ad::Tensor w, b;  ///< [in, out] and [out]
};

// Parameters placed on a tape, either as gradient-tracking variables or as
// constants.
struct BoundLayer {
  ad::Var w1, b1, w2, b2;
  int dilation = 1;
};
struct BoundBranch {
  ad::Var proj_w, proj_b;
  std::vector<BoundLayer> layers;
};
struct BoundDense {
  ad::Var w, b;
};

BoundLayer bind(ad::Tape& tape, const ResidualDilatedLayer& layer, bool track_grad);
BoundBranch bind(ad::Tape& tape, const BranchEncoder& branch, bool track_grad);
BoundDense bind(ad::Tape& tape, const DenseLayer& dense, bool track_grad);

/// H = H_prev + conv(relu(conv(H_prev, w1, b1, dilation)), w2, b2)
ad::Var residual_layer_forward(ad::Var h_prev, const BoundLayer& layer);

struct BranchTrace {
  ad::Var projected;
  std::vector<ad::Var> layer_outputs;
  ad::Var output;
};

/// Input projection followed by the first `max_layers` residual layers.
BranchTrace branch_forward(ad::Var input, const BoundBranch& branch,
                           std::size_t max_layers = std::numeric_limits<std::size_t>::max());

/// Merges B tensors of shape [batch, time_b, k] into [batch, F].
ad::Var fuse(std::span<const ad::Var> outputs, FusionMode mode);

/// affine -> relu -> ... -> affine; returns pre-sigmoid logits of shape [batch].
ad::Var classifier_logits(ad::Var pooled, std::span<const BoundDense> layers);

/// sigmoid(classifier_logits(...)).
ad::Var classify(ad::Var pooled, std::span<const BoundDense> layers);

/// Stacks windows with equal frame counts into [batch, frames, 65].
ad::Tensor stack_windows(std::span<const features::FeatureWindow> windows);
ad::Tensor stack_windows(std::span<const features::FeatureWindow* const> windows);

class MultiBranchTCN {
 public:
  MultiBranchTCN() = default;
  /// Validates parameter shapes against the config.
  MultiBranchTCN(ModelConfig config, std::vector<BranchEncoder> branches, std::vector<DenseLayer> classifier);

  /// Glorot-uniform weights (+/- sqrt(6 / (fan_in + fan_out))), zero biases,
  /// deterministic per config.init_seed.
  static MultiBranchTCN init(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  const std::vector<BranchEncoder>& branches() const { return branches_; }
  const std::vector<DenseLayer>& classifier() const { return classifier_; }

  std::vector<std::pair<std::string, const ad::Tensor*>> named_parameters() const;
  std::vector<std::pair<std::string, ad::Tensor*>> named_parameters();
  std::size_t param_count() const;

  struct Trace {
    ad::Var input;
    std::vector<BranchTrace> branches;
    ad::Var pooled;
    ad::Var logits;  ///< [batch]
    ad::Var probs;   ///< [batch]
    std::vector<ad::Var> params;  ///< in named_parameters() order
  };

  /// Builds the full forward graph for `input` ([batch, time, input_dim]).
  Trace trace(ad::Tape& tape, ad::Var input, bool track_param_grads = false) const;

  /// Inference helpers (no gradient recording). Windows are processed in
  /// chunks of `batch` but results are independent of chunking.
  std::vector<double> predict(std::span<const features::FeatureWindow> windows, std::size_t batch = 64) const;
  std::vector<double> logits(std::span<const features::FeatureWindow> windows, std::size_t batch = 64) const;

 private:
  ModelConfig config_;
  std::vector<BranchEncoder> branches_;
  std::vector<DenseLayer> classifier_;
};

}  // namespace lsed::model
