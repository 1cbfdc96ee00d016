#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "lsed/tensor.hpp"

namespace lsed::ad {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t excluded = 0;  ///< stencils that crossed a ReLU/clamp kink
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

using ScalarFn = std::function<Var(Tape&, Var)>;
using MultiScalarFn = std::function<Var(Tape&, std::span<const Var>)>;

struct GradCheckOptions {
  double eps = 1e-5;
  /// Per input tensor, check at most this many coordinates (evenly strided);
  /// 0 checks all.
  std::size_t max_coordinates = 0;
  /// Lower bound on the relative-error denominator. Central differences
  /// carry roundoff of roughly 1e-16 |f| / eps, so gradients far below
  /// that scale cannot be resolved to a small relative error.
  double denominator_floor = 1e-8;
};

/// Compares backward() gradients with central differences
/// (f(x + eps e_i) - f(x - eps e_i)) / 2 eps. Relative error uses the
/// denominator max(|a|, |b|, denominator_floor). A coordinate is excluded when either
/// perturbed evaluation changes the ReLU / clamp activation pattern, i.e.
/// the stencil touches a non-differentiable point.
GradCheckResult grad_check(const MultiScalarFn& f, const std::vector<Tensor>& inputs,
                           const GradCheckOptions& options = {});

GradCheckResult grad_check(const ScalarFn& f, const Tensor& x, double eps = 1e-5);

}  // namespace lsed::ad
