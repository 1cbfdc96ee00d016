#pragma once

#include <cstddef>
#include <span>

#include "lsed/tensor.hpp"

namespace lsed::ad {

/// Dilated 1-D convolution with symmetric zero ("same") padding.
///   x [batch, time, c_in], w [kernel, c_in, c_out], b [c_out]
///   y[n, t, o] = b[o] + sum_{j,i} x[n, t + (j - (kernel-1)/2) d, i] w[j, i, o]
/// Kernel must be odd.
Var conv1d(Var x, Var w, Var b, int dilation = 1);

/// x [batch, in] . w [in, out] + b [out]
Var affine(Var x, Var w, Var b);

Var relu(Var x);
Var sigmoid(Var x);
Var add(Var a, Var b);
Var mul(Var a, Var b);
Var reshape(Var x, Shape shape);

/// Concatenation along `axis`; all other dimensions must agree.
Var concat(std::span<const Var> parts, std::size_t axis);
/// Mean over one axis, which is removed from the shape.
Var mean(Var x, std::size_t axis);
/// Sum of all elements, shape {1}.
Var sum(Var x);

/// Mean binary cross entropy -[y ln p + (1-y) ln(1-p)], p clamped to
/// [1e-7, 1 - 1e-7]. `target` must match p's shape.
Var bce(Var p, Var target);

inline constexpr double kBceClamp = 1e-7;

}  // namespace lsed::ad
