#include "lsed/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "lsed/errors.hpp"

namespace lsed::ad {

namespace {

struct Eval {
  double value;
  std::vector<std::uint8_t> pattern;
};

Eval evaluate(const MultiScalarFn& f, const std::vector<Tensor>& inputs) {
  Tape tape({.record = false, .track_kinks = true});
  std::vector<Var> vars;
  vars.reserve(inputs.size());
  for (const auto& t : inputs) vars.push_back(tape.constant(t));
  const Var out = f(tape, vars);
  return {out.item(), tape.kink_pattern()};
}

}  // namespace

GradCheckResult grad_check(const MultiScalarFn& f, const std::vector<Tensor>& inputs,
                           const GradCheckOptions& options) {
  if (!(options.eps > 0.0)) throw InvalidArgument("grad_check: eps must be positive");

  std::vector<std::vector<double>> analytic;
  std::vector<std::uint8_t> base_pattern;
  {
    Tape tape({.record = true, .track_kinks = true});
    std::vector<Var> vars;
    for (const auto& t : inputs) vars.push_back(tape.variable(t));
    const Var out = f(tape, vars);
    tape.backward(out);
    for (Var v : vars) analytic.push_back(tape.grad(v));
    base_pattern = tape.kink_pattern();
  }

  GradCheckResult result;
  std::vector<Tensor> work = inputs;
  for (std::size_t k = 0; k < work.size(); ++k) {
    const std::size_t n = work[k].size();
    const std::size_t stride =
        options.max_coordinates == 0 || n <= options.max_coordinates ? 1 : (n + options.max_coordinates - 1) / options.max_coordinates;
    for (std::size_t i = 0; i < n; i += stride) {
      const double orig = work[k][i];
      work[k][i] = orig + options.eps;
      const Eval plus = evaluate(f, work);
      work[k][i] = orig - options.eps;
      const Eval minus = evaluate(f, work);
      work[k][i] = orig;

      if (plus.pattern != base_pattern || minus.pattern != base_pattern) {
        ++result.excluded;
        continue;
      }
      const double numeric = (plus.value - minus.value) / (2.0 * options.eps);
      const double a = analytic[k][i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), options.denominator_floor});
      ++result.checked;
      if (rel > result.max_rel_error || !std::isfinite(rel)) {
        result.max_rel_error = std::isfinite(rel) ? rel : INFINITY;
        result.worst_input = k;
        result.worst_index = i;
        result.worst_analytic = a;
        result.worst_numeric = numeric;
      }
    }
  }
  return result;
}

GradCheckResult grad_check(const ScalarFn& f, const Tensor& x, double eps) {
  return grad_check([&](Tape& t, std::span<const Var> v) { return f(t, v[0]); }, std::vector<Tensor>{x},
                    GradCheckOptions{.eps = eps});
}

}  // namespace lsed::ad
