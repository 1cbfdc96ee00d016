#include "lsed/tensor.hpp"

#include <algorithm>
#include <numeric>

#include "lsed/errors.hpp"

namespace lsed::ad {

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

namespace {

void check_shape(const Shape& shape) {
  if (shape.empty()) throw InvalidArgument("tensor shape must have at least one dimension");
  for (std::size_t d : shape) {
    if (d == 0) throw InvalidArgument("tensor dimensions must be positive, got " + to_string(shape));
  }
}

}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  check_shape(shape_);
  data_.assign(numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  check_shape(shape_);
  if (data_.size() != numel(shape_)) {
    throw InvalidArgument("tensor data length " + std::to_string(data_.size()) +
                          " does not match shape " + to_string(shape_));
  }
}

void Tensor::accumulate_grad(std::span<const double> g) {
  if (g.size() != data_.size()) throw InvalidArgument("gradient size does not match tensor");
  if (grad_.empty()) grad_.assign(data_.size(), 0.0);
  for (std::size_t i = 0; i < g.size(); ++i) grad_[i] += g[i];
}

const Shape& Var::shape() const { return tape->shape(*this); }
std::span<const double> Var::value() const { return tape->value(*this); }

double Var::item() const {
  const auto v = value();
  if (v.size() != 1) throw InvalidArgument("item() on a tensor of shape " + to_string(shape()));
  return v[0];
}

Tape::Tape(TapeOptions options) : options_(options) {}

Var Tape::add_node(Node node) {
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

void Tape::check(Var v) const {
  if (v.tape != this || v.id >= nodes_.size()) throw InvalidArgument("variable belongs to a different tape");
}

Var Tape::constant(Tensor t) {
  Shape shape = t.shape();
  return add_node(Node{std::move(shape), std::move(t.values()), {}, false, {}});
}

Var Tape::variable(Tensor t) {
  Shape shape = t.shape();
  return add_node(Node{std::move(shape), std::move(t.values()), {}, options_.record, {}});
}

Var Tape::leaf(const Tensor& t) {
  return add_node(Node{t.shape(), t.values(), {}, options_.record && t.requires_grad(), {}});
}

const Shape& Tape::shape(Var v) const {
  check(v);
  return nodes_[v.id].shape;
}

std::span<const double> Tape::value(Var v) const {
  check(v);
  return nodes_[v.id].value;
}

std::vector<double> Tape::grad(Var v) const {
  check(v);
  const Node& n = nodes_[v.id];
  if (n.grad.empty()) return std::vector<double>(n.value.size(), 0.0);
  return n.grad;
}

bool Tape::needs_grad(Var v) const {
  check(v);
  return nodes_[v.id].needs_grad;
}

Var Tape::push(Shape shape, std::vector<double> value, std::initializer_list<Var> inputs, Backprop fn) {
  return push(std::move(shape), std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
              std::move(fn));
}

Var Tape::push(Shape shape, std::vector<double> value, std::span<const Var> inputs, Backprop fn) {
  bool needs = false;
  for (Var in : inputs) {
    check(in);
    needs = needs || nodes_[in.id].needs_grad;
  }
  needs = needs && options_.record;
  return add_node(Node{std::move(shape), std::move(value), {}, needs, needs ? std::move(fn) : Backprop{}});
}

std::vector<double>& Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

void Tape::append_kinks(std::span<const std::uint8_t> bits) {
  if (options_.track_kinks) kinks_.insert(kinks_.end(), bits.begin(), bits.end());
}

void Tape::backward(Var loss) {
  check(loss);
  if (!options_.record) throw Error("backward: tape was created without recording");
  if (backward_done_) throw Error("backward: already called on this tape");
  if (nodes_[loss.id].value.size() != 1) {
    throw InvalidArgument("backward: loss must be a scalar, got shape " + to_string(nodes_[loss.id].shape));
  }
  backward_done_ = true;
  if (!nodes_[loss.id].needs_grad) return;
  grad_buffer(loss.id)[0] = 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.needs_grad || !n.backprop || n.grad.empty()) continue;
    n.backprop(*this, i);
  }
}

}  // namespace lsed::ad
