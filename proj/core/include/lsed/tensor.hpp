#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace lsed::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

/// Dense row-major tensor of doubles with an optional gradient buffer.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  const Shape& shape() const { return shape_; }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  bool requires_grad() const { return requires_grad_; }
  void set_requires_grad(bool on) { requires_grad_ = on; }

  bool has_grad() const { return !grad_.empty(); }
  std::span<const double> grad() const { return grad_; }
  /// Adds `g` into the gradient buffer, allocating it on first use.
  void accumulate_grad(std::span<const double> g);
  void zero_grad() { grad_.clear(); }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<double> data_;
  std::vector<double> grad_;
  bool requires_grad_ = false;
};

class Tape;

/// Handle to a value recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Shape& shape() const;
  std::span<const double> value() const;
  std::size_t size() const { return value().size(); }
  double item() const;
};

struct TapeOptions {
  /// When false no backward closures or intermediates are kept; backward()
  /// throws. Used for inference.
  bool record = true;
  /// Records the activation pattern of every ReLU and BCE clamp so that
  /// finite-difference checks can detect stencils straddling a kink.
  bool track_kinks = false;
};

/// Single-owner computation record. Nodes are appended in evaluation order,
/// which is a topological order; backward() visits them once in reverse.
class Tape {
 public:
  using Backprop = std::function<void(Tape&, std::size_t self)>;

  explicit Tape(TapeOptions options = {});
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = delete;
  Tape& operator=(Tape&&) = delete;

  /// Leaf without gradient.
  Var constant(Tensor t);
  /// Leaf whose gradient is retained (read it back with grad()).
  Var variable(Tensor t);
  /// Copies `t`; gradient is tracked iff t.requires_grad().
  Var leaf(const Tensor& t);

  const Shape& shape(Var v) const;
  std::span<const double> value(Var v) const;
  /// Gradient of the loss w.r.t. `v` after backward(); zeros if none flowed.
  std::vector<double> grad(Var v) const;
  bool needs_grad(Var v) const;

  bool recording() const { return options_.record; }
  bool tracks_kinks() const { return options_.track_kinks; }
  bool backward_done() const { return backward_done_; }
  std::size_t size() const { return nodes_.size(); }

  /// Propagates d(loss)/d(node) to every node that needs a gradient.
  /// Throws InvalidArgument for a non-scalar loss and Error when the tape
  /// does not record or backward already ran.
  void backward(Var loss);

  const std::vector<std::uint8_t>& kink_pattern() const { return kinks_; }

  // --- interface for op implementations ---------------------------------
  Var push(Shape shape, std::vector<double> value, std::initializer_list<Var> inputs, Backprop fn);
  Var push(Shape shape, std::vector<double> value, std::span<const Var> inputs, Backprop fn);
  /// Gradient accumulator of node `id`, zero-initialised on first access.
  std::vector<double>& grad_buffer(std::size_t id);
  const std::vector<double>& node_grad(std::size_t id) const { return nodes_[id].grad; }
  const std::vector<double>& node_value(std::size_t id) const { return nodes_[id].value; }
  bool node_needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  void append_kinks(std::span<const std::uint8_t> bits);

 private:
  struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool needs_grad = false;
    Backprop backprop;
  };

  Var add_node(Node node);
  void check(Var v) const;

  TapeOptions options_;
  std::vector<Node> nodes_;
  std::vector<std::uint8_t> kinks_;
  bool backward_done_ = false;
};

}  // namespace lsed::ad
