#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mambair {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tape;

namespace detail {

struct Node {
  Node(Shape s, std::vector<double> v);
  ~Node();
  Node(const Node&) = delete;
  Node& operator=(const Node&) = delete;

  // Allocates a zeroed gradient buffer on first use.
  std::vector<double>& ensure_grad();

  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  const Tape* producer = nullptr;  // null for leaves and untracked values
};

}  // namespace detail

/// Dense row-major array of doubles with optional gradient tracking.
///
/// A Tensor is a shared handle: copies alias the same storage, like most
/// deep-learning frameworks. Use clone() for an independent copy. Values that
/// are not being mutated may be shared across threads freely.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double v);
  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0); }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  std::span<double> data_mut();
  double item() const;
  double operator[](std::size_t i) const { return node_->value[i]; }

  bool requires_grad() const;
  /// Marks a leaf as a differentiation target. Only valid on leaves.
  Tensor& set_requires_grad(bool on = true);

  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> grad_mut();
  void zero_grad();

  /// Same values in fresh storage, no gradient history.
  Tensor clone() const;
  Tensor detach() const { return clone(); }

  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

using BackwardFn = std::function<void(std::span<const double> grad_out)>;

/// Reverse-mode record of executed operations. One tape per thread.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Propagates d(output)/d(leaf) into every grad-enabled leaf reached from
  /// `output`. Leaf gradients accumulate across calls until zero_grad().
  void backward(const Tensor& output);

  /// Drops every recorded operation and the intermediates it kept alive.
  void clear() { entries_.clear(); }
  std::size_t size() const { return entries_.size(); }

  void record(const Tensor& out, BackwardFn fn);

 private:
  struct Entry {
    std::shared_ptr<detail::Node> out;
    BackwardFn fn;
  };
  std::vector<Entry> entries_;
};

/// Makes `tape` the recording tape of the calling thread for its lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

Tape* active_tape();

/// Returns the tape to record on when any input is tracked, else nullptr.
Tape* recording_tape(std::initializer_list<const Tensor*> inputs);

struct MemoryStats {
  std::size_t live_bytes = 0;
  std::size_t peak_bytes = 0;
};

/// Bytes of tensor payload (values and gradients) currently allocated.
MemoryStats memory_stats();
void reset_peak_memory();

}  // namespace mambair
