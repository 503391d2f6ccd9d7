#include "mambair/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>

#include "mambair/errors.hpp"

namespace mambair {

namespace {

std::atomic<std::size_t> g_live_bytes{0};
std::atomic<std::size_t> g_peak_bytes{0};

void track_alloc(std::size_t bytes) {
  const std::size_t now = g_live_bytes.fetch_add(bytes) + bytes;
  std::size_t peak = g_peak_bytes.load();
  while (now > peak && !g_peak_bytes.compare_exchange_weak(peak, now)) {
  }
}

void track_free(std::size_t bytes) { g_live_bytes.fetch_sub(bytes); }

thread_local Tape* t_active_tape = nullptr;

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

Node::Node(Shape s, std::vector<double> v) : shape(std::move(s)), value(std::move(v)) {
  if (shape_numel(shape) != value.size()) {
    throw ShapeError("tensor shape " + shape_str(shape) + " does not match " +
                     std::to_string(value.size()) + " values");
  }
  track_alloc(value.size() * sizeof(double));
}

Node::~Node() { track_free((value.size() + grad.size()) * sizeof(double)); }

std::vector<double>& Node::ensure_grad() {
  if (grad.empty() && !value.empty()) {
    grad.assign(value.size(), 0.0);
    track_alloc(grad.size() * sizeof(double));
  }
  return grad;
}

}  // namespace detail

Tensor::Tensor(Shape shape, double fill) {
  const std::size_t n = shape_numel(shape);
  node_ = std::make_shared<detail::Node>(std::move(shape), std::vector<double>(n, fill));
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : node_(std::make_shared<detail::Node>(std::move(shape), std::move(values))) {}

Tensor Tensor::scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= node_->shape.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " +
                     shape_str(node_->shape));
  }
  return node_->shape[axis];
}

std::size_t Tensor::numel() const { return node_->value.size(); }

std::span<const double> Tensor::data() const { return node_->value; }
std::span<double> Tensor::data_mut() { return node_->value; }

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
  if (node_->producer != nullptr) {
    throw std::logic_error("set_requires_grad on a non-leaf tensor");
  }
  node_->requires_grad = on;
  return *this;
}

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::span<const double> Tensor::grad() const { return node_->grad; }

std::span<double> Tensor::grad_mut() { return node_->ensure_grad(); }

void Tensor::zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), 0.0); }

Tensor Tensor::clone() const { return Tensor(node_->shape, node_->value); }

void Tape::record(const Tensor& out, BackwardFn fn) {
  out.node()->requires_grad = true;
  out.node()->producer = this;
  entries_.push_back(Entry{out.node(), std::move(fn)});
}

void Tape::backward(const Tensor& output) {
  if (!output.defined() || output.numel() != 1) {
    throw ShapeError("backward() needs a scalar output");
  }
  if (output.node()->producer != this) {
    throw std::logic_error("backward() on a value that was not produced on this tape");
  }
  for (auto& e : entries_) std::fill(e.out->grad.begin(), e.out->grad.end(), 0.0);
  output.node()->ensure_grad()[0] = 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (it->out->grad.empty()) continue;
    it->fn(it->out->grad);
  }
}

TapeScope::TapeScope(Tape& tape) : previous_(t_active_tape) { t_active_tape = &tape; }
TapeScope::~TapeScope() { t_active_tape = previous_; }

Tape* active_tape() { return t_active_tape; }

Tape* recording_tape(std::initializer_list<const Tensor*> inputs) {
  if (t_active_tape == nullptr) return nullptr;
  for (const Tensor* t : inputs) {
    if (t != nullptr && t->requires_grad()) return t_active_tape;
  }
  return nullptr;
}

MemoryStats memory_stats() { return {g_live_bytes.load(), g_peak_bytes.load()}; }

void reset_peak_memory() { g_peak_bytes.store(g_live_bytes.load()); }

}  // namespace mambair
