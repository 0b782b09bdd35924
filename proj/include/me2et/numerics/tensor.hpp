#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "me2et/error.hpp"

namespace me2et::num {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto s : shape) n *= s;
  return n;
}

inline std::string shape_to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

// Per-thread accounting of tensor-data bytes. Every Buffer reports here, so
// peak_bytes is the high-water mark of concurrently live tensor data.
struct MemoryStats {
  std::int64_t live_bytes = 0;
  std::int64_t peak_bytes = 0;
  std::int64_t total_allocated = 0;
};

inline MemoryStats& memory_stats() {
  thread_local MemoryStats stats;
  return stats;
}

inline void reset_peak_memory() {
  auto& s = memory_stats();
  s.peak_bytes = s.live_bytes;
}

// Heap storage for tensor values and gradients that reports its footprint to
// memory_stats().
template <class T>
class Buffer {
 public:
  Buffer() = default;
  explicit Buffer(std::size_t n, T fill = T{}) : data_(n, fill) { track(); }
  explicit Buffer(std::vector<T> values) : data_(std::move(values)) { track(); }
  Buffer(const Buffer& other) : data_(other.data_) { track(); }
  Buffer(Buffer&& other) noexcept : data_(std::move(other.data_)) { other.data_.clear(); }
  Buffer& operator=(const Buffer& other) {
    if (this != &other) {
      untrack();
      data_ = other.data_;
      track();
    }
    return *this;
  }
  Buffer& operator=(Buffer&& other) noexcept {
    if (this != &other) {
      untrack();
      data_ = std::move(other.data_);
      other.data_.clear();
    }
    return *this;
  }
  ~Buffer() { untrack(); }

  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }
  std::span<T> span() { return data_; }
  std::span<const T> span() const { return data_; }

 private:
  void track() {
    auto bytes = static_cast<std::int64_t>(data_.size() * sizeof(T));
    auto& s = memory_stats();
    s.live_bytes += bytes;
    s.total_allocated += bytes;
    if (s.live_bytes > s.peak_bytes) s.peak_bytes = s.live_bytes;
  }
  void untrack() { memory_stats().live_bytes -= static_cast<std::int64_t>(data_.size() * sizeof(T)); }

  std::vector<T> data_;
};

template <class T>
struct Node {
  Shape shape;
  Buffer<T> value;
  Buffer<T> grad;
  bool requires_grad = false;
  std::string_view op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(Node&)> backward;

  T* grad_data() {
    if (grad.empty()) grad = Buffer<T>(value.size());
    return grad.data();
  }
};

template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape) { return filled(std::move(shape), T{0}); }

  static Tensor filled(Shape shape, T value) {
    auto node = std::make_shared<Node<T>>();
    node->value = Buffer<T>(shape_numel(shape), value);
    node->shape = std::move(shape);
    return Tensor(std::move(node));
  }

  static Tensor from(Shape shape, std::vector<T> values) {
    if (shape_numel(shape) != values.size()) {
      throw DimensionError("tensor shape " + shape_to_string(shape) + " holds " +
                           std::to_string(shape_numel(shape)) + " values, got " +
                           std::to_string(values.size()));
    }
    auto node = std::make_shared<Node<T>>();
    node->value = Buffer<T>(std::move(values));
    node->shape = std::move(shape);
    return Tensor(std::move(node));
  }

  static Tensor scalar(T value) { return from({1}, {value}); }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->value.size(); }
  std::size_t rows() const { return node_->shape.at(0); }
  std::size_t cols() const { return node_->shape.at(1); }

  std::span<const T> data() const { return node_->value.span(); }
  // Leaf tensors only: optimizer updates and finite-difference probes.
  std::span<T> mutable_data() { return node_->value.span(); }

  T item() const {
    if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_to_string(shape()));
    return node_->value[0];
  }
  T at(std::size_t i, std::size_t j) const { return node_->value[i * cols() + j]; }
  T operator[](std::size_t i) const { return node_->value[i]; }

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool flag = true) {
    node_->requires_grad = flag;
    return *this;
  }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const T> grad() const { return node_->grad.span(); }
  void zero_grad() { node_->grad = Buffer<T>(); }

  std::string_view op() const { return node_->op; }
  const std::shared_ptr<Node<T>>& node() const { return node_; }

  // Copy of the values with no autograd history.
  Tensor detach() const { return from(shape(), std::vector<T>(data().begin(), data().end())); }

 private:
  std::shared_ptr<Node<T>> node_;
};

// Ordered record of executed primitive ops. While a tape is active on the
// current thread (see TapeScope), every op counts its forward FLOPs here and
// records itself if any input requires a gradient.
template <class T>
class Tape {
 public:
  Tape() : alloc_origin_(memory_stats().total_allocated) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  ~Tape() {
    if (current() == this) current() = nullptr;
  }

  static Tape*& current() {
    thread_local Tape* active = nullptr;
    return active;
  }

  void record(std::shared_ptr<Node<T>> node) { ops_.push_back(std::move(node)); }
  void add_flops(std::uint64_t n) { flops_ += n; }

  std::uint64_t flops() const { return flops_; }
  void reset_flops() { flops_ = 0; }
  std::size_t size() const { return ops_.size(); }
  std::string_view op_name(std::size_t i) const { return ops_.at(i)->op; }
  // Cumulative tensor bytes allocated on this thread since the tape was created.
  std::int64_t allocated_bytes() const { return memory_stats().total_allocated - alloc_origin_; }

  // Seeds d(loss)/d(loss) = 1 and runs every recorded op's backward once, in
  // reverse execution order. Returns the number of ops visited.
  std::size_t backward(const Tensor<T>& loss) {
    if (loss.numel() != 1) {
      throw DimensionError("backward() needs a scalar loss, got " + shape_to_string(loss.shape()));
    }
    loss.node()->grad_data()[0] += T{1};
    std::size_t visited = 0;
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
      Node<T>& node = **it;
      ++visited;
      if (!node.grad.empty() && node.backward) node.backward(node);
    }
    return visited;
  }

  // Drops the recorded graph, releasing intermediate values and gradients.
  void clear() { ops_.clear(); }

 private:
  std::vector<std::shared_ptr<Node<T>>> ops_;
  std::uint64_t flops_ = 0;
  std::int64_t alloc_origin_;
};

template <class T>
class TapeScope {
 public:
  explicit TapeScope(Tape<T>& tape) : previous_(Tape<T>::current()) { Tape<T>::current() = &tape; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;
  ~TapeScope() { Tape<T>::current() = previous_; }

 private:
  Tape<T>* previous_;
};

// Temporarily disables recording (and FLOP counting) on this thread.
template <class T>
class NoGradScope {
 public:
  NoGradScope() : previous_(Tape<T>::current()) { Tape<T>::current() = nullptr; }
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;
  ~NoGradScope() { Tape<T>::current() = previous_; }

 private:
  Tape<T>* previous_;
};

}  // namespace me2et::num
