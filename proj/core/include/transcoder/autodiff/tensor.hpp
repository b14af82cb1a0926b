#pragma once

#include <algorithm>
#include <cstddef>
#include <initializer_list>
#include <memory>
#include <new>
#include <span>
#include <string>
#include <vector>

#include "transcoder/errors.hpp"

namespace transcoder::ad {

using Shape = std::vector<std::size_t>;

/// Number of elements described by a shape; the empty shape is a scalar.
inline std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape);

/// Cache-line aligned storage. Vectorized reductions peel according to the
/// start address, so a fixed alignment keeps summation order (and results)
/// identical from run to run.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};

  AlignedAllocator() noexcept = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlignment)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlignment); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

template <typename T>
using Buffer = std::vector<T, AlignedAllocator<T>>;

template <typename T>
struct TensorNode {
  Shape shape;
  Buffer<T> data;
  Buffer<T> grad;  // empty until a backward pass reaches this node
  bool requires_grad = false;
};

/// Shared handle to a dense row-major array that can take part in a tape.
///
/// Copies of a DiffTensor alias the same storage. Parameters are long-lived
/// handles with requires_grad set; intermediates are created by ops.
template <typename T>
class DiffTensor {
 public:
  DiffTensor() = default;

  static DiffTensor zeros(Shape shape, bool requires_grad = false) {
    const std::size_t n = ad::numel(shape);
    return from(std::move(shape), Buffer<T>(n, T(0)), requires_grad);
  }
  static DiffTensor from(Shape shape, Buffer<T> data, bool requires_grad = false) {
    if (ad::numel(shape) != data.size()) {
      throw ShapeError("tensor data length " + std::to_string(data.size()) + " does not match shape " +
                       to_string(shape));
    }
    DiffTensor t;
    t.node_ = std::make_shared<TensorNode<T>>();
    t.node_->shape = std::move(shape);
    t.node_->data = std::move(data);
    t.node_->requires_grad = requires_grad;
    return t;
  }
  static DiffTensor from(Shape shape, std::span<const T> data, bool requires_grad = false) {
    return from(std::move(shape), Buffer<T>(data.begin(), data.end()), requires_grad);
  }
  static DiffTensor from(Shape shape, const std::vector<T>& data, bool requires_grad = false) {
    return from(std::move(shape), std::span<const T>(data), requires_grad);
  }
  static DiffTensor from(Shape shape, std::initializer_list<T> data, bool requires_grad = false) {
    return from(std::move(shape), Buffer<T>(data), requires_grad);
  }
  [[nodiscard]] bool defined() const noexcept { return node_ != nullptr; }
  [[nodiscard]] const Shape& shape() const { return node_->shape; }
  [[nodiscard]] std::size_t rank() const { return node_->shape.size(); }
  [[nodiscard]] std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  [[nodiscard]] std::size_t numel() const { return node_->data.size(); }

  [[nodiscard]] std::span<T> data() { return node_->data; }
  [[nodiscard]] std::span<const T> data() const { return node_->data; }
  [[nodiscard]] std::span<T> mutable_data() const { return node_->data; }

  [[nodiscard]] bool has_grad() const { return !node_->grad.empty() || node_->data.empty(); }
  [[nodiscard]] std::span<const T> grad() const { return node_->grad; }
  [[nodiscard]] std::span<T> mutable_grad() const { return node_->grad; }
  void clear_grad() const { node_->grad.clear(); }

  [[nodiscard]] bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool value) const { node_->requires_grad = value; }

  [[nodiscard]] T item() const {
    if (numel() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape()));
    return node_->data[0];
  }

  /// Deep copy detached from any tape.
  [[nodiscard]] DiffTensor clone() const { return from(shape(), node_->data, requires_grad()); }

  [[nodiscard]] TensorNode<T>* node() const noexcept { return node_.get(); }
  [[nodiscard]] const std::shared_ptr<TensorNode<T>>& shared() const noexcept { return node_; }

 private:
  std::shared_ptr<TensorNode<T>> node_;
};

}  // namespace transcoder::ad
