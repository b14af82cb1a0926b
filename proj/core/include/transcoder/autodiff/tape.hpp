#pragma once

#include <functional>
#include <vector>

#include "transcoder/autodiff/tensor.hpp"

namespace transcoder::ad {

/// Ordered record of differentiable operations.
///
/// Ops append their backward rule as they execute, so the record is always in
/// topological order. A tape supports exactly one backward pass; afterwards it
/// is consumed and rejects both further recording and a second backward.
/// A tape constructed with `recording = false` records nothing (inference).
template <typename T>
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  [[nodiscard]] bool recording() const noexcept { return recording_ && !consumed_; }
  [[nodiscard]] bool consumed() const noexcept { return consumed_; }
  [[nodiscard]] std::size_t size() const noexcept { return ops_.size(); }

  void record(std::function<void()> backward_rule) {
    if (consumed_) throw StateError("cannot record onto a consumed tape");
    ops_.push_back(std::move(backward_rule));
  }

  /// Seeds d(loss)/d(loss) = 1 and runs every recorded rule in reverse.
  void backward(const DiffTensor<T>& loss) {
    if (consumed_) throw StateError("backward called twice on the same tape");
    if (!loss.defined() || loss.numel() != 1) throw ShapeError("backward requires a scalar loss");
    if (!loss.requires_grad()) throw StateError("loss does not depend on any trainable tensor");
    consumed_ = true;
    auto& g = loss.node()->grad;
    g.assign(1, T(1));
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
    ops_.clear();
    ops_.shrink_to_fit();
  }

 private:
  std::vector<std::function<void()>> ops_;
  bool recording_;
  bool consumed_ = false;
};

}  // namespace transcoder::ad
