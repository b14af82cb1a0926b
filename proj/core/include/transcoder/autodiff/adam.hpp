#pragma once

#include <vector>

#include "transcoder/autodiff/tensor.hpp"

namespace transcoder::ad {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

/// Bias-corrected Adam over a fixed, ordered parameter list.
///
/// Parameters are updated in registration order. step() consumes the
/// gradients (clears them) so a parameter that was not reached by the next
/// backward pass is reported as a missing gradient.
template <typename T>
class Adam {
 public:
  explicit Adam(AdamConfig config);

  void add_parameter(const DiffTensor<T>& param);

  void step();

  [[nodiscard]] std::size_t step_count() const noexcept { return step_; }
  [[nodiscard]] std::size_t parameter_count() const noexcept { return slots_.size(); }
  [[nodiscard]] const AdamConfig& config() const noexcept { return config_; }

  [[nodiscard]] std::span<const T> first_moment(std::size_t index) const { return slots_.at(index).m; }
  [[nodiscard]] std::span<const T> second_moment(std::size_t index) const { return slots_.at(index).v; }

 private:
  struct Slot {
    DiffTensor<T> param;
    std::vector<T> m;
    std::vector<T> v;
  };

  AdamConfig config_;
  std::vector<Slot> slots_;
  std::size_t step_ = 0;
};

}  // namespace transcoder::ad
