#include "transcoder/autodiff/adam.hpp"

#include <cmath>

namespace transcoder::ad {

void AdamConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("adam: learning rate must be positive");
  if (!(beta1 > 0.0 && beta1 < 1.0)) throw ConfigError("adam: beta1 must lie in (0, 1)");
  if (!(beta2 > 0.0 && beta2 < 1.0)) throw ConfigError("adam: beta2 must lie in (0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("adam: epsilon must be positive");
}

template <typename T>
Adam<T>::Adam(AdamConfig config) : config_(config) {
  config_.validate();
}

template <typename T>
void Adam<T>::add_parameter(const DiffTensor<T>& param) {
  if (!param.defined()) throw StateError("adam: undefined parameter");
  if (!param.requires_grad()) throw StateError("adam: parameter does not require grad");
  for (const auto& slot : slots_) {
    if (slot.param.node() == param.node()) throw StateError("adam: parameter registered twice");
  }
  slots_.push_back(Slot{param, std::vector<T>(param.numel(), T(0)), std::vector<T>(param.numel(), T(0))});
}

template <typename T>
void Adam<T>::step() {
  for (std::size_t i = 0; i < slots_.size(); ++i) {
    if (!slots_[i].param.has_grad()) {
      throw StateError("adam: parameter #" + std::to_string(i) + " has no gradient");
    }
  }
  ++step_;
  const double t = static_cast<double>(step_);
  const T b1 = T(config_.beta1), b2 = T(config_.beta2);
  const T correction1 = T(1.0 - std::pow(config_.beta1, t));
  const T correction2 = T(1.0 - std::pow(config_.beta2, t));
  const T lr = T(config_.learning_rate), eps = T(config_.epsilon);
  for (auto& slot : slots_) {
    auto w = slot.param.mutable_data();
    const auto g = slot.param.grad();
    for (std::size_t j = 0; j < w.size(); ++j) {
      slot.m[j] = b1 * slot.m[j] + (T(1) - b1) * g[j];
      slot.v[j] = b2 * slot.v[j] + (T(1) - b2) * g[j] * g[j];
      const T m_hat = slot.m[j] / correction1;
      const T v_hat = slot.v[j] / correction2;
      w[j] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
    slot.param.clear_grad();
  }
}

template class Adam<float>;
template class Adam<double>;

}  // namespace transcoder::ad
