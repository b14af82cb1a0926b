#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace transcoder::train {

enum class VisitPolicy { Shuffled, Fixed };

struct SourceTrainPlan {
  std::size_t epochs = 2;
  std::size_t batches_per_epoch = 200;  // budget B, split across tasks each epoch
  std::size_t batch_size = 16;
  double learning_rate = 5e-4;
  double prefix_learning_rate = 0.0;  // 0 = same as learning_rate
  double delta = 1.0;
  VisitPolicy visit_policy = VisitPolicy::Shuffled;
  std::vector<std::string> order;  // task ids, used with VisitPolicy::Fixed
  std::size_t dev_examples = 64;   // per task segment, 0 = whole dev split

  void validate() const;
  [[nodiscard]] double effective_prefix_learning_rate() const {
    return prefix_learning_rate > 0.0 ? prefix_learning_rate : learning_rate;
  }
  [[nodiscard]] nlohmann::ordered_json to_json() const;
  static SourceTrainPlan from_json(const nlohmann::json& j);
  friend bool operator==(const SourceTrainPlan&, const SourceTrainPlan&) = default;
};

struct TargetPlan {
  std::size_t epochs = 10;
  std::size_t batch_size = 16;
  double learning_rate = 1e-4;
  double prefix_learning_rate = 0.0;  // 0 = same as learning_rate
  std::size_t dev_examples = 0;   // 0 = whole split
  std::size_t test_examples = 0;  // 0 = whole split
  std::size_t eval_batch_size = 32;

  void validate() const;
  [[nodiscard]] double effective_prefix_learning_rate() const {
    return prefix_learning_rate > 0.0 ? prefix_learning_rate : learning_rate;
  }
  [[nodiscard]] nlohmann::ordered_json to_json() const;
  static TargetPlan from_json(const nlohmann::json& j);
  friend bool operator==(const TargetPlan&, const TargetPlan&) = default;
};

struct PretrainPlan {
  std::size_t steps = 400;
  std::size_t batch_size = 16;
  double learning_rate = 1e-3;
  double mask_rate = 0.15;

  void validate() const;
  [[nodiscard]] nlohmann::ordered_json to_json() const;
  static PretrainPlan from_json(const nlohmann::json& j);
  friend bool operator==(const PretrainPlan&, const PretrainPlan&) = default;
};

}  // namespace transcoder::train
