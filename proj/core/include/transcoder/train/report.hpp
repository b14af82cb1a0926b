#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "transcoder/errors.hpp"

namespace transcoder::train {

struct StepRecord {
  std::size_t epoch = 0;
  std::string task_id;
  std::size_t step = 0;  // global, starts at 1
  double loss = 0.0;
  friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

/// Dev-set measurement taken at the end of an epoch (target) or a task
/// segment (source).
struct EvalRecord {
  std::size_t epoch = 0;
  std::size_t step = 0;
  std::string task_id;
  std::string metric_name;
  double value = 0.0;
  double dev_loss = 0.0;
  friend bool operator==(const EvalRecord&, const EvalRecord&) = default;
};

struct TrainReport {
  std::string stage;  // "source", "target" or "pretrain"
  std::string config_fingerprint;
  std::map<std::string, std::uint64_t> seeds;
  std::vector<StepRecord> steps;
  std::vector<EvalRecord> epochs;
  std::vector<std::string> tags;
  nlohmann::ordered_json info = nlohmann::ordered_json::object();
  // Kept out of the serialized form so reruns produce identical bytes.
  double wall_time_seconds = 0.0;

  [[nodiscard]] bool has_tag(const std::string& tag) const;
  /// Throws StateError on non-finite losses or out-of-order steps.
  void validate() const;

  [[nodiscard]] nlohmann::ordered_json to_json() const;
  static TrainReport from_json(const nlohmann::json& j);
  [[nodiscard]] std::string serialize() const;
};

/// Carries the partial report of a run stopped by a non-finite loss.
class TrainingAborted : public NumericError {
 public:
  TrainingAborted(const std::string& what, TrainReport partial) : NumericError(what), report(std::move(partial)) {}
  TrainReport report;
};

}  // namespace transcoder::train
