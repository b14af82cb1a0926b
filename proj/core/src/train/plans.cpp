#include "transcoder/train/plans.hpp"

#include <cmath>
#include <set>

#include "transcoder/errors.hpp"

namespace transcoder::train {

namespace {

void require_positive(std::size_t v, const std::string& where, const char* name) {
  if (v == 0) throw ConfigError(where + ": " + name + " must be >= 1");
}

void require_rate(double v, const std::string& where, const char* name) {
  if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(where + ": " + name + " must be positive and finite");
}

template <typename Assign>
void read_object(const nlohmann::json& j, const std::string& where, Assign&& assign) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    try {
      known = assign(key, value);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(where + ": bad value for '" + key + "': " + e.what());
    }
    if (!known) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

}  // namespace

void SourceTrainPlan::validate() const {
  const std::string where = "source plan";
  require_positive(epochs, where, "epochs");
  require_positive(batches_per_epoch, where, "batches_per_epoch");
  require_positive(batch_size, where, "batch_size");
  require_rate(learning_rate, where, "learning_rate");
  require_rate(delta, where, "delta");
  if (prefix_learning_rate < 0.0) throw ConfigError(where + ": prefix_learning_rate must be >= 0");
  if (visit_policy == VisitPolicy::Fixed) {
    if (order.empty()) throw ConfigError("source plan: fixed visit policy needs an order");
    if (std::set<std::string>(order.begin(), order.end()).size() != order.size()) {
      throw ConfigError("source plan: order lists a task more than once");
    }
  }
}

nlohmann::ordered_json SourceTrainPlan::to_json() const {
  return {{"epochs", epochs},
          {"batches_per_epoch", batches_per_epoch},
          {"batch_size", batch_size},
          {"learning_rate", learning_rate},
          {"prefix_learning_rate", prefix_learning_rate},
          {"delta", delta},
          {"visit_policy", visit_policy == VisitPolicy::Fixed ? "fixed" : "shuffled"},
          {"order", order},
          {"dev_examples", dev_examples}};
}

SourceTrainPlan SourceTrainPlan::from_json(const nlohmann::json& j) {
  SourceTrainPlan p;
  read_object(j, "source plan", [&](const std::string& key, const nlohmann::json& v) {
    if (key == "epochs") p.epochs = v.get<std::size_t>();
    else if (key == "batches_per_epoch") p.batches_per_epoch = v.get<std::size_t>();
    else if (key == "batch_size") p.batch_size = v.get<std::size_t>();
    else if (key == "learning_rate") p.learning_rate = v.get<double>();
    else if (key == "prefix_learning_rate") p.prefix_learning_rate = v.get<double>();
    else if (key == "delta") p.delta = v.get<double>();
    else if (key == "order") p.order = v.get<std::vector<std::string>>();
    else if (key == "dev_examples") p.dev_examples = v.get<std::size_t>();
    else if (key == "visit_policy") {
      const auto s = v.get<std::string>();
      if (s == "fixed") p.visit_policy = VisitPolicy::Fixed;
      else if (s == "shuffled") p.visit_policy = VisitPolicy::Shuffled;
      else throw ConfigError("source plan: visit_policy must be 'shuffled' or 'fixed', got '" + s + "'");
    } else return false;
    return true;
  });
  p.validate();
  return p;
}

void TargetPlan::validate() const {
  const std::string where = "target plan";
  require_positive(epochs, where, "epochs");
  require_positive(batch_size, where, "batch_size");
  require_positive(eval_batch_size, where, "eval_batch_size");
  require_rate(learning_rate, where, "learning_rate");
  if (prefix_learning_rate < 0.0) throw ConfigError(where + ": prefix_learning_rate must be >= 0");
}

nlohmann::ordered_json TargetPlan::to_json() const {
  return {{"epochs", epochs},
          {"batch_size", batch_size},
          {"learning_rate", learning_rate},
          {"prefix_learning_rate", prefix_learning_rate},
          {"dev_examples", dev_examples},
          {"test_examples", test_examples},
          {"eval_batch_size", eval_batch_size}};
}

TargetPlan TargetPlan::from_json(const nlohmann::json& j) {
  TargetPlan p;
  read_object(j, "target plan", [&](const std::string& key, const nlohmann::json& v) {
    if (key == "epochs") p.epochs = v.get<std::size_t>();
    else if (key == "batch_size") p.batch_size = v.get<std::size_t>();
    else if (key == "learning_rate") p.learning_rate = v.get<double>();
    else if (key == "prefix_learning_rate") p.prefix_learning_rate = v.get<double>();
    else if (key == "dev_examples") p.dev_examples = v.get<std::size_t>();
    else if (key == "test_examples") p.test_examples = v.get<std::size_t>();
    else if (key == "eval_batch_size") p.eval_batch_size = v.get<std::size_t>();
    else return false;
    return true;
  });
  p.validate();
  return p;
}

void PretrainPlan::validate() const {
  const std::string where = "pretrain plan";
  require_positive(batch_size, where, "batch_size");
  require_rate(learning_rate, where, "learning_rate");
  if (!(mask_rate > 0.0 && mask_rate < 1.0)) throw ConfigError("pretrain plan: mask_rate must be in (0, 1)");
}

nlohmann::ordered_json PretrainPlan::to_json() const {
  return {{"steps", steps}, {"batch_size", batch_size}, {"learning_rate", learning_rate}, {"mask_rate", mask_rate}};
}

PretrainPlan PretrainPlan::from_json(const nlohmann::json& j) {
  PretrainPlan p;
  read_object(j, "pretrain plan", [&](const std::string& key, const nlohmann::json& v) {
    if (key == "steps") p.steps = v.get<std::size_t>();
    else if (key == "batch_size") p.batch_size = v.get<std::size_t>();
    else if (key == "learning_rate") p.learning_rate = v.get<double>();
    else if (key == "mask_rate") p.mask_rate = v.get<double>();
    else return false;
    return true;
  });
  p.validate();
  return p;
}

}  // namespace transcoder::train
