#include "transcoder/train/report.hpp"

#include <algorithm>
#include <cmath>

namespace transcoder::train {

bool TrainReport::has_tag(const std::string& tag) const {
  return std::find(tags.begin(), tags.end(), tag) != tags.end();
}

void TrainReport::validate() const {
  std::size_t last = 0;
  for (const auto& s : steps) {
    if (!std::isfinite(s.loss)) throw StateError("report has a non-finite loss at step " + std::to_string(s.step));
    if (s.step <= last) throw StateError("report steps are not strictly increasing at step " + std::to_string(s.step));
    last = s.step;
  }
}

nlohmann::ordered_json TrainReport::to_json() const {
  nlohmann::ordered_json j;
  j["stage"] = stage;
  j["config_fingerprint"] = config_fingerprint;
  j["seeds"] = nlohmann::ordered_json::object();
  for (const auto& [name, seed] : seeds) j["seeds"][name] = seed;
  j["tags"] = tags;
  j["info"] = info;
  auto& steps_json = j["steps"] = nlohmann::ordered_json::array();
  for (const auto& s : steps) {
    steps_json.push_back({{"epoch", s.epoch}, {"task_id", s.task_id}, {"step", s.step}, {"loss", s.loss}});
  }
  auto& epochs_json = j["epochs"] = nlohmann::ordered_json::array();
  for (const auto& e : epochs) {
    epochs_json.push_back({{"epoch", e.epoch},
                           {"step", e.step},
                           {"task_id", e.task_id},
                           {"metric_name", e.metric_name},
                           {"value", e.value},
                           {"dev_loss", e.dev_loss}});
  }
  return j;
}

TrainReport TrainReport::from_json(const nlohmann::json& j) {
  TrainReport r;
  try {
    r.stage = j.at("stage").get<std::string>();
    r.config_fingerprint = j.at("config_fingerprint").get<std::string>();
    for (const auto& [name, seed] : j.at("seeds").items()) r.seeds[name] = seed.get<std::uint64_t>();
    r.tags = j.at("tags").get<std::vector<std::string>>();
    r.info = nlohmann::ordered_json::parse(j.at("info").dump());
    for (const auto& s : j.at("steps")) {
      r.steps.push_back({s.at("epoch").get<std::size_t>(), s.at("task_id").get<std::string>(),
                         s.at("step").get<std::size_t>(), s.at("loss").get<double>()});
    }
    for (const auto& e : j.at("epochs")) {
      r.epochs.push_back({e.at("epoch").get<std::size_t>(), e.at("step").get<std::size_t>(),
                          e.at("task_id").get<std::string>(), e.at("metric_name").get<std::string>(),
                          e.at("value").get<double>(), e.at("dev_loss").get<double>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed train report: ") + e.what());
  }
  return r;
}

std::string TrainReport::serialize() const { return to_json().dump(1) + "\n"; }

}  // namespace transcoder::train
