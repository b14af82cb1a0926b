#include "transcoder/experiments/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "transcoder/data/corpus.hpp"
#include "transcoder/data/minilang.hpp"
#include "transcoder/errors.hpp"
#include "transcoder/util/hash.hpp"

namespace transcoder::experiments {

namespace {

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

nlohmann::ordered_json to_ordered(const nlohmann::json& j) { return nlohmann::ordered_json::parse(j.dump()); }

SuiteConfig suite_from_json(const nlohmann::json& j, const std::string& where) {
  SuiteConfig s;
  read_object(j, where, [&](const std::string& key, const nlohmann::json& v) {
    if (key == "tag") s.tag = v.get<std::string>();
    else if (key == "sources") s.sources = v.get<std::vector<std::string>>();
    else if (key == "target") s.target = v.get<std::string>();
    else if (key == "target_train") s.target_train = v.get<std::size_t>();
    else if (key == "rates") s.rates = v.get<std::vector<double>>();
    else if (key == "orders") s.orders = v.get<std::vector<std::vector<std::string>>>();
    else return false;
    return true;
  });
  return s;
}

nlohmann::ordered_json suite_to_json(const SuiteConfig& s) {
  return {{"tag", s.tag},           {"sources", s.sources}, {"target", s.target},
          {"target_train", s.target_train}, {"rates", s.rates},     {"orders", s.orders}};
}

JsonlTask jsonl_from_json(const nlohmann::json& j) {
  JsonlTask t;
  read_object(j, "data.jsonl entry", [&](const std::string& key, const nlohmann::json& v) {
    if (key == "task_id") t.task_id = v.get<std::string>();
    else if (key == "kind") t.kind = v.get<std::string>();
    else if (key == "source_language") t.source_language = v.get<std::string>();
    else if (key == "target_language") {
      if (!v.is_null()) t.target_language = v.get<std::string>();
    } else if (key == "train") t.train = v.get<std::string>();
    else if (key == "dev") t.dev = v.get<std::string>();
    else if (key == "test") t.test = v.get<std::string>();
    else return false;
    return true;
  });
  return t;
}

}  // namespace

ExperimentConfig ExperimentConfig::defaults() {
  ExperimentConfig c;
  c.model.vocab_size = 0;
  const std::vector<std::string> sum_cls = {"summarization-alpha", "classification-alpha"};
  c.suites["cross-task"] = {"Trans+CLS2Sum", {"translation-alpha", "classification-alpha"}, "summarization-alpha",
                            300, {}, {}};
  c.suites["cross-language"] = {
      "Alpha2Beta-Sum", {"summarization-alpha", "translation-alpha", "classification-alpha"}, "summarization-beta",
      0, {}, {}};
  c.suites["ablation"] = {"Sum+CLS2CLS", sum_cls, "classification-beta", 300, {}, {}};
  c.suites["order"] = {"Sum+CLS2CLS", sum_cls, "classification-beta", 300, {},
                       {sum_cls, {"classification-alpha", "summarization-alpha"}}};
  c.suites["low-resource"] = {"Sum+CLS2Sum", sum_cls, "summarization-beta", 0, {0.05, 0.10, 0.20}, {}};
  return c;
}

void ExperimentConfig::validate() const {
  if (schema_version != kSchemaVersion) {
    throw ConfigError("unsupported schema_version " + std::to_string(schema_version) + " (expected " +
                      std::to_string(kSchemaVersion) + ")");
  }
  if (model.vocab_size != 0) model.validate();
  else resolved_model(1).validate();
  pretrain.validate();
  source.validate();
  target.validate();
  if (seeds.empty()) throw ConfigError("seeds must list at least one seed");
  if (output_dir.empty()) throw ConfigError("output_dir must not be empty");

  std::set<std::string> tasks;
  for (const auto& lang : data.languages) {
    data::minilang::parse_language(lang);
    const auto it = data.sizes.find(lang);
    if (it == data.sizes.end()) throw ConfigError("data.sizes has no entry for language '" + lang + "'");
    if (it->second.train == 0 || it->second.dev == 0 || it->second.test == 0) {
      throw ConfigError("data.sizes." + lang + ": every split needs at least one example");
    }
    for (const auto& kind : data.kinds) tasks.insert(data::default_task_id(data::parse_task_kind(kind), lang));
  }
  for (const auto& t : data.jsonl) {
    data::TaskSpec spec{t.task_id, data::parse_task_kind(t.kind), t.source_language, t.target_language, t.train};
    spec.validate();
    if (t.train.empty() || t.dev.empty() || t.test.empty()) {
      throw ConfigError("jsonl task " + t.task_id + " needs train, dev and test files");
    }
    if (!tasks.insert(t.task_id).second) throw ConfigError("task id " + t.task_id + " is defined twice");
  }
  for (const auto& [name, s] : suites) {
    if (std::find(kSuiteNames.begin(), kSuiteNames.end(), name) == kSuiteNames.end()) {
      throw ConfigError("unknown suite '" + name + "'");
    }
    if (s.sources.empty()) throw ConfigError("suite " + name + " lists no source tasks");
    for (const auto& id : s.sources) {
      if (!tasks.contains(id)) throw ConfigError("suite " + name + ": unknown source task '" + id + "'");
    }
    if (!tasks.contains(s.target)) throw ConfigError("suite " + name + ": unknown target task '" + s.target + "'");
    for (const auto r : s.rates) {
      if (!(r > 0.0 && r <= 1.0)) throw ConfigError("suite " + name + ": rates must lie in (0, 1]");
    }
    for (const auto& order : s.orders) {
      if (std::set<std::string>(order.begin(), order.end()) != std::set<std::string>(s.sources.begin(), s.sources.end()) ||
          order.size() != s.sources.size()) {
        throw ConfigError("suite " + name + ": every order must be a permutation of its sources");
      }
    }
  }
}

const SuiteConfig& ExperimentConfig::suite(const std::string& name) const {
  const auto it = suites.find(name);
  if (it == suites.end()) throw ConfigError("no suite named '" + name + "' in the config");
  return it->second;
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  auto c = defaults();
  read_object(j, "config", [&](const std::string& key, const nlohmann::json& v) {
    if (key == "schema_version") c.schema_version = v.get<int>();
    else if (key == "model") {
      auto merged = c.model.to_json();
      merged.update(v);
      c.model = model::ModelConfig::from_json(merged);
    } else if (key == "pretrain") {
      auto merged = c.pretrain.to_json();
      merged.update(to_ordered(v));
      c.pretrain = train::PretrainPlan::from_json(nlohmann::json::parse(merged.dump()));
    } else if (key == "source") {
      auto merged = c.source.to_json();
      merged.update(to_ordered(v));
      c.source = train::SourceTrainPlan::from_json(nlohmann::json::parse(merged.dump()));
    } else if (key == "target") {
      auto merged = c.target.to_json();
      merged.update(to_ordered(v));
      c.target = train::TargetPlan::from_json(nlohmann::json::parse(merged.dump()));
    } else if (key == "data") {
      read_object(v, "data", [&](const std::string& dk, const nlohmann::json& dv) {
        if (dk == "seed") c.data.seed = dv.get<std::uint64_t>();
        else if (dk == "languages") c.data.languages = dv.get<std::vector<std::string>>();
        else if (dk == "kinds") c.data.kinds = dv.get<std::vector<std::string>>();
        else if (dk == "sizes") {
          for (const auto& [lang, sv] : dv.items()) {
            auto& sizes = c.data.sizes[lang];
            read_object(sv, "data.sizes." + lang, [&](const std::string& sk, const nlohmann::json& n) {
              if (sk == "train") sizes.train = n.get<std::size_t>();
              else if (sk == "dev") sizes.dev = n.get<std::size_t>();
              else if (sk == "test") sizes.test = n.get<std::size_t>();
              else return false;
              return true;
            });
          }
        } else if (dk == "jsonl") {
          c.data.jsonl.clear();
          for (const auto& entry : dv) c.data.jsonl.push_back(jsonl_from_json(entry));
        } else return false;
        return true;
      });
    } else if (key == "suites") {
      if (!v.is_object()) throw ConfigError("suites must be a JSON object");
      c.suites.clear();
      for (const auto& [name, sv] : v.items()) c.suites[name] = suite_from_json(sv, "suites." + name);
    } else if (key == "seeds") c.seeds = v.get<std::vector<std::uint64_t>>();
    else if (key == "output_dir") c.output_dir = v.get<std::string>();
    else return false;
    return true;
  });
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return from_json(j);
}

nlohmann::ordered_json ExperimentConfig::to_json() const {
  nlohmann::ordered_json j;
  j["schema_version"] = schema_version;
  j["model"] = to_ordered(model.to_json());
  nlohmann::ordered_json sizes = nlohmann::ordered_json::object();
  for (const auto& [lang, s] : data.sizes) sizes[lang] = {{"train", s.train}, {"dev", s.dev}, {"test", s.test}};
  nlohmann::ordered_json jsonl = nlohmann::ordered_json::array();
  for (const auto& t : data.jsonl) {
    jsonl.push_back({{"task_id", t.task_id},
                     {"kind", t.kind},
                     {"source_language", t.source_language},
                     {"target_language", t.target_language ? nlohmann::ordered_json(*t.target_language)
                                                           : nlohmann::ordered_json()},
                     {"train", t.train},
                     {"dev", t.dev},
                     {"test", t.test}});
  }
  j["data"] = {{"seed", data.seed}, {"languages", data.languages}, {"kinds", data.kinds}, {"sizes", sizes},
               {"jsonl", jsonl}};
  j["pretrain"] = pretrain.to_json();
  j["source"] = source.to_json();
  j["target"] = target.to_json();
  nlohmann::ordered_json suites_json = nlohmann::ordered_json::object();
  for (const auto& [name, s] : suites) suites_json[name] = suite_to_json(s);
  j["suites"] = suites_json;
  j["seeds"] = seeds;
  j["output_dir"] = output_dir;
  return j;
}

std::string ExperimentConfig::fingerprint() const {
  // nlohmann::json sorts keys, which makes the dump canonical.
  auto canonical = nlohmann::json::parse(to_json().dump());
  canonical.erase("output_dir");
  return util::to_hex(util::fnv1a(canonical.dump()));
}

model::ModelConfig ExperimentConfig::resolved_model(std::size_t vocab_size) const {
  auto m = model;
  if (m.vocab_size == 0) m.vocab_size = vocab_size;
  if (m.vocab_size < vocab_size) {
    throw ConfigError("model.vocab_size " + std::to_string(m.vocab_size) + " is smaller than the vocabulary (" +
                      std::to_string(vocab_size) + ")");
  }
  return m;
}

}  // namespace transcoder::experiments
