#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "transcoder/model/config.hpp"
#include "transcoder/train/plans.hpp"

namespace transcoder::experiments {

inline constexpr int kSchemaVersion = 1;

struct SplitSizes {
  std::size_t train = 0;
  std::size_t dev = 0;
  std::size_t test = 0;
  friend bool operator==(const SplitSizes&, const SplitSizes&) = default;
};

/// User-supplied task read from JSONL files.
struct JsonlTask {
  std::string task_id;
  std::string kind;
  std::string source_language;
  std::optional<std::string> target_language;
  std::string train;
  std::string dev;
  std::string test;
  friend bool operator==(const JsonlTask&, const JsonlTask&) = default;
};

struct DataConfig {
  std::uint64_t seed = 1;
  std::vector<std::string> languages = {"alpha", "beta"};
  std::vector<std::string> kinds = {"summarization", "translation", "classification"};
  std::map<std::string, SplitSizes> sizes = {{"alpha", {8000, 300, 300}}, {"beta", {1200, 300, 300}}};
  std::vector<JsonlTask> jsonl;
  friend bool operator==(const DataConfig&, const DataConfig&) = default;
};

/// One scripted experiment: source tasks, a target task and its knobs.
struct SuiteConfig {
  std::string tag;  // <Source>2<Target> label carried into reports
  std::vector<std::string> sources;
  std::string target;
  std::size_t target_train = 0;  // keep the first n target training examples, 0 = all
  std::vector<double> rates;     // low-resource rates
  std::vector<std::vector<std::string>> orders;  // source orders for the order suite
  friend bool operator==(const SuiteConfig&, const SuiteConfig&) = default;
};

inline const std::vector<std::string> kSuiteNames = {"cross-task", "cross-language", "ablation", "order",
                                                     "low-resource"};

struct ExperimentConfig {
  int schema_version = kSchemaVersion;
  model::ModelConfig model;  // vocab_size 0 = size of the built vocabulary
  DataConfig data;
  train::PretrainPlan pretrain;
  train::SourceTrainPlan source;
  train::TargetPlan target;
  std::map<std::string, SuiteConfig> suites;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  std::string output_dir = "runs";

  /// Defaults, including the five suite presets.
  static ExperimentConfig defaults();

  /// Throws ConfigError.
  void validate() const;
  [[nodiscard]] const SuiteConfig& suite(const std::string& name) const;

  /// Unknown keys anywhere raise ConfigError; missing keys keep defaults.
  /// A "suites" object replaces the presets as a whole.
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::filesystem::path& path);
  [[nodiscard]] nlohmann::ordered_json to_json() const;

  /// Hash of the canonical (key-sorted, compact) JSON form.
  [[nodiscard]] std::string fingerprint() const;

  /// Model config with vocab_size filled in.
  [[nodiscard]] model::ModelConfig resolved_model(std::size_t vocab_size) const;

  [[nodiscard]] std::filesystem::path data_dir() const { return std::filesystem::path(output_dir) / "data"; }
  [[nodiscard]] std::filesystem::path base_dir() const { return std::filesystem::path(output_dir) / "base"; }
};

}  // namespace transcoder::experiments
