#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "transcoder/data/corpus.hpp"
#include "transcoder/data/vocab.hpp"
#include "transcoder/experiments/config.hpp"
#include "transcoder/model/checkpoint.hpp"
#include "transcoder/train/pretrain.hpp"
#include "transcoder/train/trainer.hpp"

namespace transcoder::experiments {

/// Everything a suite needs: encoded corpora, the shared vocabulary and the
/// pretrained base backbone.
struct Workspace {
  ExperimentConfig config;
  data::Vocab vocab;
  std::map<std::string, data::Corpus> corpora;
  model::ModelConfig model;
  train::Backbone base;

  /// Throws ConfigError for an unknown task id.
  [[nodiscard]] const data::Corpus& corpus(const std::string& task_id) const;
  [[nodiscard]] std::vector<data::Corpus> corpora_for(const std::vector<std::string>& task_ids) const;
};

/// Hash of the data section; guards generated data against config drift.
std::string data_fingerprint(const ExperimentConfig& config);
/// Hash of the data, backbone and pretrain settings; guards the base snapshot.
std::string base_fingerprint(const ExperimentConfig& config);

/// Seed used to generate one task's corpus.
std::uint64_t corpus_seed(const ExperimentConfig& config, const std::string& task_id);

/// Generated mini-language corpora followed by the configured JSONL tasks.
std::vector<data::RawCorpus> make_raw_corpora(const ExperimentConfig& config);

std::map<std::string, data::Corpus> encode_all(std::span<const data::RawCorpus> raws, const data::Vocab& vocab);

/// Distinct training-split programs of every corpus, in corpus order.
std::vector<std::vector<TokenId>> unimodal_programs(const std::map<std::string, data::Corpus>& corpora);

train::PretrainResult pretrain_base(const ExperimentConfig& config, const data::Vocab& vocab,
                                    const std::map<std::string, data::Corpus>& corpora);

/// Generates, encodes and pretrains in memory.
Workspace build_workspace(const ExperimentConfig& config);

/// Keeps the first n training examples (all when n is 0 or exceeds the split).
data::Corpus take_train(const data::Corpus& corpus, std::size_t n);

// On-disk layout under config.output_dir:
//   config.json
//   data/vocab.json, data/<task>/{train,dev,test}.jsonl + manifest.json
//   base/backbone.json, base/report.json
//   source/<name>/{prefix.json,report.json}
//   target/<name>/{backbone.json,prefix.json,report.json}
//   suites/<suite>/{summary.json,table.txt,reports/*.json}
// Every JSON artifact carries "experiment_fingerprint".

inline constexpr const char* kFingerprintKey = "experiment_fingerprint";

/// Throws DataError if the data directory exists and `force` is false.
void write_data(const ExperimentConfig& config, std::span<const data::RawCorpus> raws, const data::Vocab& vocab,
                bool force);
/// Throws DataError when data is missing or was produced by another config.
std::vector<data::RawCorpus> read_data(const ExperimentConfig& config, data::Vocab& vocab);

void write_json(const std::filesystem::path& path, const nlohmann::ordered_json& j);
nlohmann::json read_json(const std::filesystem::path& path);

/// Saves a checkpoint whose metadata records the fingerprint and `seeds`.
void save_checkpoint(const std::filesystem::path& path, model::Checkpoint checkpoint, const ExperimentConfig& config,
                     const std::map<std::string, std::uint64_t>& seeds);
void save_report(const std::filesystem::path& path, train::TrainReport report, const ExperimentConfig& config);

/// Loads data and the base snapshot written by gen-data and pretrain-base.
Workspace load_workspace(const ExperimentConfig& config);

struct VerifyIssue {
  std::filesystem::path path;
  std::string problem;
};

/// Walks output_dir and recomputes every fingerprint and checksum.
std::vector<VerifyIssue> verify_outputs(const ExperimentConfig& config);

}  // namespace transcoder::experiments
