#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "transcoder/data/vocab.hpp"

namespace transcoder::data {

enum class TaskKind { Summarization, Translation, Classification };

std::string_view to_string(TaskKind kind);
/// Throws ConfigError for unknown names.
TaskKind parse_task_kind(std::string_view name);

struct TaskSpec {
  std::string task_id;
  TaskKind kind = TaskKind::Summarization;
  std::string source_language;
  std::optional<std::string> target_language;
  std::string dataset_path;

  /// Throws ConfigError when a translation task lacks a target language or
  /// the id is empty.
  void validate() const;
  [[nodiscard]] nlohmann::json to_json() const;
  static TaskSpec from_json(const nlohmann::json& j);
  friend bool operator==(const TaskSpec&, const TaskSpec&) = default;
};

/// Conventional id, e.g. "summarization-alpha".
std::string default_task_id(TaskKind kind, std::string_view language);

struct RawExample {
  std::string source;
  std::string target;
  friend bool operator==(const RawExample&, const RawExample&) = default;
};

/// Text-only corpus as produced by generation or read from disk, before a
/// vocabulary exists.
struct RawCorpus {
  TaskSpec task;
  std::vector<RawExample> train;
  std::vector<RawExample> dev;
  std::vector<RawExample> test;
  std::uint64_t seed = 0;

  friend bool operator==(const RawCorpus&, const RawCorpus&) = default;
};

struct Example {
  std::vector<TokenId> source_tokens;
  std::vector<TokenId> target_tokens;
  std::string raw_source;
  std::string raw_target;
};

struct Corpus {
  TaskSpec task;
  std::vector<Example> train;
  std::vector<Example> dev;
  std::vector<Example> test;
  std::uint64_t seed = 0;
  std::string vocab_checksum;
};

RawCorpus generate_minilang_corpus(std::string_view language, TaskKind kind, std::size_t n_train,
                                   std::size_t n_dev, std::size_t n_test, std::uint64_t seed);

/// Every whitespace token across all splits of all corpora.
Vocab build_vocab(std::span<const RawCorpus> corpora);

/// Throws DataError on empty sources or an empty train split.
Corpus encode_corpus(const RawCorpus& raw, const Vocab& vocab);
Example encode_example(const RawExample& raw, const Vocab& vocab);

/// Reads one JSONL file into RawExamples. Reports every malformed line.
std::vector<RawExample> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path, std::span<const RawExample> examples);

/// Whole file becomes the train split.
Corpus load_jsonl(const std::filesystem::path& path, const Vocab& vocab, const TaskSpec& task);

/// Keeps ceil(rate * |train|) training examples chosen uniformly without
/// replacement, in their original order. Throws ConfigError unless 0 < rate <= 1.
Corpus subsample(const Corpus& corpus, double rate, std::uint64_t seed);

/// Throws DataError if any raw_source appears in two splits.
void check_disjoint(const RawCorpus& corpus);

nlohmann::ordered_json manifest(const RawCorpus& corpus, const Vocab& vocab);

/// Layout: <dir>/{train,dev,test}.jsonl and <dir>/manifest.json.
/// `extra` fields are appended to the manifest.
void save_raw_corpus(const std::filesystem::path& dir, const RawCorpus& corpus, const Vocab& vocab,
                     const nlohmann::ordered_json& extra = nlohmann::ordered_json::object());
RawCorpus load_raw_corpus(const std::filesystem::path& dir);

}  // namespace transcoder::data
