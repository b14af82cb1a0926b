#pragma once

#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "transcoder/data/corpus.hpp"
#include "transcoder/model/backbone.hpp"
#include "transcoder/model/prefix.hpp"

namespace transcoder::metrics {

using TokenSeq = std::vector<TokenId>;

/// Corpus-level BLEU-4 in [0, 100]. Unigram precision is unsmoothed; orders
/// 2-4 use add-one smoothing. Brevity penalty exp(1 - r/c) when c < r.
/// Throws DataError on empty input or mismatched counts.
double bleu4_smoothed(std::span<const TokenSeq> hypotheses, std::span<const TokenSeq> references);

/// Fraction of exactly equal entries. Throws DataError on empty input or
/// mismatched counts.
template <typename Label>
double accuracy(std::span<const Label> predicted, std::span<const Label> gold);

struct EvalResult {
  std::string task_id;
  std::string metric;  // "bleu4" or "accuracy"
  double value = 0.0;
  std::size_t n_examples = 0;

  [[nodiscard]] nlohmann::ordered_json to_json() const;
  static EvalResult from_json(const nlohmann::json& j);
  friend bool operator==(const EvalResult&, const EvalResult&) = default;
};

std::string metric_name(data::TaskKind kind);

struct EvalOptions {
  std::size_t batch_size = 32;
  std::size_t max_examples = 0;  // 0 evaluates the whole split
};

/// Greedy-decodes every example. Generation kinds are scored with BLEU over
/// the target body (BOS/EOS stripped); classification compares the first
/// generated token, restricted to the label set, with the gold label.
template <typename T>
EvalResult evaluate(const model::Backbone<T>& backbone, const model::PrefixBank<T>* prefix,
                    std::span<const data::Example> examples, const data::TaskSpec& task, const data::Vocab& vocab,
                    EvalOptions options = {});

/// Fixed-width text table, one row per result.
std::string format_table(std::span<const EvalResult> results);

}  // namespace transcoder::metrics
