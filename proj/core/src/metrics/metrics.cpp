#include "transcoder/metrics/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>

#include "transcoder/errors.hpp"
#include "transcoder/model/transformer.hpp"

namespace transcoder::metrics {

namespace {

using NgramCounts = std::map<std::vector<TokenId>, std::size_t>;

NgramCounts ngrams(const TokenSeq& seq, std::size_t n) {
  NgramCounts counts;
  if (seq.size() < n) return counts;
  for (std::size_t i = 0; i + n <= seq.size(); ++i) ++counts[TokenSeq(seq.begin() + i, seq.begin() + i + n)];
  return counts;
}

TokenSeq strip_markers(const TokenSeq& seq) {
  TokenSeq out;
  for (const auto id : seq) {
    if (id == kEosId) break;
    if (id == kBosId || id == kPadId) continue;
    out.push_back(id);
  }
  return out;
}

}  // namespace

double bleu4_smoothed(std::span<const TokenSeq> hypotheses, std::span<const TokenSeq> references) {
  if (hypotheses.empty()) throw DataError("BLEU needs at least one hypothesis");
  if (hypotheses.size() != references.size()) {
    throw DataError("BLEU: " + std::to_string(hypotheses.size()) + " hypotheses vs " +
                    std::to_string(references.size()) + " references");
  }
  std::array<double, 4> matches{}, totals{};
  double hyp_len = 0.0, ref_len = 0.0;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    const auto& hyp = hypotheses[i];
    const auto& ref = references[i];
    if (ref.empty()) throw DataError("BLEU: reference " + std::to_string(i) + " is empty");
    hyp_len += static_cast<double>(hyp.size());
    ref_len += static_cast<double>(ref.size());
    for (std::size_t n = 1; n <= 4; ++n) {
      const auto h = ngrams(hyp, n);
      const auto r = ngrams(ref, n);
      for (const auto& [gram, count] : h) {
        totals[n - 1] += static_cast<double>(count);
        const auto it = r.find(gram);
        if (it != r.end()) matches[n - 1] += static_cast<double>(std::min(count, it->second));
      }
    }
  }
  if (matches[0] == 0.0) return 0.0;
  double log_precision = std::log(matches[0] / totals[0]);
  for (std::size_t n = 1; n < 4; ++n) log_precision += std::log((matches[n] + 1.0) / (totals[n] + 1.0));
  const double brevity = hyp_len < ref_len ? 1.0 - ref_len / hyp_len : 0.0;
  return 100.0 * std::exp(brevity + log_precision / 4.0);
}

template <typename Label>
double accuracy(std::span<const Label> predicted, std::span<const Label> gold) {
  if (predicted.empty()) throw DataError("accuracy needs at least one prediction");
  if (predicted.size() != gold.size()) throw DataError("accuracy: prediction and gold counts differ");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) hits += predicted[i] == gold[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(predicted.size());
}

template double accuracy<int>(std::span<const int>, std::span<const int>);
template double accuracy<std::string>(std::span<const std::string>, std::span<const std::string>);

nlohmann::ordered_json EvalResult::to_json() const {
  return {{"task_id", task_id}, {"metric", metric}, {"value", value}, {"n_examples", n_examples}};
}

EvalResult EvalResult::from_json(const nlohmann::json& j) {
  try {
    return {j.at("task_id").get<std::string>(), j.at("metric").get<std::string>(), j.at("value").get<double>(),
            j.at("n_examples").get<std::size_t>()};
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed eval result: ") + e.what());
  }
}

std::string metric_name(data::TaskKind kind) { return kind == data::TaskKind::Classification ? "accuracy" : "bleu4"; }

template <typename T>
EvalResult evaluate(const model::Backbone<T>& backbone, const model::PrefixBank<T>* prefix,
                    std::span<const data::Example> examples, const data::TaskSpec& task, const data::Vocab& vocab,
                    EvalOptions options) {
  if (options.max_examples > 0 && examples.size() > options.max_examples) {
    examples = examples.first(options.max_examples);
  }
  if (examples.empty()) throw DataError("evaluation split for " + task.task_id + " is empty");
  if (options.batch_size == 0) throw ConfigError("evaluation batch_size must be positive");

  const bool classify = task.kind == data::TaskKind::Classification;
  const auto labels = vocab.label_ids();
  const std::size_t max_len = classify ? 1 : backbone.config().max_target_len - 1;

  std::vector<TokenSeq> hyps, refs;
  hyps.reserve(examples.size());
  refs.reserve(examples.size());
  for (std::size_t start = 0; start < examples.size(); start += options.batch_size) {
    const auto chunk = examples.subspan(start, std::min(options.batch_size, examples.size() - start));
    std::vector<TokenSeq> sources;
    sources.reserve(chunk.size());
    for (const auto& ex : chunk) sources.push_back(ex.source_tokens);
    auto out = model::generate_greedy(backbone, prefix, sources, max_len,
                                      classify ? std::span<const TokenId>(labels) : std::span<const TokenId>());
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      hyps.push_back(strip_markers(out[i]));
      refs.push_back(strip_markers(chunk[i].target_tokens));
    }
  }

  EvalResult result{task.task_id, metric_name(task.kind), 0.0, examples.size()};
  if (classify) {
    std::vector<int> predicted, gold;
    for (std::size_t i = 0; i < hyps.size(); ++i) {
      predicted.push_back(hyps[i].empty() ? -1 : hyps[i].front());
      gold.push_back(refs[i].empty() ? -2 : refs[i].front());
    }
    result.value = accuracy<int>(predicted, gold);
  } else {
    result.value = bleu4_smoothed(hyps, refs);
  }
  return result;
}

template EvalResult evaluate<float>(const model::Backbone<float>&, const model::PrefixBank<float>*,
                                    std::span<const data::Example>, const data::TaskSpec&, const data::Vocab&,
                                    EvalOptions);
template EvalResult evaluate<double>(const model::Backbone<double>&, const model::PrefixBank<double>*,
                                     std::span<const data::Example>, const data::TaskSpec&, const data::Vocab&,
                                     EvalOptions);

std::string format_table(std::span<const EvalResult> results) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "%-28s %-9s %10s %8s\n", "task", "metric", "value", "n");
  out += line;
  for (const auto& r : results) {
    std::snprintf(line, sizeof line, "%-28s %-9s %10.4f %8zu\n", r.task_id.c_str(), r.metric.c_str(), r.value,
                  r.n_examples);
    out += line;
  }
  return out;
}

}  // namespace transcoder::metrics
