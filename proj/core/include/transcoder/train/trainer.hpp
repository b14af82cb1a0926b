#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "transcoder/data/corpus.hpp"
#include "transcoder/metrics/metrics.hpp"
#include "transcoder/model/backbone.hpp"
#include "transcoder/model/prefix.hpp"
#include "transcoder/train/plans.hpp"
#include "transcoder/train/report.hpp"
#include "transcoder/train/sampling.hpp"

namespace transcoder::train {

using Backbone = model::Backbone<float>;
using PrefixBank = model::PrefixBank<float>;

/// Backbone state observed when a source task segment starts.
struct TaskSwitch {
  std::size_t epoch = 0;
  std::string task_id;
  std::string backbone_hash;
  std::string base_hash;
  [[nodiscard]] bool fresh() const { return backbone_hash == base_hash; }
};

struct SourceHooks {
  std::function<void(const TaskSwitch&)> on_task_switch;
  std::function<void(const StepRecord&)> on_step;
};

struct SourceResult {
  PrefixBank prefix;
  TrainReport report;
  std::vector<TaskSwitch> switches;
};

/// Continual source-task training. Each epoch visits every task once; each
/// visit starts from a fresh copy of `base` and takes the log-smoothed
/// apportioned number of Adam steps on batches drawn uniformly from the task's
/// training split, updating backbone and prefix together. Only the prefix is
/// carried across visits and returned.
///
/// Throws ConfigError when corpora disagree on the vocabulary or the fixed
/// order is not a permutation of the task ids; TrainingAborted on a
/// non-finite loss.
SourceResult train_source(std::span<const data::Corpus> tasks, const SourceTrainPlan& plan, PrefixBank prefix,
                          const Backbone& base, std::uint64_t seed, const SourceHooks& hooks = {});

struct TargetResult {
  Backbone backbone;  // best-dev checkpoint
  std::optional<PrefixBank> prefix;
  TrainReport report;
  std::size_t best_epoch = 0;
  double best_dev_metric = 0.0;
  metrics::EvalResult test;
};

/// Collapses the prefix if needed, attaches it to a fresh copy of `fresh` and
/// tunes both on the target train split. Dev metric and loss are recorded per
/// epoch; the best-dev state is returned and scored on the test split.
/// Throws CompatibilityError when the prefix was built for another backbone.
TargetResult specify_target(const data::Corpus& target, const data::Vocab& vocab, PrefixBank prefix,
                            const Backbone& fresh, const TargetPlan& plan, std::uint64_t seed,
                            std::vector<std::string> tags = {});

/// The same loop with no prefix at all (plain fine-tuning).
TargetResult finetune(const data::Corpus& target, const data::Vocab& vocab, const Backbone& fresh,
                      const TargetPlan& plan, std::uint64_t seed, std::vector<std::string> tags = {});

/// Seed of the initial prefix for a run seed; shared by the transfer arm's
/// source stage and the random-prefix arm so both start from the same theta_0.
std::uint64_t prefix_seed(std::uint64_t run_seed);

/// specify_target with a freshly initialized (then collapsed) prefix, tagged
/// "ablation-random".
TargetResult ablate_random_prefix(const data::Corpus& target, const data::Vocab& vocab, const Backbone& fresh,
                                  const model::ModelConfig& config, const TargetPlan& plan, std::uint64_t seed);

inline constexpr double kLowResourceRates[] = {0.05, 0.10, 0.20};

/// Subsamples the target train split, then runs specify_target.
TargetResult low_resource_run(const data::Corpus& target, const data::Vocab& vocab, double rate, PrefixBank prefix,
                              const Backbone& fresh, const TargetPlan& plan, std::uint64_t seed,
                              std::vector<std::string> tags = {});

struct OrderRow {
  std::vector<std::string> order;
  std::vector<double> metrics;  // best dev metric per seed
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation across seeds
};

struct OrderTable {
  std::string metric_name;
  std::vector<std::uint64_t> seeds;
  std::vector<OrderRow> rows;
  double spread = 0.0;  // max - min of row means

  [[nodiscard]] nlohmann::ordered_json to_json() const;
};

/// One source run per (order, seed) with a fixed visit order, each followed by
/// specify_target on `target`.
OrderTable order_experiment(std::span<const data::Corpus> tasks, const data::Corpus& target,
                            const data::Vocab& vocab, std::span<const std::vector<std::string>> orders,
                            SourceTrainPlan plan, const TargetPlan& target_plan, const model::ModelConfig& config,
                            const Backbone& base, std::span<const std::uint64_t> seeds);

/// Token-weighted mean cross-entropy on up to `limit` examples (0 = all).
double dev_loss(const Backbone& backbone, const PrefixBank* prefix, std::span<const data::Example> examples,
                std::size_t batch_size, std::size_t limit = 0);

/// Backbone and prefix parameters must agree with the base backbone layout.
void check_prefix_compatible(const PrefixBank& prefix, const Backbone& backbone);

}  // namespace transcoder::train
