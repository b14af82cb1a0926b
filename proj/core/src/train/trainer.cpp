#include "transcoder/train/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <set>

#include <spdlog/spdlog.h>

#include "transcoder/autodiff/adam.hpp"
#include "transcoder/model/transformer.hpp"
#include "transcoder/util/hash.hpp"
#include "transcoder/util/rng.hpp"

namespace transcoder::train {

namespace {

using Clock = std::chrono::steady_clock;

std::string fingerprint(const nlohmann::ordered_json& j) { return util::to_hex(util::fnv1a(j.dump())); }

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void check_corpus_fits(const data::Corpus& corpus, const model::ModelConfig& config) {
  for (const auto* split : {&corpus.train, &corpus.dev, &corpus.test}) {
    for (const auto& ex : *split) {
      for (const auto* seq : {&ex.source_tokens, &ex.target_tokens}) {
        for (const auto id : *seq) {
          if (id < 0 || static_cast<std::size_t>(id) >= config.vocab_size) {
            throw ConfigError("corpus " + corpus.task.task_id + " uses token id " + std::to_string(id) +
                              " but the model vocabulary has " + std::to_string(config.vocab_size) + " entries");
          }
        }
      }
    }
  }
}

model::TokenBatch batch_of(std::span<const data::Example> examples, std::span<const std::size_t> indices) {
  std::vector<std::vector<TokenId>> sources, targets;
  sources.reserve(indices.size());
  targets.reserve(indices.size());
  for (const auto i : indices) {
    sources.push_back(examples[i].source_tokens);
    targets.push_back(examples[i].target_tokens);
  }
  return model::make_batch(sources, targets);
}

// Uniform sample of k distinct indices via a partial Fisher-Yates pass over a
// persistent permutation.
class IndexSampler {
 public:
  explicit IndexSampler(std::size_t n) : perm_(n) { std::iota(perm_.begin(), perm_.end(), 0); }

  std::vector<std::size_t> sample(std::size_t k, util::Rng& rng) {
    k = std::min(k, perm_.size());
    for (std::size_t i = 0; i < k; ++i) {
      const auto j = i + static_cast<std::size_t>(rng.below(perm_.size() - i));
      std::swap(perm_[i], perm_[j]);
    }
    return {perm_.begin(), perm_.begin() + static_cast<std::ptrdiff_t>(k)};
  }

 private:
  std::vector<std::size_t> perm_;
};

// One optimizer step; returns the batch loss.
double train_step(ad::Adam<float>& backbone_opt, ad::Adam<float>* prefix_opt, const Backbone& backbone,
                  const PrefixBank* prefix, const model::TokenBatch& batch, util::Rng& dropout_rng) {
  ad::Tape<float> tape;
  const auto loss = model::sequence_loss(tape, backbone, prefix, batch, {true, &dropout_rng});
  const double value = loss.item();
  tape.backward(loss);
  backbone_opt.step();
  if (prefix_opt != nullptr) prefix_opt->step();
  return value;
}

std::span<const data::Example> limited(std::span<const data::Example> examples, std::size_t limit) {
  return limit > 0 && examples.size() > limit ? examples.first(limit) : examples;
}

TargetResult run_target(const data::Corpus& target, const data::Vocab& vocab, const Backbone& fresh,
                        std::optional<PrefixBank> prefix, const TargetPlan& plan, std::uint64_t seed,
                        std::vector<std::string> tags, double rate) {
  const auto start = Clock::now();
  plan.validate();
  target.task.validate();
  if (target.vocab_checksum != vocab.checksum()) {
    throw ConfigError("corpus " + target.task.task_id + " was encoded with a different vocabulary");
  }
  if (target.train.empty()) throw DataError("target corpus " + target.task.task_id + " has no training examples");
  check_corpus_fits(target, fresh.config());

  Backbone backbone = fresh.clone();
  if (prefix) {
    *prefix = prefix->clone();
    check_prefix_compatible(*prefix, backbone);
    if (prefix->has_encoder()) prefix->collapse();
  }
  const PrefixBank* prefix_ptr = prefix ? &*prefix : nullptr;

  ad::Adam<float> opt({plan.learning_rate});
  for (const auto& p : backbone.parameters()) opt.add_parameter(p.tensor);
  ad::Adam<float> prefix_opt({plan.effective_prefix_learning_rate()});
  if (prefix) {
    for (const auto& p : prefix->parameters()) prefix_opt.add_parameter(p.tensor);
  }

  TrainReport report;
  report.stage = "target";
  report.tags = std::move(tags);
  report.seeds["run"] = seed;
  auto model_json = nlohmann::ordered_json::parse(backbone.config().to_json().dump());
  model_json["prefix_length"] = prefix ? prefix->length() : 0;
  report.config_fingerprint = fingerprint({{"stage", "target"},
                                           {"model", model_json},
                                           {"plan", plan.to_json()},
                                           {"task", target.task.task_id},
                                           {"train_examples", target.train.size()},
                                           {"rate", rate}});
  report.info["task_id"] = target.task.task_id;
  report.info["rate"] = rate;
  report.info["train_examples"] = target.train.size();
  report.info["backbone_provenance"] = fresh.provenance();
  report.info["backbone_hash"] = fresh.content_hash();
  report.info["prefix_length"] = prefix ? prefix->length() : 0;
  report.info["prefix_provenance"] = prefix ? prefix->provenance() : std::string("none");
  report.info["prefix_hash"] = prefix ? prefix->content_hash() : std::string();

  auto dropout_rng = util::Rng::stream(seed, "target-dropout");
  auto shuffle_rng = util::Rng::stream(seed, "target-shuffle");
  const auto dev = limited(target.dev, plan.dev_examples);
  const std::string metric = metrics::metric_name(target.task.kind);

  std::optional<Backbone> best_backbone;
  std::optional<PrefixBank> best_prefix;
  double best_value = -1.0;
  std::size_t best_epoch = 0;
  std::size_t step = 0;
  std::vector<std::size_t> order(target.train.size());
  for (std::size_t epoch = 1; epoch <= plan.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    shuffle_rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t begin = 0; begin < order.size(); begin += plan.batch_size) {
      const auto count = std::min(plan.batch_size, order.size() - begin);
      const auto batch = batch_of(target.train, std::span<const std::size_t>(order).subspan(begin, count));
      ++step;
      double loss = 0.0;
      try {
        loss = train_step(opt, prefix ? &prefix_opt : nullptr, backbone, prefix_ptr, batch, dropout_rng);
      } catch (const NumericError& e) {
        report.wall_time_seconds = seconds_since(start);
        report.info["aborted_at_step"] = step;
        throw TrainingAborted(std::string("target training aborted at step ") + std::to_string(step) + ": " +
                                  e.what(),
                              report);
      }
      report.steps.push_back({epoch, target.task.task_id, step, loss});
    }
    if (dev.empty()) continue;
    const auto result = metrics::evaluate(backbone, prefix_ptr, dev, target.task, vocab,
                                          {plan.eval_batch_size, 0});
    const double loss = dev_loss(backbone, prefix_ptr, dev, plan.eval_batch_size);
    report.epochs.push_back({epoch, step, target.task.task_id, metric, result.value, loss});
    spdlog::debug("{} epoch {} step {}: dev {} {:.4f}, dev loss {:.4f}", target.task.task_id, epoch, step, metric,
                  result.value, loss);
    if (result.value > best_value) {
      best_value = result.value;
      best_epoch = epoch;
      best_backbone = backbone.clone();
      if (prefix) best_prefix = prefix->clone();
    }
  }
  if (!best_backbone) {
    best_backbone = backbone.clone();
    if (prefix) best_prefix = prefix->clone();
    best_epoch = plan.epochs;
    best_value = 0.0;
  }

  TargetResult result{std::move(*best_backbone), std::move(best_prefix), {}, best_epoch, best_value, {}};
  const auto test = limited(target.test, plan.test_examples);
  if (!test.empty()) {
    result.test = metrics::evaluate(result.backbone, result.prefix ? &*result.prefix : nullptr, test, target.task,
                                    vocab, {plan.eval_batch_size, 0});
  } else {
    result.test = {target.task.task_id, metric, 0.0, 0};
  }
  report.info["best_epoch"] = best_epoch;
  report.info["best_dev_metric"] = best_value;
  report.info["test"] = result.test.to_json();
  report.wall_time_seconds = seconds_since(start);
  report.validate();
  result.report = std::move(report);
  return result;
}

double sample_stddev(std::span<const double> values) {
  if (values.size() < 2) return 0.0;
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  double ss = 0.0;
  for (const auto v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

}  // namespace

void check_prefix_compatible(const PrefixBank& prefix, const Backbone& backbone) {
  const auto& p = prefix.config();
  const auto& b = backbone.config();
  if (p.d_model != b.d_model || p.attention_sites() != b.attention_sites()) {
    throw CompatibilityError("prefix was built for d_model=" + std::to_string(p.d_model) + " with " +
                             std::to_string(p.attention_sites()) + " attention sites, backbone has d_model=" +
                             std::to_string(b.d_model) + " with " + std::to_string(b.attention_sites()));
  }
}

double dev_loss(const Backbone& backbone, const PrefixBank* prefix, std::span<const data::Example> examples,
                std::size_t batch_size, std::size_t limit) {
  examples = limited(examples, limit);
  if (examples.empty()) throw DataError("dev loss needs at least one example");
  if (batch_size == 0) throw ConfigError("dev loss batch_size must be positive");
  double total = 0.0;
  double tokens = 0.0;
  std::vector<std::size_t> idx;
  for (std::size_t begin = 0; begin < examples.size(); begin += batch_size) {
    const auto count = std::min(batch_size, examples.size() - begin);
    idx.resize(count);
    std::iota(idx.begin(), idx.end(), begin);
    const auto batch = batch_of(examples, idx);
    ad::Tape<float> tape(false);
    const auto loss = model::sequence_loss(tape, backbone, prefix, batch, {});
    const auto n = static_cast<double>(
        std::count_if(batch.target_out.begin(), batch.target_out.end(), [](TokenId t) { return t != kPadId; }));
    total += static_cast<double>(loss.item()) * n;
    tokens += n;
  }
  return total / tokens;
}

std::uint64_t prefix_seed(std::uint64_t run_seed) { return util::mix_seed(run_seed, "prefix"); }

SourceResult train_source(std::span<const data::Corpus> tasks, const SourceTrainPlan& plan, PrefixBank prefix,
                          const Backbone& base, std::uint64_t seed, const SourceHooks& hooks) {
  const auto start = Clock::now();
  plan.validate();
  if (tasks.empty()) throw ConfigError("source training needs at least one task");
  std::vector<std::string> ids;
  std::vector<std::size_t> sizes;
  for (const auto& t : tasks) {
    t.task.validate();
    if (t.vocab_checksum != tasks.front().vocab_checksum) {
      throw ConfigError("source tasks " + tasks.front().task.task_id + " and " + t.task.task_id +
                        " were encoded with different vocabularies");
    }
    if (std::find(ids.begin(), ids.end(), t.task.task_id) != ids.end()) {
      throw ConfigError("source task " + t.task.task_id + " listed twice");
    }
    check_corpus_fits(t, base.config());
    ids.push_back(t.task.task_id);
    sizes.push_back(t.train.size());
  }
  if (plan.visit_policy == VisitPolicy::Fixed) {
    const std::set<std::string> given(plan.order.begin(), plan.order.end());
    if (plan.order.size() != ids.size() || given != std::set<std::string>(ids.begin(), ids.end())) {
      throw ConfigError("source order must list every task exactly once");
    }
  }
  if (plan.batches_per_epoch < tasks.size()) {
    throw ConfigError("batches_per_epoch " + std::to_string(plan.batches_per_epoch) + " is below the task count " +
                      std::to_string(tasks.size()));
  }

  prefix = prefix.clone();
  check_prefix_compatible(prefix, base);
  const auto base_hash = base.content_hash();
  const SamplerState sampler(ids, sizes, plan.delta, seed);
  const auto allocation = plan_epoch(sampler, plan.batches_per_epoch);

  TrainReport report;
  report.stage = "source";
  report.seeds["run"] = seed;
  report.seeds["prefix_init"] = prefix.seed();
  nlohmann::ordered_json task_json = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < tasks.size(); ++k) task_json.push_back({{"task_id", ids[k]}, {"train", sizes[k]}});
  report.config_fingerprint = fingerprint({{"stage", "source"},
                                           {"model", nlohmann::ordered_json::parse(prefix.config().to_json().dump())},
                                           {"plan", plan.to_json()},
                                           {"tasks", task_json}});
  report.info["tasks"] = task_json;
  report.info["probabilities"] = sampler.probabilities();
  nlohmann::ordered_json alloc_json = nlohmann::ordered_json::object();
  for (const auto& a : allocation) alloc_json[a.task_id] = a.n_batches;
  report.info["batches_per_epoch"] = alloc_json;
  report.info["base_hash"] = base_hash;
  report.info["base_provenance"] = base.provenance();
  report.info["initial_prefix_hash"] = prefix.content_hash();

  ad::Adam<float> prefix_opt({plan.effective_prefix_learning_rate()});
  for (const auto& p : prefix.parameters()) prefix_opt.add_parameter(p.tensor);

  auto dropout_rng = util::Rng::stream(seed, "source-dropout");
  auto batch_rng = util::Rng::stream(seed, "source-batches");
  auto visit_rng = util::Rng::stream(seed, "source-visit-order");
  std::vector<IndexSampler> samplers;
  for (const auto& t : tasks) samplers.emplace_back(t.train.size());

  std::vector<TaskSwitch> switches;
  nlohmann::ordered_json visits = nlohmann::ordered_json::array();
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= plan.epochs; ++epoch) {
    std::vector<std::size_t> visit(tasks.size());
    if (plan.visit_policy == VisitPolicy::Fixed) {
      for (std::size_t i = 0; i < visit.size(); ++i) {
        visit[i] = static_cast<std::size_t>(std::find(ids.begin(), ids.end(), plan.order[i]) - ids.begin());
      }
    } else {
      std::iota(visit.begin(), visit.end(), 0);
      visit_rng.shuffle(std::span<std::size_t>(visit));
    }
    nlohmann::ordered_json epoch_visits = nlohmann::ordered_json::array();
    for (const auto k : visit) {
      const auto& corpus = tasks[k];
      epoch_visits.push_back(ids[k]);
      // A new task gets a new backbone: copy the base and reset its optimizer.
      Backbone backbone = base.clone();
      TaskSwitch sw{epoch, ids[k], backbone.content_hash(), base_hash};
      if (!sw.fresh()) throw StateError("backbone differs from the base snapshot at the start of " + ids[k]);
      if (hooks.on_task_switch) hooks.on_task_switch(sw);
      switches.push_back(sw);
      ad::Adam<float> backbone_opt({plan.learning_rate});
      for (const auto& p : backbone.parameters()) backbone_opt.add_parameter(p.tensor);

      for (std::size_t b = 0; b < allocation[k].n_batches; ++b) {
        const auto indices = samplers[k].sample(plan.batch_size, batch_rng);
        const auto batch = batch_of(corpus.train, indices);
        ++step;
        double loss = 0.0;
        try {
          loss = train_step(backbone_opt, &prefix_opt, backbone, &prefix, batch, dropout_rng);
        } catch (const NumericError& e) {
          report.wall_time_seconds = seconds_since(start);
          report.info["aborted_at_step"] = step;
          throw TrainingAborted(std::string("source training aborted at step ") + std::to_string(step) + ": " +
                                    e.what(),
                                report);
        }
        StepRecord record{epoch, ids[k], step, loss};
        if (hooks.on_step) hooks.on_step(record);
        report.steps.push_back(std::move(record));
      }
      if (!corpus.dev.empty()) {
        const double loss = dev_loss(backbone, &prefix, corpus.dev, plan.batch_size, plan.dev_examples);
        report.epochs.push_back({epoch, step, ids[k], "dev_loss", loss, loss});
        spdlog::debug("source epoch {} {}: dev loss {:.4f}", epoch, ids[k], loss);
      }
    }
    visits.push_back(std::move(epoch_visits));
  }
  report.info["visit_order"] = visits;
  nlohmann::ordered_json switch_json = nlohmann::ordered_json::array();
  for (const auto& s : switches) {
    switch_json.push_back({{"epoch", s.epoch}, {"task_id", s.task_id}, {"backbone_hash", s.backbone_hash}});
  }
  report.info["task_switches"] = switch_json;
  prefix.set_provenance(model::kPrefixSourceTrained);
  report.info["final_prefix_hash"] = prefix.content_hash();
  report.wall_time_seconds = seconds_since(start);
  report.validate();
  return {std::move(prefix), std::move(report), std::move(switches)};
}

TargetResult specify_target(const data::Corpus& target, const data::Vocab& vocab, PrefixBank prefix,
                            const Backbone& fresh, const TargetPlan& plan, std::uint64_t seed,
                            std::vector<std::string> tags) {
  return run_target(target, vocab, fresh, std::move(prefix), plan, seed, std::move(tags), 1.0);
}

TargetResult finetune(const data::Corpus& target, const data::Vocab& vocab, const Backbone& fresh,
                      const TargetPlan& plan, std::uint64_t seed, std::vector<std::string> tags) {
  return run_target(target, vocab, fresh, std::nullopt, plan, seed, std::move(tags), 1.0);
}

TargetResult ablate_random_prefix(const data::Corpus& target, const data::Vocab& vocab, const Backbone& fresh,
                                  const model::ModelConfig& config, const TargetPlan& plan, std::uint64_t seed) {
  auto prefix = PrefixBank::init(config, prefix_seed(seed), true);
  auto result = specify_target(target, vocab, std::move(prefix), fresh, plan, seed, {"ablation-random"});
  result.report.seeds["prefix_init"] = prefix_seed(seed);
  return result;
}

TargetResult low_resource_run(const data::Corpus& target, const data::Vocab& vocab, double rate, PrefixBank prefix,
                              const Backbone& fresh, const TargetPlan& plan, std::uint64_t seed,
                              std::vector<std::string> tags) {
  const bool supported = std::any_of(std::begin(kLowResourceRates), std::end(kLowResourceRates),
                                     [&](double r) { return std::abs(r - rate) < 1e-12; });
  if (!supported && rate != 1.0) spdlog::warn("low-resource rate {} is outside the usual 5%-20% range", rate);
  const auto reduced = data::subsample(target, rate, util::mix_seed(seed, "low-resource"));
  return run_target(reduced, vocab, fresh, std::move(prefix), plan, seed, std::move(tags), rate);
}

nlohmann::ordered_json OrderTable::to_json() const {
  nlohmann::ordered_json j;
  j["metric_name"] = metric_name;
  j["seeds"] = seeds;
  auto& rows_json = j["rows"] = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    rows_json.push_back({{"order", r.order}, {"metrics", r.metrics}, {"mean", r.mean}, {"stddev", r.stddev}});
  }
  j["spread"] = spread;
  return j;
}

OrderTable order_experiment(std::span<const data::Corpus> tasks, const data::Corpus& target,
                            const data::Vocab& vocab, std::span<const std::vector<std::string>> orders,
                            SourceTrainPlan plan, const TargetPlan& target_plan, const model::ModelConfig& config,
                            const Backbone& base, std::span<const std::uint64_t> seeds) {
  if (orders.size() < 2) throw ConfigError("order experiment needs at least two orders");
  if (seeds.empty()) throw ConfigError("order experiment needs at least one seed");
  std::set<std::string> ids;
  for (const auto& t : tasks) ids.insert(t.task.task_id);
  std::set<std::vector<std::string>> distinct;
  for (const auto& order : orders) {
    if (order.size() != ids.size() || std::set<std::string>(order.begin(), order.end()) != ids) {
      throw ConfigError("every order must be a permutation of the source task ids");
    }
    if (!distinct.insert(order).second) spdlog::warn("order experiment lists the same order twice");
  }

  OrderTable table;
  table.metric_name = metrics::metric_name(target.task.kind);
  table.seeds.assign(seeds.begin(), seeds.end());
  plan.visit_policy = VisitPolicy::Fixed;
  for (const auto& order : orders) {
    plan.order = order;
    OrderRow row;
    row.order = order;
    for (const auto seed : seeds) {
      auto source = train_source(tasks, plan, PrefixBank::init(config, prefix_seed(seed), true), base, seed);
      const auto result = specify_target(target, vocab, std::move(source.prefix), base, target_plan, seed);
      row.metrics.push_back(result.best_dev_metric);
    }
    row.mean = std::accumulate(row.metrics.begin(), row.metrics.end(), 0.0) / static_cast<double>(row.metrics.size());
    row.stddev = sample_stddev(row.metrics);
    table.rows.push_back(std::move(row));
  }
  const auto [lo, hi] = std::minmax_element(table.rows.begin(), table.rows.end(),
                                            [](const OrderRow& a, const OrderRow& b) { return a.mean < b.mean; });
  table.spread = hi->mean - lo->mean;
  return table;
}

}  // namespace transcoder::train
