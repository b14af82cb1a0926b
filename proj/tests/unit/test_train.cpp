#include <doctest.h>

#include <set>

#include "fixtures.hpp"
#include "transcoder/errors.hpp"
#include "transcoder/model/checkpoint.hpp"
#include "transcoder/train/pretrain.hpp"
#include "transcoder/train/trainer.hpp"

using namespace transcoder;

namespace {

train::SourceTrainPlan tiny_source_plan() {
  train::SourceTrainPlan p;
  p.epochs = 2;
  p.batches_per_epoch = 9;
  p.batch_size = 8;
  p.dev_examples = 8;
  return p;
}

train::TargetPlan tiny_target_plan() {
  train::TargetPlan p;
  p.epochs = 2;
  p.batch_size = 8;
  return p;
}

}  // namespace

TEST_CASE("source training resets the backbone at every task switch and carries the prefix") {
  const auto w = testing::small_world();
  const auto base = train::Backbone::init(w.config, 3);
  const auto base_hash = base.content_hash();
  const std::span<const data::Corpus> tasks(w.corpora.data(), 3);
  std::vector<train::TaskSwitch> switches;
  std::size_t steps = 0;
  train::SourceHooks hooks{[&](const train::TaskSwitch& s) { switches.push_back(s); },
                           [&](const train::StepRecord&) { ++steps; }};
  const auto initial = train::PrefixBank::init(w.config, 11);
  const auto result = train::train_source(tasks, tiny_source_plan(), initial, base, 5, hooks);

  CHECK(switches.size() == 6);
  for (const auto& s : switches) {
    CHECK(s.fresh());
    CHECK(s.base_hash == base_hash);
  }
  CHECK(base.content_hash() == base_hash);
  CHECK(steps == 18);
  CHECK(result.report.steps.size() == 18);
  CHECK(result.prefix.content_hash() != initial.content_hash());
  CHECK(result.prefix.provenance() == model::kPrefixSourceTrained);
  CHECK(result.report.stage == "source");
  CHECK(result.report.info.contains("probabilities"));
  CHECK(result.report.epochs.size() == 6);
  CHECK_NOTHROW(result.report.validate());
}

TEST_CASE("per-task batch counts follow the apportioned distribution") {
  const auto w = testing::small_world();
  const auto base = train::Backbone::init(w.config, 3);
  const std::span<const data::Corpus> tasks(w.corpora.data(), 3);
  const auto result = train::train_source(tasks, tiny_source_plan(), train::PrefixBank::init(w.config, 11), base, 5);
  std::vector<std::size_t> sizes;
  for (const auto& t : tasks) sizes.push_back(t.train.size());
  const auto expected = train::apportion(train::sampling_distribution(sizes, 1.0), 9);
  std::map<std::string, std::size_t> counts;
  for (const auto& s : result.report.steps) ++counts[s.task_id];
  for (std::size_t k = 0; k < tasks.size(); ++k) CHECK(counts[tasks[k].task.task_id] == 2 * expected[k]);
}

TEST_CASE("fixed visit order is honoured and validated") {
  const auto w = testing::small_world();
  const auto base = train::Backbone::init(w.config, 3);
  const std::span<const data::Corpus> tasks(w.corpora.data(), 2);
  auto plan = tiny_source_plan();
  plan.visit_policy = train::VisitPolicy::Fixed;
  plan.order = {"translation-alpha", "summarization-alpha"};
  std::vector<std::string> seen;
  train::SourceHooks hooks;
  hooks.on_task_switch = [&](const train::TaskSwitch& s) { seen.push_back(s.task_id); };
  train::train_source(tasks, plan, train::PrefixBank::init(w.config, 1), base, 5, hooks);
  CHECK(seen == std::vector<std::string>{"translation-alpha", "summarization-alpha", "translation-alpha",
                                         "summarization-alpha"});
  plan.order = {"translation-alpha", "translation-alpha"};
  CHECK_THROWS_AS(train::train_source(tasks, plan, train::PrefixBank::init(w.config, 1), base, 5), ConfigError);
}

TEST_CASE("source training is reproducible") {
  const auto w = testing::small_world();
  const auto base = train::Backbone::init(w.config, 3);
  const std::span<const data::Corpus> tasks(w.corpora.data(), 2);
  const auto a = train::train_source(tasks, tiny_source_plan(), train::PrefixBank::init(w.config, 1), base, 5);
  const auto b = train::train_source(tasks, tiny_source_plan(), train::PrefixBank::init(w.config, 1), base, 5);
  CHECK(a.report.serialize() == b.report.serialize());
  CHECK(a.prefix.content_hash() == b.prefix.content_hash());
}

TEST_CASE("target specification tracks the best dev state") {
  const auto w = testing::small_world();
  const auto base = train::Backbone::init(w.config, 3);
  const auto& target = w.corpora[3];
  const auto r = train::specify_target(target, w.vocab, train::PrefixBank::init(w.config, 1), base,
                                       tiny_target_plan(), 7, {"unit"});
  CHECK(r.report.stage == "target");
  CHECK(r.report.has_tag("unit"));
  CHECK(r.report.epochs.size() == 2);
  CHECK(r.best_epoch >= 1);
  CHECK(r.best_dev_metric == r.report.epochs[r.best_epoch - 1].value);
  CHECK(r.prefix.has_value());
  CHECK_FALSE(r.prefix->has_encoder());
  CHECK(r.test.n_examples == target.test.size());
  CHECK(base.content_hash() == train::Backbone::init(w.config, 3).content_hash());
}

TEST_CASE("L = 0 specification equals plain fine-tuning bit for bit") {
  const auto w = testing::small_world(0);
  const auto base = train::Backbone::init(w.config, 3);
  const auto& target = w.corpora[3];
  const auto a = train::specify_target(target, w.vocab, train::PrefixBank::init(w.config, 1), base,
                                       tiny_target_plan(), 7);
  const auto b = train::finetune(target, w.vocab, base, tiny_target_plan(), 7);
  REQUIRE(a.report.steps.size() == b.report.steps.size());
  for (std::size_t i = 0; i < a.report.steps.size(); ++i) CHECK(a.report.steps[i].loss == b.report.steps[i].loss);
  CHECK(a.backbone.content_hash() == b.backbone.content_hash());
}

TEST_CASE("random-prefix ablation shares theta_0 with the transfer arm") {
  const auto w = testing::small_world();
  const auto base = train::Backbone::init(w.config, 3);
  const auto r = train::ablate_random_prefix(w.corpora[3], w.vocab, base, w.config, tiny_target_plan(), 7);
  CHECK(r.report.has_tag("ablation-random"));
  CHECK(r.report.seeds.at("prefix_init") == train::prefix_seed(7));
  auto collapsed = train::PrefixBank::init(w.config, train::prefix_seed(7), true);
  collapsed.collapse();
  CHECK(r.report.info["prefix_hash"] == collapsed.content_hash());
}

TEST_CASE("low-resource runs record the rate and subsample the train split") {
  const auto w = testing::small_world();
  const auto base = train::Backbone::init(w.config, 3);
  const auto r = train::low_resource_run(w.corpora[3], w.vocab, 0.10, train::PrefixBank::init(w.config, 1), base,
                                         tiny_target_plan(), 7);
  CHECK(r.report.info["rate"] == 0.10);
  CHECK(r.report.info["train_examples"] == 5);
  CHECK_THROWS_AS(train::low_resource_run(w.corpora[3], w.vocab, 0.0, train::PrefixBank::init(w.config, 1), base,
                                          tiny_target_plan(), 7),
                  ConfigError);
}

TEST_CASE("a prefix for another layout is rejected at specification") {
  const auto w = testing::small_world();
  const auto base = train::Backbone::init(w.config, 3);
  auto other = w.config;
  other.n_encoder_layers = 2;
  CHECK_THROWS_AS(train::specify_target(w.corpora[3], w.vocab, train::PrefixBank::init(other, 1), base,
                                        tiny_target_plan(), 7),
                  CompatibilityError);
}

TEST_CASE("corpora encoded with another vocabulary are rejected") {
  const auto w = testing::small_world();
  const auto base = train::Backbone::init(w.config, 3);
  auto target = w.corpora[3];
  target.vocab_checksum = "other";
  CHECK_THROWS_AS(train::finetune(target, w.vocab, base, tiny_target_plan(), 7), ConfigError);
}

TEST_CASE("denoising pretraining lowers the smoothed loss") {
  const auto w = testing::small_world();
  std::vector<std::vector<TokenId>> programs;
  for (const auto& c : w.corpora) {
    for (const auto& e : c.train) programs.push_back(e.source_tokens);
  }
  train::PretrainPlan plan;
  plan.steps = 150;
  plan.batch_size = 16;
  const auto r = train::pretrain_denoising(programs, w.config, plan, 2);
  CHECK(r.backbone.provenance() == model::kProvenancePretrained);
  CHECK(r.report.steps.size() == 150);
  const auto smooth = train::smoothed_losses(r.report, 50);
  CHECK(smooth.back() < smooth.front());
  const auto again = train::pretrain_denoising(programs, w.config, plan, 2);
  CHECK(model::snapshot(again.backbone).serialize() == model::snapshot(r.backbone).serialize());
}

TEST_CASE("reports round-trip through JSON") {
  train::TrainReport r;
  r.stage = "target";
  r.config_fingerprint = "abc";
  r.seeds["run"] = 3;
  r.steps.push_back({1, "t", 1, 0.5});
  r.epochs.push_back({1, 1, "t", "accuracy", 0.75, 0.4});
  r.tags = {"x"};
  r.info["k"] = 1;
  const auto back = train::TrainReport::from_json(nlohmann::json::parse(r.serialize()));
  CHECK(back.serialize() == r.serialize());
  r.steps.push_back({1, "t", 1, 0.5});
  CHECK_THROWS_AS(r.validate(), StateError);
}

TEST_CASE("plans reject unknown keys and bad values") {
  auto j = nlohmann::json::parse(train::TargetPlan{}.to_json().dump());
  j["epoch"] = 3;
  CHECK_THROWS_AS(train::TargetPlan::from_json(j), ConfigError);
  train::SourceTrainPlan p;
  p.delta = 0.0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  train::SourceTrainPlan q;
  q.prefix_learning_rate = 0.0;
  CHECK(q.effective_prefix_learning_rate() == q.learning_rate);
}
