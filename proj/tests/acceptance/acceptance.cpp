// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance [--config PATH] [--only 1,2,...] [--json PATH]
//
// Exit status is 1 when any hard criterion fails. Criteria 8 and 9 are soft:
// they are reported and flagged but never fail the run.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "support/gradcheck.hpp"
#include "transcoder/data/corpus.hpp"
#include "transcoder/experiments/suites.hpp"
#include "transcoder/experiments/workspace.hpp"
#include "transcoder/metrics/metrics.hpp"
#include "transcoder/model/checkpoint.hpp"
#include "transcoder/train/pretrain.hpp"
#include "transcoder/train/sampling.hpp"
#include "transcoder/train/trainer.hpp"
#include "transcoder/util/allocator.hpp"
#include "transcoder/util/rng.hpp"

#ifndef TRANSCODER_ACCEPTANCE_CONFIG
#define TRANSCODER_ACCEPTANCE_CONFIG "acceptance_config.json"
#endif

using namespace transcoder;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
  bool soft = false;
};

std::string num(double v, int precision = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// 1 -------------------------------------------------------------------------

Outcome gradient_correctness() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  std::string worst_name;
  std::size_t coords = 0;
  std::size_t cases = 0;
  for (const auto& op : testing::op_cases()) {
    for (std::uint64_t point = 0; point < 10; ++point) {
      auto rng = util::Rng::stream(point + 1, "acceptance-gradcheck/" + op.name);
      const auto inputs = op.inputs(rng);
      const auto r = testing::check_gradients(inputs, op.loss, 8, rng);
      coords += r.coordinates;
      if (r.max_rel_error >= worst) {
        worst = r.max_rel_error;
        worst_name = op.name;
      }
    }
    ++cases;
  }
  for (std::uint64_t point = 0; point < 10; ++point) {
    const auto r = testing::check_model_gradients(point + 1, 3);
    coords += r.coordinates;
    if (r.max_rel_error >= worst) {
      worst = r.max_rel_error;
      worst_name = "full model";
    }
  }
  ++cases;
  const double elapsed = seconds_since(t0);
  return {worst < 1e-4 && elapsed < 60.0,
          std::to_string(cases) + " cases x 10 points, " + std::to_string(coords) + " coordinates, max rel error " +
              num(worst * 1e6, 3) + "e-6 (" + worst_name + "), " + num(elapsed, 1) + " s"};
}

// 2 -------------------------------------------------------------------------

Outcome sampling_exactness() {
  const std::size_t sizes[] = {167288, 24927};
  const auto p = train::sampling_distribution(sizes, 1.0);
  // Hand evaluation in extended precision.
  const long double a = std::log(167288.0L) + 1.0L;
  const long double b = std::log(24927.0L) + 1.0L;
  const long double expected[] = {a / (a + b), b / (a + b)};
  double err = 0.0;
  for (int k = 0; k < 2; ++k) err = std::max(err, static_cast<double>(std::fabs(p[k] - expected[k])));

  auto rng = util::Rng::stream(2, "acceptance-oversampling");
  int ok = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = 2 + rng.below(5);
    std::vector<std::size_t> v(k);
    do {
      for (auto& s : v) s = static_cast<std::size_t>(std::exp(rng.uniform(std::log(10.0), std::log(1e6))));
    } while (std::set<std::size_t>(v.begin(), v.end()).size() < 2);
    const auto q = train::sampling_distribution(v, 1.0);
    const double total = std::accumulate(v.begin(), v.end(), 0.0);
    const auto smallest = static_cast<std::size_t>(std::min_element(v.begin(), v.end()) - v.begin());
    if (q[smallest] > static_cast<double>(v[smallest]) / total) ++ok;
  }
  return {err < 1e-12 && ok == 100, "P = [" + num(p[0], 6) + ", " + num(p[1], 6) + "], |P - hand| = " +
                                        num(err * 1e15, 2) + "e-15, over-sampling holds in " + std::to_string(ok) +
                                        "/100 random size vectors"};
}

// 3 -------------------------------------------------------------------------

Outcome sampler_fidelity() {
  train::SamplerState sampler({"a", "b", "c"}, {167288, 24927, 1200}, 1.0, 3);
  std::vector<std::size_t> counts(3, 0);
  constexpr std::size_t kDraws = 100000;
  for (std::size_t i = 0; i < kDraws; ++i) ++counts[sampler.draw()];
  double worst = 0.0;
  std::string freq;
  for (std::size_t k = 0; k < 3; ++k) {
    const double f = static_cast<double>(counts[k]) / kDraws;
    worst = std::max(worst, std::abs(f - sampler.probabilities()[k]));
    freq += (k ? ", " : "") + num(f) + " vs " + num(sampler.probabilities()[k]);
  }
  return {worst <= 0.01, "frequency vs P: " + freq + ", max gap " + num(worst)};
}

// Shared small setup for 4, 5 and 10.

struct Small {
  data::Vocab vocab;
  std::vector<data::Corpus> corpora;
  model::ModelConfig config;
};

Small small_setup(std::size_t prefix_length) {
  std::vector<data::RawCorpus> raws;
  raws.push_back(data::generate_minilang_corpus("alpha", data::TaskKind::Summarization, 120, 16, 16, 41));
  raws.push_back(data::generate_minilang_corpus("alpha", data::TaskKind::Translation, 90, 16, 16, 42));
  raws.push_back(data::generate_minilang_corpus("alpha", data::TaskKind::Classification, 60, 16, 16, 43));
  raws.push_back(data::generate_minilang_corpus("beta", data::TaskKind::Classification, 64, 16, 16, 44));
  Small s;
  s.vocab = data::build_vocab(raws);
  for (const auto& raw : raws) s.corpora.push_back(data::encode_corpus(raw, s.vocab));
  s.config.vocab_size = s.vocab.size();
  s.config.d_model = 16;
  s.config.d_ff = 32;
  s.config.n_heads = 2;
  s.config.n_encoder_layers = 1;
  s.config.n_decoder_layers = 1;
  s.config.prefix_length = prefix_length;
  s.config.prefix_embedding_dim = 8;
  s.config.prefix_hidden_dim = 16;
  return s;
}

// 4 -------------------------------------------------------------------------

Outcome zero_prefix_equivalence() {
  const auto s = small_setup(0);
  const auto base = train::Backbone::init(s.config, 7);
  train::TargetPlan plan;
  plan.epochs = 3;
  plan.batch_size = 8;
  const auto& target = s.corpora[3];
  const auto with = train::specify_target(target, s.vocab, train::PrefixBank::init(s.config, 9), base, plan, 11);
  const auto without = train::finetune(target, s.vocab, base, plan, 11);
  bool identical = with.report.steps.size() == without.report.steps.size() && !with.report.steps.empty();
  for (std::size_t i = 0; identical && i < with.report.steps.size(); ++i) {
    identical = std::memcmp(&with.report.steps[i].loss, &without.report.steps[i].loss, sizeof(double)) == 0;
  }
  identical = identical && with.backbone.content_hash() == without.backbone.content_hash();
  return {identical, std::to_string(with.report.steps.size()) + " steps, loss traces " +
                         (identical ? "bit-identical" : "differ") + ", final backbone hashes " +
                         (with.backbone.content_hash() == without.backbone.content_hash() ? "equal" : "differ")};
}

// 5 -------------------------------------------------------------------------

Outcome fresh_backbone_invariant() {
  const auto s = small_setup(4);
  const auto base = train::Backbone::init(s.config, 7);
  train::SourceTrainPlan plan;
  plan.epochs = 2;
  plan.batches_per_epoch = 12;
  plan.batch_size = 8;
  plan.dev_examples = 8;
  std::vector<train::TaskSwitch> seen;
  train::SourceHooks hooks;
  hooks.on_task_switch = [&](const train::TaskSwitch& sw) { seen.push_back(sw); };
  const std::span<const data::Corpus> tasks(s.corpora.data(), 3);
  const auto result = train::train_source(tasks, plan, train::PrefixBank::init(s.config, 9), base, 13, hooks);
  const auto fresh = std::count_if(seen.begin(), seen.end(), [](const auto& sw) { return sw.fresh(); });
  const bool base_untouched = base.content_hash() == seen.front().base_hash;
  const bool ok = seen.size() == 6 && fresh == 6 && base_untouched;
  return {ok, std::to_string(fresh) + "/" + std::to_string(seen.size()) +
                  " task switches saw the base hash, base snapshot " + (base_untouched ? "unchanged" : "changed")};
}

// 6-9 -----------------------------------------------------------------------

struct Toy {
  experiments::Workspace ws;
  experiments::SourceCache cache;
  std::optional<experiments::SuiteResult> ablation;
};

Outcome ablation_direction(Toy& toy) {
  const auto t0 = std::chrono::steady_clock::now();
  toy.ablation = experiments::run_suite(toy.ws, "ablation", toy.ws.config.seeds, &toy.cache);
  std::cout << toy.ablation->table();
  std::size_t wins = 0;
  double mean = 0.0;
  for (const auto& p : toy.ablation->pairs) {
    wins += p.transfer.dev >= p.baseline.dev;
    mean += p.transfer.dev - p.baseline.dev;
  }
  const auto n = toy.ablation->pairs.size();
  mean /= static_cast<double>(n);
  return {wins >= 4 && mean > 0.0, "transfer >= random-prefix dev accuracy in " + std::to_string(wins) + "/" +
                                       std::to_string(n) + " seeds, mean delta " + num(mean) + ", " +
                                       num(seconds_since(t0) / 60.0, 1) + " min"};
}

Outcome low_resource_direction(Toy& toy) {
  const auto result = experiments::run_suite(toy.ws, "low-resource", toy.ws.config.seeds, &toy.cache);
  std::cout << result.table();
  std::size_t wins = 0;
  std::size_t n = 0;
  double mean = 0.0;
  for (const auto& p : result.pairs) {
    if (std::abs(p.rate - 0.10) > 1e-12) continue;
    ++n;
    wins += p.transfer.test > p.baseline.test;
    mean += p.transfer.test - p.baseline.test;
  }
  if (n == 0) return {false, "the low-resource suite has no 0.10 rate"};
  return {wins >= 4, "rate 0.10: transfer beats random-prefix test BLEU in " + std::to_string(wins) + "/" +
                         std::to_string(n) + " seeds, mean delta " + num(mean / static_cast<double>(n), 2)};
}

Outcome order_robustness(Toy& toy) {
  const auto result = experiments::run_suite(toy.ws, "order", toy.ws.config.seeds, &toy.cache);
  std::cout << result.table();
  const auto& table = *result.order;
  const double sd = table.rows.front().stddev;
  return {table.spread < sd,
          "spread " + num(table.spread) + " vs across-seed sd " + num(sd) + " of the first order (means " +
              num(table.rows[0].mean) + ", " + num(table.rows[1].mean) + ")",
          true};
}

Outcome convergence_shape(Toy& toy) {
  if (!toy.ablation) toy.ablation = experiments::run_suite(toy.ws, "ablation", toy.ws.config.seeds, &toy.cache);
  std::size_t fast = 0;
  std::string ratios;
  for (const auto& c : toy.ablation->convergence) {
    const auto r = c.ratio();
    if (r && *r <= 0.75) ++fast;
    ratios += (ratios.empty() ? "" : ", ") + (r ? num(*r, 2) : std::string("never"));
  }
  return {fast >= 3, "transfer reaches the random arm's final dev loss within 75% of its steps in " +
                         std::to_string(fast) + "/" + std::to_string(toy.ablation->convergence.size()) +
                         " seeds (ratios " + ratios + ")",
          true};
}

// 10 ------------------------------------------------------------------------

std::string pipeline_bytes() {
  auto s = small_setup(4);
  std::vector<std::vector<TokenId>> programs;
  for (const auto& c : s.corpora) {
    for (const auto& e : c.train) programs.push_back(e.source_tokens);
  }
  train::PretrainPlan pp;
  pp.steps = 20;
  pp.batch_size = 8;
  const auto base = train::pretrain_denoising(programs, s.config, pp, 5);
  train::SourceTrainPlan sp;
  sp.epochs = 1;
  sp.batches_per_epoch = 8;
  sp.batch_size = 8;
  sp.dev_examples = 8;
  const std::span<const data::Corpus> tasks(s.corpora.data(), 2);
  auto source = train::train_source(tasks, sp, train::PrefixBank::init(s.config, 9), base.backbone, 3);
  train::TargetPlan tp;
  tp.epochs = 2;
  tp.batch_size = 8;
  const auto target = train::specify_target(s.corpora[3], s.vocab, source.prefix, base.backbone, tp, 3);
  return base.report.serialize() + source.report.serialize() + target.report.serialize() +
         model::snapshot(source.prefix).serialize() + model::snapshot(target.backbone).serialize();
}

Outcome determinism_and_fidelity() {
  const bool reproducible = pipeline_bytes() == pipeline_bytes();

  const auto s = small_setup(4);
  const auto backbone = train::Backbone::init(s.config, 21);
  auto prefix = train::PrefixBank::init(s.config, 22);
  bool round_trip = true;
  for (int form = 0; form < 2; ++form) {
    const auto text = model::snapshot(prefix).serialize();
    const auto restored = model::load_prefix<float>(model::Checkpoint::parse(text), &s.config);
    round_trip = round_trip && model::snapshot(restored).serialize() == text &&
                 restored.content_hash() == prefix.content_hash();
    prefix.collapse();
  }
  const auto text = model::snapshot(backbone).serialize();
  const auto restored = model::load_backbone<float>(model::Checkpoint::parse(text), &s.config);
  round_trip = round_trip && model::snapshot(restored).serialize() == text &&
               restored.content_hash() == backbone.content_hash();

  const std::vector<metrics::TokenSeq> hyp = {{10, 11, 12, 13}};
  const std::vector<metrics::TokenSeq> ref = {{10, 11, 12, 13, 14}};
  const double bleu = metrics::bleu4_smoothed(hyp, ref);
  const bool ok = reproducible && round_trip && std::abs(bleu - 77.88) <= 0.01;
  return {ok, std::string("reports ") + (reproducible ? "byte-identical" : "differ") + " across reruns, checkpoint " +
                  "round-trips " + (round_trip ? "byte-identical" : "differ") + ", BLEU hand case " + num(bleu, 4)};
}

}  // namespace

int main(int argc, char** argv) {
  util::configure_allocator();
  CLI::App app{"acceptance suite"};
  std::string config_path = TRANSCODER_ACCEPTANCE_CONFIG;
  std::string only;
  std::string json_path;
  app.add_option("--config", config_path, "Experiment config for criteria 6-9");
  app.add_option("--only", only, "Comma-separated criteria to run");
  app.add_option("--json", json_path, "Also write results as JSON");
  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::warn);

  std::set<int> selected;
  {
    std::stringstream in(only);
    std::string item;
    while (std::getline(in, item, ',')) {
      if (!item.empty()) selected.insert(std::stoi(item));
    }
  }
  auto wanted = [&](int id) { return selected.empty() || selected.contains(id); };

  std::optional<Toy> toy;
  auto toy_ws = [&]() -> Toy& {
    if (!toy) {
      const auto t0 = std::chrono::steady_clock::now();
      const auto config = experiments::ExperimentConfig::load(config_path);
      toy.emplace(Toy{experiments::build_workspace(config), {}, std::nullopt});
      std::cout << "toy workspace (data + " << config.pretrain.steps << " pretraining steps) built in "
                << num(seconds_since(t0), 1) << " s\n";
    }
    return *toy;
  };

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient correctness", gradient_correctness},
      {"sampling distribution exactness", sampling_exactness},
      {"empirical sampler fidelity", sampler_fidelity},
      {"zero-prefix equivalence", zero_prefix_equivalence},
      {"fresh-backbone invariant", fresh_backbone_invariant},
      {"ablation direction", [&] { return ablation_direction(toy_ws()); }},
      {"low-resource direction", [&] { return low_resource_direction(toy_ws()); }},
      {"order robustness", [&] { return order_robustness(toy_ws()); }},
      {"convergence shape", [&] { return convergence_shape(toy_ws()); }},
      {"determinism and checkpoint fidelity", determinism_and_fidelity},
  };

  int hard_failures = 0;
  nlohmann::ordered_json results = nlohmann::ordered_json::array();
  std::vector<std::string> lines;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!wanted(id)) continue;
    Outcome outcome;
    try {
      outcome = criteria[i].second();
    } catch (const std::exception& e) {
      outcome = {false, std::string("threw: ") + e.what()};
    }
    const bool soft = outcome.soft;
    if (!outcome.pass && !soft) ++hard_failures;
    const std::string status = outcome.pass ? "PASS" : soft ? "FAIL (soft, flagged)" : "FAIL";
    const auto line = "criterion " + std::to_string(id) + " " + criteria[i].first + ": " + status + " | " +
                      outcome.detail;
    std::cout << line << std::endl;
    lines.push_back(line);
    results.push_back({{"criterion", id},
                       {"name", criteria[i].first},
                       {"pass", outcome.pass},
                       {"soft", soft},
                       {"detail", outcome.detail}});
  }
  std::cout << "\nsummary\n";
  for (const auto& line : lines) std::cout << line << "\n";
  if (!json_path.empty()) model::write_file(json_path, results.dump(1) + "\n");
  return hard_failures == 0 ? 0 : 1;
}
