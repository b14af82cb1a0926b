#include "transcoder/experiments/suites.hpp"

#include <cstdio>

#include <spdlog/spdlog.h>

#include "transcoder/errors.hpp"
#include "transcoder/metrics/metrics.hpp"

namespace transcoder::experiments {

namespace {

std::string seed_name(std::string_view arm, std::uint64_t seed) {
  return std::string(arm) + "-seed" + std::to_string(seed);
}

std::string rate_name(double rate) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "rate%.2f", rate);
  return buf;
}

ArmScore score(const train::TargetResult& r) { return {r.best_dev_metric, r.test.value}; }

train::PrefixBank random_prefix(const Workspace& ws, std::uint64_t seed) {
  return train::PrefixBank::init(ws.model, train::prefix_seed(seed), true);
}

std::vector<std::string> tags_for(const SuiteConfig& suite, std::string_view arm) {
  return {suite.tag, std::string(arm)};
}

void run_pairs(const Workspace& ws, const SuiteConfig& suite, SuiteResult& out, std::span<const std::uint64_t> seeds,
               SourceCache& cache, bool finetune_baseline, bool with_convergence) {
  const auto target = take_train(ws.corpus(suite.target), suite.target_train);
  const auto& plan = ws.config.target;
  const std::vector<double> rates = suite.rates.empty() ? std::vector<double>{1.0} : suite.rates;
  for (const auto seed : seeds) {
    const auto& source = cache.get(ws, suite.sources, seed);
    out.reports.emplace_back(seed_name("source", seed), source.report);
    for (const auto rate : rates) {
      const bool full = rate >= 1.0;
      const auto suffix = full ? std::string() : "-" + rate_name(rate);
      spdlog::info("{} seed {}{}: target runs", out.suite, seed, suffix);
      auto transfer = full ? train::specify_target(target, ws.vocab, source.prefix, ws.base, plan, seed,
                                                   tags_for(suite, "transfer"))
                           : train::low_resource_run(target, ws.vocab, rate, source.prefix, ws.base, plan, seed,
                                                     tags_for(suite, "transfer"));
      std::optional<train::TargetResult> baseline;
      if (finetune_baseline) {
        baseline.emplace(train::finetune(target, ws.vocab, ws.base, plan, seed, tags_for(suite, "finetune")));
      } else if (full) {
        baseline.emplace(train::ablate_random_prefix(target, ws.vocab, ws.base, ws.model, plan, seed));
        baseline->report.tags.push_back(suite.tag);
      } else {
        baseline.emplace(train::low_resource_run(target, ws.vocab, rate, random_prefix(ws, seed), ws.base, plan, seed,
                                                 tags_for(suite, "random-prefix")));
      }
      out.pairs.push_back({seed, rate, score(transfer), score(*baseline)});
      if (with_convergence) out.convergence.push_back(convergence_row(seed, transfer.report, baseline->report));
      out.reports.emplace_back(seed_name("transfer", seed) + suffix, std::move(transfer.report));
      out.reports.emplace_back(seed_name(out.baseline_arm, seed) + suffix, std::move(baseline->report));
    }
  }
}

std::string fmt_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace

const train::SourceResult& SourceCache::get(const Workspace& ws, const std::vector<std::string>& sources,
                                            std::uint64_t seed) {
  const auto key = std::make_pair(sources, seed);
  auto it = entries_.find(key);
  if (it == entries_.end()) {
    spdlog::info("source training seed {}", seed);
    const auto tasks = ws.corpora_for(sources);
    auto result = train::train_source(tasks, ws.config.source, random_prefix(ws, seed), ws.base, seed);
    it = entries_.emplace(key, std::move(result)).first;
  }
  return it->second;
}

std::optional<double> ConvergenceRow::ratio() const {
  if (!transfer_steps || baseline_steps == 0) return std::nullopt;
  return static_cast<double>(*transfer_steps) / static_cast<double>(baseline_steps);
}

ConvergenceRow convergence_row(std::uint64_t seed, const train::TrainReport& transfer,
                               const train::TrainReport& baseline) {
  if (baseline.epochs.empty() || transfer.epochs.empty()) throw StateError("convergence needs per-epoch dev records");
  ConvergenceRow row;
  row.seed = seed;
  row.baseline_final_loss = baseline.epochs.back().dev_loss;
  row.baseline_steps = baseline.epochs.back().step;
  for (const auto& e : transfer.epochs) {
    if (e.dev_loss <= row.baseline_final_loss) {
      row.transfer_steps = e.step;
      break;
    }
  }
  return row;
}

nlohmann::ordered_json SuiteResult::to_json() const {
  nlohmann::ordered_json j;
  j["suite"] = suite;
  j["tag"] = tag;
  j["target"] = target;
  j["metric"] = metric;
  j[kFingerprintKey] = fingerprint;
  j["seeds"] = seeds;
  if (!pairs.empty()) {
    j["baseline_arm"] = baseline_arm;
    auto& rows = j["pairs"] = nlohmann::ordered_json::array();
    for (const auto& p : pairs) {
      rows.push_back({{"seed", p.seed},
                      {"rate", p.rate},
                      {"transfer", {{"dev", p.transfer.dev}, {"test", p.transfer.test}}},
                      {baseline_arm, {{"dev", p.baseline.dev}, {"test", p.baseline.test}}},
                      {"delta_dev", p.transfer.dev - p.baseline.dev},
                      {"delta_test", p.transfer.test - p.baseline.test}});
    }
  }
  if (!convergence.empty()) {
    auto& rows = j["convergence"] = nlohmann::ordered_json::array();
    for (const auto& c : convergence) {
      const auto r = c.ratio();
      rows.push_back({{"seed", c.seed},
                      {"baseline_final_dev_loss", c.baseline_final_loss},
                      {"baseline_steps", c.baseline_steps},
                      {"transfer_steps", c.transfer_steps ? nlohmann::ordered_json(*c.transfer_steps)
                                                          : nlohmann::ordered_json()},
                      {"ratio", r ? nlohmann::ordered_json(*r) : nlohmann::ordered_json()}});
    }
  }
  if (order) j["order"] = order->to_json();
  auto& names = j["runs"] = nlohmann::ordered_json::array();
  for (const auto& [name, report] : reports) names.push_back(name);
  return j;
}

std::string SuiteResult::table() const {
  std::string out = "suite " + suite + " (" + tag + ") target " + target + ", metric " + metric + "\n";
  char line[200];
  if (!pairs.empty()) {
    std::snprintf(line, sizeof line, "%6s %6s %12s %12s %10s %12s %12s %10s\n", "seed", "rate", "transfer.dev",
                  "base.dev", "delta.dev", "transfer.test", "base.test", "delta.test");
    out += "baseline arm: " + baseline_arm + "\n";
    out += line;
    for (const auto& p : pairs) {
      std::snprintf(line, sizeof line, "%6llu %6.2f %12.4f %12.4f %+10.4f %12.4f %12.4f %+10.4f\n",
                    static_cast<unsigned long long>(p.seed), p.rate, p.transfer.dev, p.baseline.dev,
                    p.transfer.dev - p.baseline.dev, p.transfer.test, p.baseline.test,
                    p.transfer.test - p.baseline.test);
      out += line;
    }
  }
  if (!convergence.empty()) {
    out += "convergence (steps for transfer to reach the baseline's final dev loss)\n";
    for (const auto& c : convergence) {
      const auto r = c.ratio();
      out += "  seed " + std::to_string(c.seed) + ": target loss " + fmt_num(c.baseline_final_loss) + ", " +
             (c.transfer_steps ? std::to_string(*c.transfer_steps) : std::string("never")) + " / " +
             std::to_string(c.baseline_steps) + " steps" + (r ? " (ratio " + fmt_num(*r) + ")" : std::string()) +
             "\n";
    }
  }
  if (order) {
    for (const auto& row : order->rows) {
      std::string name;
      for (const auto& t : row.order) name += (name.empty() ? "" : " > ") + t;
      out += "  order " + name + ": mean " + fmt_num(row.mean) + " sd " + fmt_num(row.stddev) + "\n";
    }
    out += "  spread " + fmt_num(order->spread) + "\n";
  }
  return out;
}

SuiteResult run_suite(const Workspace& ws, const std::string& name, std::span<const std::uint64_t> seeds,
                      SourceCache* cache) {
  if (seeds.empty()) throw ConfigError("a suite needs at least one seed");
  const auto& suite = ws.config.suite(name);
  SourceCache local;
  auto& sources = cache ? *cache : local;

  SuiteResult out;
  out.suite = name;
  out.tag = suite.tag;
  out.target = suite.target;
  out.metric = metrics::metric_name(ws.corpus(suite.target).task.kind);
  out.fingerprint = ws.config.fingerprint();
  out.seeds.assign(seeds.begin(), seeds.end());

  if (name == "cross-task" || name == "cross-language") {
    out.baseline_arm = "finetune";
    run_pairs(ws, suite, out, seeds, sources, true, false);
  } else if (name == "ablation") {
    out.baseline_arm = "random-prefix";
    run_pairs(ws, suite, out, seeds, sources, false, true);
  } else if (name == "low-resource") {
    if (suite.rates.empty()) throw ConfigError("suite low-resource lists no rates");
    out.baseline_arm = "random-prefix";
    run_pairs(ws, suite, out, seeds, sources, false, false);
  } else if (name == "order") {
    if (suite.orders.size() < 2) throw ConfigError("suite order needs at least two orders");
    const auto tasks = ws.corpora_for(suite.sources);
    const auto target = take_train(ws.corpus(suite.target), suite.target_train);
    out.order = train::order_experiment(tasks, target, ws.vocab, suite.orders, ws.config.source, ws.config.target,
                                        ws.model, ws.base, seeds);
  } else {
    throw ConfigError("unknown suite '" + name + "'");
  }
  return out;
}

}  // namespace transcoder::experiments
