#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "transcoder/experiments/workspace.hpp"
#include "transcoder/train/trainer.hpp"

namespace transcoder::experiments {

/// Source-stage results keyed by (sources, seed), reused across suites that
/// share a source configuration.
class SourceCache {
 public:
  const train::SourceResult& get(const Workspace& ws, const std::vector<std::string>& sources, std::uint64_t seed);

 private:
  std::map<std::pair<std::vector<std::string>, std::uint64_t>, train::SourceResult> entries_;
};

struct ArmScore {
  double dev = 0.0;   // best dev metric
  double test = 0.0;  // test metric of the best-dev state
};

struct PairedRow {
  std::uint64_t seed = 0;
  double rate = 1.0;
  ArmScore transfer;
  ArmScore baseline;
};

/// Steps the transfer arm needs to reach the baseline's final dev loss.
struct ConvergenceRow {
  std::uint64_t seed = 0;
  double baseline_final_loss = 0.0;
  std::size_t baseline_steps = 0;
  std::optional<std::size_t> transfer_steps;
  [[nodiscard]] std::optional<double> ratio() const;
};

struct SuiteResult {
  std::string suite;
  std::string tag;
  std::string target;
  std::string metric;
  std::string baseline_arm;  // "random-prefix" or "finetune"
  std::string fingerprint;
  std::vector<std::uint64_t> seeds;
  std::vector<PairedRow> pairs;
  std::vector<ConvergenceRow> convergence;
  std::optional<train::OrderTable> order;
  std::vector<std::pair<std::string, train::TrainReport>> reports;  // named per run

  /// Everything but the per-run reports.
  [[nodiscard]] nlohmann::ordered_json to_json() const;
  [[nodiscard]] std::string table() const;
};

/// Runs one named suite over `seeds`:
///   cross-task, cross-language: transferred prefix vs plain fine-tuning
///   ablation: transferred prefix vs random prefix, with convergence rows
///   low-resource: the same pair at every configured rate
///   order: one target run per (source order, seed)
SuiteResult run_suite(const Workspace& ws, const std::string& name, std::span<const std::uint64_t> seeds,
                      SourceCache* cache = nullptr);

/// Compares the per-epoch dev losses of two target runs.
ConvergenceRow convergence_row(std::uint64_t seed, const train::TrainReport& transfer,
                               const train::TrainReport& baseline);

}  // namespace transcoder::experiments
