#include <doctest.h>

#include <filesystem>

#include "transcoder/errors.hpp"
#include "transcoder/experiments/config.hpp"
#include "transcoder/experiments/suites.hpp"
#include "transcoder/experiments/workspace.hpp"

using namespace transcoder;
using experiments::ExperimentConfig;
namespace fs = std::filesystem;

namespace {

ExperimentConfig tiny_config(const std::string& out) {
  nlohmann::json j = {
      {"model",
       {{"d_model", 16}, {"d_ff", 32}, {"n_heads", 2}, {"n_encoder_layers", 1}, {"n_decoder_layers", 1},
        {"prefix_length", 2}, {"prefix_embedding_dim", 8}, {"prefix_hidden_dim", 16}}},
      {"data", {{"sizes", {{"alpha", {{"train", 60}, {"dev", 8}, {"test", 8}}}, {"beta", {{"train", 40}, {"dev", 8}, {"test", 8}}}}}}},
      {"pretrain", {{"steps", 10}, {"batch_size", 8}}},
      {"source", {{"epochs", 1}, {"batches_per_epoch", 6}, {"batch_size", 8}, {"dev_examples", 4}}},
      {"target", {{"epochs", 1}, {"batch_size", 8}}},
      {"seeds", {1, 2}},
      {"output_dir", out}};
  return ExperimentConfig::from_json(j);
}

}  // namespace

TEST_CASE("default config is valid and carries the five presets") {
  const auto c = ExperimentConfig::defaults();
  CHECK_NOTHROW(c.validate());
  CHECK(c.suites.size() == 5);
  CHECK(c.suite("cross-task").tag == "Trans+CLS2Sum");
  CHECK(c.suite("ablation").tag == "Sum+CLS2CLS");
  CHECK(c.suite("order").orders.size() == 2);
  CHECK_THROWS_AS(c.suite("nope"), ConfigError);
}

TEST_CASE("config parsing is strict") {
  CHECK_THROWS_AS(ExperimentConfig::from_json({{"bogus", 1}}), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json({{"model", {{"d_modle", 3}}}}), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json({{"schema_version", 9}}), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json({{"seeds", nlohmann::json::array()}}), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json({{"suites", {{"ablation", {{"sources", {"x"}}, {"target", "y"}}}}}}),
                  ConfigError);
}

TEST_CASE("config round-trips and the fingerprint ignores output_dir only") {
  const auto c = ExperimentConfig::defaults();
  const auto back = ExperimentConfig::from_json(nlohmann::json::parse(c.to_json().dump()));
  CHECK(back.fingerprint() == c.fingerprint());
  auto moved = c;
  moved.output_dir = "elsewhere";
  CHECK(moved.fingerprint() == c.fingerprint());
  auto changed = c;
  changed.target.learning_rate = 0.5;
  CHECK(changed.fingerprint() != c.fingerprint());
}

TEST_CASE("workspace on disk: gen, load, refuse overwrite, verify") {
  const auto out = (fs::temp_directory_path() / "transcoder-unit-experiments").string();
  fs::remove_all(out);
  const auto config = tiny_config(out);
  const auto raws = experiments::make_raw_corpora(config);
  CHECK(raws.size() == 6);
  const auto vocab = data::build_vocab(raws);
  experiments::write_data(config, raws, vocab, false);
  CHECK_THROWS_AS(experiments::write_data(config, raws, vocab, false), DataError);
  CHECK_NOTHROW(experiments::write_data(config, raws, vocab, true));

  data::Vocab loaded;
  const auto back = experiments::read_data(config, loaded);
  CHECK(loaded == vocab);
  REQUIRE(back.size() == raws.size());
  CHECK(back[0].train == raws[0].train);

  CHECK_THROWS_AS(experiments::load_workspace(config), DataError);  // no base yet

  auto other = config;
  other.data.seed = 99;
  CHECK_THROWS_AS(experiments::read_data(other, loaded), DataError);

  const auto corpora = experiments::encode_all(back, loaded);
  auto base = experiments::pretrain_base(config, loaded, corpora);
  auto checkpoint = model::snapshot(base.backbone);
  checkpoint.metadata = {{"base_fingerprint", experiments::base_fingerprint(config)}};
  experiments::save_checkpoint(config.base_dir() / "backbone.json", checkpoint, config, base.report.seeds);
  experiments::save_report(config.base_dir() / "report.json", base.report, config);
  experiments::write_json(fs::path(out) / "config.json", config.to_json());

  const auto ws = experiments::load_workspace(config);
  CHECK(ws.base.content_hash() == base.backbone.content_hash());
  CHECK(ws.corpora.size() == 6);
  CHECK(experiments::verify_outputs(config).empty());

  auto changed = config;
  changed.target.epochs = 3;
  CHECK_FALSE(experiments::verify_outputs(changed).empty());

  auto prefix_changed = config;
  prefix_changed.model.prefix_length = 3;
  CHECK_NOTHROW(experiments::load_workspace(prefix_changed));  // prefix settings do not touch the base

  auto j = experiments::read_json(config.base_dir() / "report.json");
  j["info"]["experiment_fingerprint"] = "0000";
  experiments::write_json(config.base_dir() / "report.json", nlohmann::ordered_json::parse(j.dump()));
  const auto issues = experiments::verify_outputs(config);
  REQUIRE(issues.size() == 1);
  CHECK(issues[0].path.filename() == "report.json");
  fs::remove_all(out);
}

TEST_CASE("suites run on a tiny workspace and are reproducible") {
  const auto config = tiny_config("unused");
  const auto ws = experiments::build_workspace(config);
  const std::uint64_t seeds[] = {1, 2};
  experiments::SourceCache cache;
  const auto a = experiments::run_suite(ws, "ablation", seeds, &cache);
  CHECK(a.pairs.size() == 2);
  CHECK(a.convergence.size() == 2);
  CHECK(a.baseline_arm == "random-prefix");
  CHECK(a.table().find("Sum+CLS2CLS") != std::string::npos);
  const auto again = experiments::run_suite(ws, "ablation", seeds);
  CHECK(again.to_json().dump() == a.to_json().dump());
  for (std::size_t i = 0; i < a.reports.size(); ++i) {
    CHECK(a.reports[i].first == again.reports[i].first);
    CHECK(a.reports[i].second.serialize() == again.reports[i].second.serialize());
  }

  const auto low = experiments::run_suite(ws, "low-resource", seeds, &cache);
  CHECK(low.pairs.size() == 6);
  const auto order = experiments::run_suite(ws, "order", seeds);
  REQUIRE(order.order.has_value());
  CHECK(order.order->rows.size() == 2);
  CHECK(order.order->spread >= 0.0);
}

TEST_CASE("convergence rows compare against the baseline's final dev loss") {
  train::TrainReport transfer;
  train::TrainReport baseline;
  baseline.epochs = {{1, 10, "t", "accuracy", 0.5, 2.0}, {2, 20, "t", "accuracy", 0.5, 1.5}};
  transfer.epochs = {{1, 10, "t", "accuracy", 0.5, 1.4}, {2, 20, "t", "accuracy", 0.5, 1.2}};
  const auto row = experiments::convergence_row(1, transfer, baseline);
  REQUIRE(row.transfer_steps.has_value());
  CHECK(*row.transfer_steps == 10);
  CHECK(*row.ratio() == doctest::Approx(0.5));
  transfer.epochs = {{1, 10, "t", "accuracy", 0.5, 1.9}};
  CHECK_FALSE(experiments::convergence_row(1, transfer, baseline).ratio().has_value());
}

TEST_CASE("take_train keeps a prefix of the training split") {
  data::Corpus c;
  c.train.resize(10);
  CHECK(experiments::take_train(c, 3).train.size() == 3);
  CHECK(experiments::take_train(c, 0).train.size() == 10);
  CHECK(experiments::take_train(c, 30).train.size() == 10);
}
