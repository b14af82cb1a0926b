#include <cstdlib>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "transcoder/errors.hpp"
#include "transcoder/experiments/config.hpp"
#include "transcoder/experiments/suites.hpp"
#include "transcoder/experiments/workspace.hpp"
#include "transcoder/metrics/metrics.hpp"
#include "transcoder/model/checkpoint.hpp"
#include "transcoder/util/allocator.hpp"

namespace fs = std::filesystem;
using namespace transcoder;
using experiments::ExperimentConfig;

namespace {

enum ExitCode : int { kOk = 0, kFailure = 1, kConfig = 2, kData = 3, kNumeric = 4 };

struct Common {
  std::string config_path;
  std::string output_dir;
  bool quiet = false;
};

ExperimentConfig load_config(const Common& common) {
  auto config = common.config_path.empty() ? ExperimentConfig::defaults()
                                           : ExperimentConfig::load(common.config_path);
  if (!common.output_dir.empty()) config.output_dir = common.output_dir;
  config.validate();
  return config;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string join(const std::vector<std::string>& items, const std::string& sep) {
  std::string out;
  for (const auto& s : items) out += (out.empty() ? "" : sep) + s;
  return out;
}

std::uint64_t pick_seed(const ExperimentConfig& config, std::optional<std::uint64_t> seed) {
  return seed ? *seed : config.seeds.front();
}

int gen_data(const Common& common, bool force) {
  const auto config = load_config(common);
  const auto raws = experiments::make_raw_corpora(config);
  const auto vocab = data::build_vocab(raws);
  experiments::write_data(config, raws, vocab, force);
  experiments::write_json(fs::path(config.output_dir) / "config.json", config.to_json());
  for (const auto& raw : raws) {
    std::cout << raw.task.task_id << ": " << raw.train.size() << "/" << raw.dev.size() << "/" << raw.test.size()
              << "\n";
  }
  std::cout << "vocabulary: " << vocab.size() << " tokens, wrote " << config.data_dir().string() << "\n";
  return kOk;
}

int pretrain_base(const Common& common, bool force) {
  const auto config = load_config(common);
  const auto dir = config.base_dir();
  if (fs::exists(dir / "backbone.json") && !force) {
    throw DataError((dir / "backbone.json").string() + " already exists; pass --force to overwrite");
  }
  data::Vocab vocab;
  const auto raws = experiments::read_data(config, vocab);
  const auto corpora = experiments::encode_all(raws, vocab);
  auto result = experiments::pretrain_base(config, vocab, corpora);
  auto checkpoint = model::snapshot(result.backbone);
  checkpoint.metadata = {{"base_fingerprint", experiments::base_fingerprint(config)}};
  experiments::save_checkpoint(dir / "backbone.json", std::move(checkpoint), config, result.report.seeds);
  experiments::save_report(dir / "report.json", result.report, config);
  const auto smooth = train::smoothed_losses(result.report, 50);
  std::cout << "denoising loss " << smooth.front() << " -> " << smooth.back() << ", wrote " << dir.string() << "\n";
  return kOk;
}

int train_source(const Common& common, const std::string& tasks_arg, const std::string& order_arg,
                 std::optional<std::uint64_t> seed_arg, std::string name) {
  const auto config = load_config(common);
  const auto ws = experiments::load_workspace(config);
  const auto seed = pick_seed(config, seed_arg);
  auto tasks = split_list(tasks_arg);
  auto plan = config.source;
  if (!order_arg.empty()) {
    plan.order = split_list(order_arg);
    plan.visit_policy = train::VisitPolicy::Fixed;
    if (tasks.empty()) tasks = plan.order;
  }
  if (tasks.empty()) throw ConfigError("train-source needs --tasks or --order");
  if (name.empty()) name = join(tasks, "+") + "-seed" + std::to_string(seed);
  const auto corpora = ws.corpora_for(tasks);
  auto result = train::train_source(corpora, plan, train::PrefixBank::init(ws.model, train::prefix_seed(seed), true),
                                    ws.base, seed);
  const auto dir = fs::path(config.output_dir) / "source" / name;
  experiments::save_checkpoint(dir / "prefix.json", model::snapshot(result.prefix), config, result.report.seeds);
  experiments::save_report(dir / "report.json", result.report, config);
  std::cout << "visit order: " << result.report.info.value("visit_order", nlohmann::ordered_json()).dump() << "\n";
  std::cout << (dir / "report.json").string() << "\n";
  return kOk;
}

int specify_target(const Common& common, const std::string& task, const std::string& prefix_path, bool random_prefix,
                   std::optional<double> rate, std::size_t train_size, std::optional<std::uint64_t> seed_arg,
                   std::string name) {
  const auto config = load_config(common);
  const auto ws = experiments::load_workspace(config);
  const auto seed = pick_seed(config, seed_arg);
  const auto target = experiments::take_train(ws.corpus(task), train_size);
  train::PrefixBank prefix = random_prefix
                                 ? train::PrefixBank::init(ws.model, train::prefix_seed(seed), true)
                                 : model::load_prefix<float>(model::Checkpoint::load(prefix_path), &ws.model);
  const std::string arm = random_prefix ? "random-prefix" : "transfer";
  auto result = rate ? train::low_resource_run(target, ws.vocab, *rate, std::move(prefix), ws.base, config.target,
                                               seed, {arm})
                     : train::specify_target(target, ws.vocab, std::move(prefix), ws.base, config.target, seed, {arm});
  if (random_prefix) result.report.seeds["prefix_init"] = train::prefix_seed(seed);
  if (name.empty()) {
    name = task + "-" + arm + (rate ? "-rate" + std::to_string(*rate).substr(0, 4) : std::string()) + "-seed" +
           std::to_string(seed);
  }
  const auto dir = fs::path(config.output_dir) / "target" / name;
  experiments::save_checkpoint(dir / "backbone.json", model::snapshot(result.backbone), config, result.report.seeds);
  if (result.prefix) {
    experiments::save_checkpoint(dir / "prefix.json", model::snapshot(*result.prefix), config, result.report.seeds);
  }
  experiments::save_report(dir / "report.json", result.report, config);
  std::cerr << "best dev " << result.best_dev_metric << " at epoch " << result.best_epoch << ", test "
            << result.test.metric << " " << result.test.value << "\n";
  std::cout << (dir / "report.json").string() << "\n";
  return kOk;
}

int evaluate(const Common& common, const std::string& task, const std::string& backbone_path,
             const std::string& prefix_path, const std::string& split, std::size_t limit) {
  const auto config = load_config(common);
  const auto ws = experiments::load_workspace(config);
  const auto& corpus = ws.corpus(task);
  const auto& examples = split == "dev" ? corpus.dev : split == "train" ? corpus.train : corpus.test;
  const auto backbone =
      backbone_path.empty() ? ws.base : model::load_backbone<float>(model::Checkpoint::load(backbone_path), &ws.model);
  std::optional<train::PrefixBank> prefix;
  if (!prefix_path.empty()) {
    prefix = model::load_prefix<float>(model::Checkpoint::load(prefix_path), &ws.model);
    train::check_prefix_compatible(*prefix, backbone);
  }
  metrics::EvalOptions opts;
  opts.max_examples = limit;
  const auto result = metrics::evaluate<float>(backbone, prefix ? &*prefix : nullptr, examples, corpus.task,
                                               ws.vocab, opts);
  const metrics::EvalResult rows[] = {result};
  std::cout << metrics::format_table(rows);
  return kOk;
}

int run_suite(const Common& common, const std::string& name, const std::string& seeds_arg) {
  auto config = load_config(common);
  std::vector<std::uint64_t> seeds = config.seeds;
  if (!seeds_arg.empty()) {
    seeds.clear();
    for (const auto& s : split_list(seeds_arg)) {
      try {
        seeds.push_back(std::stoull(s));
      } catch (const std::exception&) {
        throw ConfigError("bad seed '" + s + "'");
      }
    }
  }
  const auto ws = experiments::load_workspace(config);
  const auto result = experiments::run_suite(ws, name, seeds);
  const auto dir = fs::path(config.output_dir) / "suites" / name;
  for (const auto& [run, report] : result.reports) experiments::save_report(dir / "reports" / (run + ".json"), report, config);
  experiments::write_json(dir / "summary.json", result.to_json());
  const auto table = result.table();
  model::write_file(dir / "table.txt", table);
  std::cout << table;
  return kOk;
}

int verify(const Common& common) {
  const auto config = load_config(common);
  const auto issues = experiments::verify_outputs(config);
  for (const auto& issue : issues) std::cout << "FAIL " << issue.path.string() << ": " << issue.problem << "\n";
  if (!issues.empty()) return kData;
  std::cout << "all artifacts match fingerprint " << config.fingerprint() << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  util::configure_allocator();
  CLI::App app{"transcoder: transferable prefix tuning on synthetic mini-languages"};
  app.require_subcommand(1);
  Common common;
  app.add_option("-c,--config", common.config_path, "Experiment config (JSON); defaults when omitted");
  app.add_option("-o,--output-dir", common.output_dir, "Override output_dir from the config");
  app.add_flag("-q,--quiet", common.quiet, "Only log warnings and errors");

  bool force = false;
  auto* gen = app.add_subcommand("gen-data", "Generate the mini-language corpora and vocabulary");
  gen->add_flag("--force", force, "Overwrite existing data");

  auto* pre = app.add_subcommand("pretrain-base", "Denoising pretraining of the base backbone");
  pre->add_flag("--force", force, "Overwrite an existing snapshot");

  std::string tasks, order, name;
  std::optional<std::uint64_t> seed;
  auto* src = app.add_subcommand("train-source", "Continual source-task training of a prefix");
  src->add_option("--tasks", tasks, "Comma-separated source task ids");
  src->add_option("--order", order, "Fixed visit order (comma-separated permutation of the tasks)");
  src->add_option("--seed", seed, "Run seed (default: first configured seed)");
  src->add_option("--name", name, "Output name under source/");

  std::string task, prefix_path;
  bool random_prefix = false;
  std::optional<double> rate;
  std::size_t train_size = 0;
  auto* tgt = app.add_subcommand("specify-target", "Tune a fresh backbone plus prefix on a target task");
  tgt->add_option("--task", task, "Target task id")->required();
  auto* prefix_opt = tgt->add_option("--prefix", prefix_path, "Prefix checkpoint from train-source");
  auto* random_opt = tgt->add_flag("--random-prefix", random_prefix, "Use a freshly initialized prefix");
  prefix_opt->excludes(random_opt);
  tgt->add_option("--rate", rate, "Keep this share of the target training split");
  tgt->add_option("--train-size", train_size, "Keep the first n training examples (0 = all)");
  tgt->add_option("--seed", seed, "Run seed (default: first configured seed)");
  tgt->add_option("--name", name, "Output name under target/");

  std::string backbone_path, split = "test";
  std::size_t limit = 0;
  auto* ev = app.add_subcommand("evaluate", "Score a backbone (and prefix) on one split");
  ev->add_option("--task", task, "Task id")->required();
  ev->add_option("--backbone", backbone_path, "Backbone checkpoint (default: the base snapshot)");
  ev->add_option("--prefix", prefix_path, "Prefix checkpoint");
  ev->add_option("--split", split, "train, dev or test")->check(CLI::IsMember({"train", "dev", "test"}));
  ev->add_option("--limit", limit, "Score at most n examples (0 = all)");

  std::string suite_name, seeds;
  auto* su = app.add_subcommand("suite", "Run a scripted experiment suite");
  su->add_option("name", suite_name, "Suite name")
      ->required()
      ->check(CLI::IsMember(experiments::kSuiteNames));
  su->add_option("--seeds", seeds, "Comma-separated seeds (default: config seeds)");

  auto* ver = app.add_subcommand("verify", "Recompute fingerprints of every artifact under output_dir");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }
  spdlog::set_level(common.quiet ? spdlog::level::warn : spdlog::level::info);

  try {
    if (*gen) return gen_data(common, force);
    if (*pre) return pretrain_base(common, force);
    if (*src) return train_source(common, tasks, order, seed, name);
    if (*tgt) {
      if (prefix_path.empty() && !random_prefix) throw ConfigError("specify-target needs --prefix or --random-prefix");
      return specify_target(common, task, prefix_path, random_prefix, rate, train_size, seed, name);
    }
    if (*ev) return evaluate(common, task, backbone_path, prefix_path, split, limit);
    if (*su) return run_suite(common, suite_name, seeds);
    if (*ver) return verify(common);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const CompatibilityError& e) {
    std::cerr << "compatibility error: " << e.what() << "\n";
    return kConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kFailure;
}
