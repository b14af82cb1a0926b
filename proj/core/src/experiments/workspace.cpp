#include "transcoder/experiments/workspace.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "transcoder/errors.hpp"
#include "transcoder/util/hash.hpp"
#include "transcoder/util/rng.hpp"

namespace transcoder::experiments {

namespace fs = std::filesystem;

namespace {

std::string hash_json(const nlohmann::json& j) { return util::to_hex(util::fnv1a(j.dump())); }

nlohmann::json plain(const nlohmann::ordered_json& j) { return nlohmann::json::parse(j.dump()); }

void expect_file(const fs::path& path, const std::string& hint) {
  if (!fs::exists(path)) throw DataError("missing " + path.string() + " (run " + hint + " first)");
}

}  // namespace

std::string data_fingerprint(const ExperimentConfig& config) { return hash_json(plain(config.to_json())["data"]); }

std::string base_fingerprint(const ExperimentConfig& config) {
  auto j = plain(config.to_json());
  auto& m = j["model"];
  for (const auto* key : {"prefix_length", "prefix_embedding_dim", "prefix_hidden_dim"}) m.erase(key);
  return hash_json({{"data", j["data"]}, {"model", m}, {"pretrain", j["pretrain"]}});
}

const data::Corpus& Workspace::corpus(const std::string& task_id) const {
  const auto it = corpora.find(task_id);
  if (it == corpora.end()) throw ConfigError("unknown task '" + task_id + "'");
  return it->second;
}

std::vector<data::Corpus> Workspace::corpora_for(const std::vector<std::string>& task_ids) const {
  std::vector<data::Corpus> out;
  out.reserve(task_ids.size());
  for (const auto& id : task_ids) out.push_back(corpus(id));
  return out;
}

std::uint64_t corpus_seed(const ExperimentConfig& config, const std::string& task_id) {
  return util::mix_seed(config.data.seed, "corpus/" + task_id);
}

std::vector<data::RawCorpus> make_raw_corpora(const ExperimentConfig& config) {
  std::vector<data::RawCorpus> raws;
  for (const auto& lang : config.data.languages) {
    const auto& sizes = config.data.sizes.at(lang);
    for (const auto& kind_name : config.data.kinds) {
      const auto kind = data::parse_task_kind(kind_name);
      const auto id = data::default_task_id(kind, lang);
      raws.push_back(
          data::generate_minilang_corpus(lang, kind, sizes.train, sizes.dev, sizes.test, corpus_seed(config, id)));
    }
  }
  for (const auto& t : config.data.jsonl) {
    data::RawCorpus raw;
    raw.task = {t.task_id, data::parse_task_kind(t.kind), t.source_language, t.target_language, t.train};
    raw.train = data::read_jsonl(t.train);
    raw.dev = data::read_jsonl(t.dev);
    raw.test = data::read_jsonl(t.test);
    data::check_disjoint(raw);
    raws.push_back(std::move(raw));
  }
  return raws;
}

std::map<std::string, data::Corpus> encode_all(std::span<const data::RawCorpus> raws, const data::Vocab& vocab) {
  std::map<std::string, data::Corpus> out;
  for (const auto& raw : raws) out.emplace(raw.task.task_id, data::encode_corpus(raw, vocab));
  return out;
}

std::vector<std::vector<TokenId>> unimodal_programs(const std::map<std::string, data::Corpus>& corpora) {
  std::vector<std::vector<TokenId>> programs;
  std::set<std::vector<TokenId>> seen;
  for (const auto& [id, corpus] : corpora) {
    for (const auto& ex : corpus.train) {
      if (seen.insert(ex.source_tokens).second) programs.push_back(ex.source_tokens);
    }
  }
  return programs;
}

train::PretrainResult pretrain_base(const ExperimentConfig& config, const data::Vocab& vocab,
                                    const std::map<std::string, data::Corpus>& corpora) {
  const auto programs = unimodal_programs(corpora);
  if (programs.empty()) throw DataError("no programs to pretrain on");
  auto result = train::pretrain_denoising(programs, config.resolved_model(vocab.size()), config.pretrain,
                                          util::mix_seed(config.data.seed, "base"));
  result.report.info[kFingerprintKey] = config.fingerprint();
  return result;
}

Workspace build_workspace(const ExperimentConfig& config) {
  const auto raws = make_raw_corpora(config);
  auto vocab = data::build_vocab(raws);
  auto corpora = encode_all(raws, vocab);
  auto base = pretrain_base(config, vocab, corpora);
  const auto model = config.resolved_model(vocab.size());
  return {config, std::move(vocab), std::move(corpora), model, std::move(base.backbone)};
}

data::Corpus take_train(const data::Corpus& corpus, std::size_t n) {
  auto out = corpus;
  if (n != 0 && n < out.train.size()) out.train.resize(n);
  return out;
}

void write_json(const fs::path& path, const nlohmann::ordered_json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  model::write_file(path, j.dump(1) + "\n");
}

nlohmann::json read_json(const fs::path& path) {
  const auto text = model::read_file(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(path.string() + " is not valid JSON: " + e.what());
  }
}

void write_data(const ExperimentConfig& config, std::span<const data::RawCorpus> raws, const data::Vocab& vocab,
                bool force) {
  const auto dir = config.data_dir();
  if (fs::exists(dir)) {
    if (!force) throw DataError(dir.string() + " already exists; pass --force to overwrite");
    fs::remove_all(dir);
  }
  const nlohmann::ordered_json extra = {{kFingerprintKey, config.fingerprint()},
                                        {"data_fingerprint", data_fingerprint(config)}};
  for (const auto& raw : raws) data::save_raw_corpus(dir / raw.task.task_id, raw, vocab, extra);
  auto v = nlohmann::ordered_json::parse(vocab.to_json().dump());
  for (const auto& [key, value] : extra.items()) v[key] = value;
  std::vector<std::string> tasks;
  for (const auto& raw : raws) tasks.push_back(raw.task.task_id);
  v["tasks"] = tasks;
  write_json(dir / "vocab.json", v);
}

std::vector<data::RawCorpus> read_data(const ExperimentConfig& config, data::Vocab& vocab) {
  const auto dir = config.data_dir();
  expect_file(dir / "vocab.json", "gen-data");
  const auto v = read_json(dir / "vocab.json");
  if (v.value("data_fingerprint", std::string()) != data_fingerprint(config)) {
    throw DataError("data in " + dir.string() + " was generated from a different data config");
  }
  vocab = data::Vocab::from_json(v);
  std::vector<data::RawCorpus> raws;
  for (const auto& id : v.at("tasks")) {
    auto raw = data::load_raw_corpus(dir / id.get<std::string>());
    raws.push_back(std::move(raw));
  }
  return raws;
}

void save_checkpoint(const fs::path& path, model::Checkpoint checkpoint, const ExperimentConfig& config,
                     const std::map<std::string, std::uint64_t>& seeds) {
  if (!checkpoint.metadata.is_object()) checkpoint.metadata = nlohmann::json::object();
  checkpoint.metadata[kFingerprintKey] = config.fingerprint();
  checkpoint.metadata["seeds"] = seeds;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  checkpoint.save(path);
}

void save_report(const fs::path& path, train::TrainReport report, const ExperimentConfig& config) {
  report.info[kFingerprintKey] = config.fingerprint();
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  model::write_file(path, report.serialize());
}

Workspace load_workspace(const ExperimentConfig& config) {
  data::Vocab vocab;
  const auto raws = read_data(config, vocab);
  auto corpora = encode_all(raws, vocab);
  const auto path = config.base_dir() / "backbone.json";
  expect_file(path, "pretrain-base");
  const auto checkpoint = model::Checkpoint::load(path);
  if (checkpoint.metadata.value("base_fingerprint", std::string()) != base_fingerprint(config)) {
    throw DataError(path.string() + " was pretrained under a different model, data or pretrain config");
  }
  const auto model = config.resolved_model(vocab.size());
  auto base = model::load_backbone<float>(checkpoint, &model);
  return {config, std::move(vocab), std::move(corpora), model, std::move(base)};
}

std::vector<VerifyIssue> verify_outputs(const ExperimentConfig& config) {
  std::vector<VerifyIssue> issues;
  const fs::path root(config.output_dir);
  if (!fs::exists(root)) return {{root, "output directory does not exist"}};
  const auto expected = config.fingerprint();
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& path : files) {
    nlohmann::json j;
    try {
      j = read_json(path);
    } catch (const Error& e) {
      issues.push_back({path, e.what()});
      continue;
    }
    if (path.filename() == "config.json" && path.parent_path() == root) {
      try {
        if (ExperimentConfig::from_json(j).fingerprint() != expected) issues.push_back({path, "config differs"});
      } catch (const Error& e) {
        issues.push_back({path, e.what()});
      }
      continue;
    }
    const bool is_checkpoint = j.contains("tensors") && j.contains("kind");
    const auto& holder = is_checkpoint ? j.value("metadata", nlohmann::json::object())
                         : j.contains("info")  ? j.at("info")
                                               : j;
    const auto found = holder.is_object() ? holder.value(kFingerprintKey, std::string()) : std::string();
    if (found.empty()) {
      issues.push_back({path, "no experiment fingerprint"});
    } else if (found != expected) {
      issues.push_back({path, "fingerprint " + found + " does not match config " + expected});
    }
    try {
      if (is_checkpoint) {
        const auto c = model::Checkpoint::parse(model::read_file(path));
        if (j.at("fingerprint") != c.fingerprint()) issues.push_back({path, "checkpoint fingerprint mismatch"});
      } else if (path.filename() == "vocab.json") {
        data::Vocab::from_json(j);
      } else if (path.filename() == "manifest.json") {
        const auto raw = data::load_raw_corpus(path.parent_path());
        const auto vocab = data::Vocab::from_json(read_json(path.parent_path().parent_path() / "vocab.json"));
        if (j.at("vocab_checksum") != vocab.checksum()) issues.push_back({path, "vocabulary checksum mismatch"});
        if (j.at("data_fingerprint") != data_fingerprint(config)) issues.push_back({path, "data fingerprint mismatch"});
      } else if (j.contains("stage") && j.contains("steps")) {
        train::TrainReport::from_json(j).validate();
      }
    } catch (const Error& e) {
      issues.push_back({path, e.what()});
    } catch (const nlohmann::json::exception& e) {
      issues.push_back({path, e.what()});
    }
  }
  return issues;
}

}  // namespace transcoder::experiments
