#include "transcoder/data/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include "transcoder/data/minilang.hpp"
#include "transcoder/errors.hpp"
#include "transcoder/util/rng.hpp"

namespace transcoder::data {

namespace fs = std::filesystem;

std::string_view to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::Summarization: return "summarization";
    case TaskKind::Translation: return "translation";
    case TaskKind::Classification: return "classification";
  }
  return "?";
}

TaskKind parse_task_kind(std::string_view name) {
  if (name == "summarization") return TaskKind::Summarization;
  if (name == "translation") return TaskKind::Translation;
  if (name == "classification") return TaskKind::Classification;
  throw ConfigError("unknown task kind '" + std::string(name) + "'");
}

void TaskSpec::validate() const {
  if (task_id.empty()) throw ConfigError("task_id must not be empty");
  if (source_language.empty()) throw ConfigError("task " + task_id + ": source_language must not be empty");
  if (kind == TaskKind::Translation && !target_language) {
    throw ConfigError("task " + task_id + ": translation requires a target_language");
  }
}

nlohmann::json TaskSpec::to_json() const {
  nlohmann::json j = {{"task_id", task_id},
                      {"kind", std::string(to_string(kind))},
                      {"source_language", source_language},
                      {"dataset_path", dataset_path}};
  j["target_language"] = target_language ? nlohmann::json(*target_language) : nlohmann::json(nullptr);
  return j;
}

TaskSpec TaskSpec::from_json(const nlohmann::json& j) {
  TaskSpec t;
  try {
    t.task_id = j.at("task_id").get<std::string>();
    t.kind = parse_task_kind(j.at("kind").get<std::string>());
    t.source_language = j.at("source_language").get<std::string>();
    if (j.contains("target_language") && !j.at("target_language").is_null()) {
      t.target_language = j.at("target_language").get<std::string>();
    }
    t.dataset_path = j.value("dataset_path", std::string());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed task spec: ") + e.what());
  }
  t.validate();
  return t;
}

std::string default_task_id(TaskKind kind, std::string_view language) {
  return std::string(to_string(kind)) + "-" + std::string(language);
}

RawCorpus generate_minilang_corpus(std::string_view language, TaskKind kind, std::size_t n_train,
                                   std::size_t n_dev, std::size_t n_test, std::uint64_t seed) {
  const auto lang = minilang::parse_language(language);
  if (n_train < 1 || n_dev < 1 || n_test < 1) throw ConfigError("corpus split sizes must be at least 1");

  RawCorpus corpus;
  corpus.seed = seed;
  corpus.task.task_id = default_task_id(kind, language);
  corpus.task.kind = kind;
  corpus.task.source_language = std::string(language);
  if (kind == TaskKind::Translation) corpus.task.target_language = std::string(minilang::to_string(minilang::other(lang)));

  auto rng = util::Rng::stream(seed, "corpus/" + corpus.task.task_id);
  std::unordered_set<std::string> seen;
  auto fill = [&](std::vector<RawExample>& split, std::size_t n) {
    std::size_t attempts = 0;
    while (split.size() < n) {
      if (++attempts > 200 * n + 1000) {
        throw DataError("could not generate " + std::to_string(n) + " distinct programs for " + corpus.task.task_id);
      }
      // Labels alternate within each split, starting with buggy.
      const bool buggy = kind == TaskKind::Classification && split.size() % 2 == 0;
      const auto program = minilang::generate_program(rng, buggy);
      RawExample ex;
      ex.source = minilang::render(program, lang);
      if (!seen.insert(ex.source).second) continue;
      switch (kind) {
        case TaskKind::Summarization: ex.target = minilang::summarize(program); break;
        case TaskKind::Translation: ex.target = minilang::render(program, minilang::other(lang)); break;
        case TaskKind::Classification: ex.target = std::string(buggy ? kBuggyLabel : kCleanLabel); break;
      }
      split.push_back(std::move(ex));
    }
  };
  fill(corpus.train, n_train);
  fill(corpus.dev, n_dev);
  fill(corpus.test, n_test);
  return corpus;
}

Vocab build_vocab(std::span<const RawCorpus> corpora) {
  if (corpora.empty()) throw ConfigError("build_vocab needs at least one corpus");
  std::set<std::string> tokens;
  for (const auto& c : corpora) {
    for (const auto* split : {&c.train, &c.dev, &c.test}) {
      for (const auto& ex : *split) {
        for (auto& t : tokenize(ex.source)) tokens.insert(std::move(t));
        for (auto& t : tokenize(ex.target)) tokens.insert(std::move(t));
      }
    }
  }
  const std::vector<std::string> flat(tokens.begin(), tokens.end());
  return Vocab::from_tokens(flat);
}

Example encode_example(const RawExample& raw, const Vocab& vocab) {
  Example ex;
  ex.raw_source = raw.source;
  ex.raw_target = raw.target;
  ex.source_tokens = vocab.encode_source(raw.source);
  ex.target_tokens = vocab.encode_target(raw.target);
  return ex;
}

void check_disjoint(const RawCorpus& corpus) {
  std::unordered_set<std::string> seen;
  std::set<std::string> clashes;
  for (const auto* split : {&corpus.train, &corpus.dev, &corpus.test}) {
    std::unordered_set<std::string> local;
    for (const auto& ex : *split) local.insert(ex.source);
    for (const auto& s : local)
      if (!seen.insert(s).second) clashes.insert(s);
  }
  if (!clashes.empty()) {
    throw DataError("corpus " + corpus.task.task_id + ": " + std::to_string(clashes.size()) +
                    " source(s) appear in more than one split, e.g. '" + *clashes.begin() + "'");
  }
}

Corpus encode_corpus(const RawCorpus& raw, const Vocab& vocab) {
  raw.task.validate();
  if (raw.train.empty()) throw DataError("corpus " + raw.task.task_id + " has an empty train split");
  check_disjoint(raw);
  Corpus c;
  c.task = raw.task;
  c.seed = raw.seed;
  c.vocab_checksum = vocab.checksum();
  auto encode_split = [&](const std::vector<RawExample>& in, std::vector<Example>& out, std::string_view name) {
    out.reserve(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) {
      try {
        out.push_back(encode_example(in[i], vocab));
      } catch (const DataError& e) {
        throw DataError(raw.task.task_id + " " + std::string(name) + "[" + std::to_string(i) + "]: " + e.what());
      }
    }
  };
  encode_split(raw.train, c.train, "train");
  encode_split(raw.dev, c.dev, "dev");
  encode_split(raw.test, c.test, "test");
  return c;
}

std::vector<RawExample> read_jsonl(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<RawExample> out;
  std::vector<std::string> problems;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error&) {
      problems.push_back("line " + std::to_string(line_no) + ": invalid JSON");
      continue;
    }
    if (!j.is_object()) {
      problems.push_back("line " + std::to_string(line_no) + ": not a JSON object");
      continue;
    }
    auto text_field = [&](const char* key) -> std::optional<std::string> {
      if (!j.contains(key)) return std::nullopt;
      if (!j.at(key).is_string()) {
        problems.push_back("line " + std::to_string(line_no) + ": \"" + key + "\" is not a string");
        return std::string();
      }
      return j.at(key).get<std::string>();
    };
    const auto source = text_field("source");
    auto target = text_field("target");
    const auto label = text_field("label");
    if (!target && label) target = label;
    if (!source) problems.push_back("line " + std::to_string(line_no) + ": missing \"source\"");
    if (!target) problems.push_back("line " + std::to_string(line_no) + ": missing \"target\"");
    if (source && target) out.push_back({*source, *target});
  }
  if (!problems.empty()) {
    std::string msg = path.string() + ": " + std::to_string(problems.size()) + " malformed line(s)";
    for (const auto& p : problems) msg += "\n  " + p;
    throw DataError(msg);
  }
  return out;
}

void write_jsonl(const fs::path& path, std::span<const RawExample> examples) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& ex : examples) {
    nlohmann::ordered_json j = {{"source", ex.source}, {"target", ex.target}};
    out << j.dump() << '\n';
  }
  if (!out) throw DataError("write failed for " + path.string());
}

Corpus load_jsonl(const fs::path& path, const Vocab& vocab, const TaskSpec& task) {
  RawCorpus raw;
  raw.task = task;
  raw.train = read_jsonl(path);
  return encode_corpus(raw, vocab);
}

Corpus subsample(const Corpus& corpus, double rate, std::uint64_t seed) {
  if (!(rate > 0.0 && rate <= 1.0)) throw ConfigError("subsample rate must lie in (0, 1], got " + std::to_string(rate));
  const std::size_t n = corpus.train.size();
  // Guard against 0.1 * 1000 evaluating to 100.00000000000001.
  const auto keep = std::min(n, static_cast<std::size_t>(std::ceil(rate * static_cast<double>(n) - 1e-9)));
  Corpus out = corpus;
  if (keep == n) return out;
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  auto rng = util::Rng::stream(seed, "subsample");
  rng.shuffle(std::span<std::size_t>(order));
  order.resize(std::max<std::size_t>(keep, 1));
  std::sort(order.begin(), order.end());
  out.train.clear();
  for (const auto i : order) out.train.push_back(corpus.train[i]);
  return out;
}

nlohmann::ordered_json manifest(const RawCorpus& corpus, const Vocab& vocab) {
  nlohmann::ordered_json m;
  m["task_id"] = corpus.task.task_id;
  m["kind"] = std::string(to_string(corpus.task.kind));
  m["source_language"] = corpus.task.source_language;
  m["target_language"] =
      corpus.task.target_language ? nlohmann::ordered_json(*corpus.task.target_language) : nlohmann::ordered_json();
  m["sizes"] = {{"train", corpus.train.size()}, {"dev", corpus.dev.size()}, {"test", corpus.test.size()}};
  m["seed"] = corpus.seed;
  m["vocab_checksum"] = vocab.checksum();
  return m;
}

void save_raw_corpus(const fs::path& dir, const RawCorpus& corpus, const Vocab& vocab,
                     const nlohmann::ordered_json& extra) {
  fs::create_directories(dir);
  write_jsonl(dir / "train.jsonl", corpus.train);
  write_jsonl(dir / "dev.jsonl", corpus.dev);
  write_jsonl(dir / "test.jsonl", corpus.test);
  std::ofstream out(dir / "manifest.json", std::ios::binary | std::ios::trunc);
  auto m = manifest(corpus, vocab);
  for (const auto& [key, value] : extra.items()) m[key] = value;
  out << m.dump(2) << '\n';
  if (!out) throw DataError("cannot write manifest in " + dir.string());
}

RawCorpus load_raw_corpus(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json", std::ios::binary);
  if (!in) throw DataError("missing manifest.json in " + dir.string());
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("malformed manifest in " + dir.string() + ": " + e.what());
  }
  RawCorpus c;
  c.task = TaskSpec::from_json(m);
  c.task.dataset_path = dir.string();
  c.seed = m.value("seed", std::uint64_t{0});
  c.train = read_jsonl(dir / "train.jsonl");
  c.dev = read_jsonl(dir / "dev.jsonl");
  c.test = read_jsonl(dir / "test.jsonl");
  const auto& sizes = m.at("sizes");
  if (sizes.at("train") != c.train.size() || sizes.at("dev") != c.dev.size() || sizes.at("test") != c.test.size()) {
    throw DataError("split sizes in " + dir.string() + " disagree with its manifest");
  }
  check_disjoint(c);
  return c;
}

}  // namespace transcoder::data
