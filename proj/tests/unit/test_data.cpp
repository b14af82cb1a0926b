#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "transcoder/data/corpus.hpp"
#include "transcoder/data/minilang.hpp"
#include "transcoder/data/vocab.hpp"
#include "transcoder/errors.hpp"
#include "transcoder/model/tokens.hpp"

using namespace transcoder;
namespace ml = data::minilang;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("transcoder-unit-" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

}  // namespace

TEST_CASE("alpha and beta render the same program") {
  const auto p = ml::parse("let a = n + 3 ; print a ;", ml::Language::Alpha);
  CHECK(ml::render(p, ml::Language::Beta) == "a := n plus 3 . show a .");
  CHECK(ml::summarize(p) == "a becomes the sum of n and 3 then output a");
  CHECK(ml::run(p, 4) == std::vector<std::uint32_t>{7});
}

TEST_CASE("loops run their body count times") {
  const auto p = ml::parse("a := n . loop 3 times a := a times 2 . show a . end", ml::Language::Beta);
  CHECK(ml::run(p, 1) == std::vector<std::uint32_t>{2, 4, 8});
  CHECK(ml::render(p, ml::Language::Alpha) == "let a = n ; loop 3 { let a = a * 2 ; print a ; }");
}

TEST_CASE("arithmetic wraps modulo 2^32") {
  const auto p = ml::parse("let a = 0 - 1 ; print a ;", ml::Language::Alpha);
  CHECK(ml::run(p, 0) == std::vector<std::uint32_t>{4294967295u});
}

TEST_CASE("syntax errors and reads before assignment are data errors") {
  CHECK_THROWS_AS(ml::parse("let a = ;", ml::Language::Alpha), DataError);
  CHECK_THROWS_AS(ml::parse("a := n plus", ml::Language::Beta), DataError);
  CHECK_THROWS_AS(ml::parse("let a = n + 3 ; print a ;", ml::Language::Beta), DataError);
  const auto p = ml::parse("print b ;", ml::Language::Alpha);
  CHECK(ml::has_use_before_assign(p));
  CHECK_THROWS_AS(ml::run(p, 1), DataError);
  CHECK_THROWS_AS(ml::parse_language("gamma"), ConfigError);
}

TEST_CASE("generated programs round-trip and translations preserve behaviour") {
  auto rng = util::Rng::stream(3, "minilang-test");
  for (int i = 0; i < 300; ++i) {
    const bool buggy = i % 2 == 0;
    const auto p = ml::generate_program(rng, buggy);
    CHECK(ml::has_use_before_assign(p) == buggy);
    const auto alpha = ml::render(p, ml::Language::Alpha);
    const auto beta = ml::render(p, ml::Language::Beta);
    CHECK(ml::parse(alpha, ml::Language::Alpha) == p);
    CHECK(ml::parse(beta, ml::Language::Beta) == p);
    if (!buggy) {
      const auto input = static_cast<std::uint32_t>(i);
      CHECK(ml::run(ml::parse(alpha, ml::Language::Alpha), input) ==
            ml::run(ml::parse(beta, ml::Language::Beta), input));
    }
  }
}

TEST_CASE("generated corpora are deterministic, disjoint and labelled by the interpreter") {
  const auto a = data::generate_minilang_corpus("alpha", data::TaskKind::Classification, 60, 20, 20, 5);
  const auto b = data::generate_minilang_corpus("alpha", data::TaskKind::Classification, 60, 20, 20, 5);
  CHECK(a == b);
  CHECK_NOTHROW(data::check_disjoint(a));
  std::size_t buggy = 0;
  for (const auto& ex : a.train) {
    const bool bug = ml::has_use_before_assign(ml::parse(ex.source, ml::Language::Alpha));
    CHECK(ex.target == (bug ? "buggy" : "clean"));
    buggy += bug;
  }
  CHECK(buggy == 30);

  const auto t = data::generate_minilang_corpus("alpha", data::TaskKind::Translation, 20, 5, 5, 6);
  CHECK(t.task.target_language == std::optional<std::string>("beta"));
  for (const auto& ex : t.train) {
    CHECK(ml::render(ml::parse(ex.source, ml::Language::Alpha), ml::Language::Beta) == ex.target);
  }
}

TEST_CASE("vocabulary reserves special tokens and labels") {
  const std::vector<std::string> tokens = {"zeta", "let", "buggy", "let", "a"};
  const auto v = data::Vocab::from_tokens(tokens);
  CHECK(v.token(kPadId) == "<pad>");
  CHECK(v.token(kBosId) == "<bos>");
  CHECK(v.token(kEosId) == "<eos>");
  CHECK(v.token(kUnkId) == "<unk>");
  CHECK(v.token(4) == "buggy");
  CHECK(v.token(5) == "clean");
  CHECK(v.id("a") < v.id("let"));
  CHECK(v.id("unseen") == kUnkId);
  CHECK_THROWS_AS(v.token(static_cast<TokenId>(v.size())), DataError);

  const auto ids = v.encode_target("let a");
  CHECK(ids.front() == kBosId);
  CHECK(ids.back() == kEosId);
  CHECK(v.decode(ids) == "let a");
  CHECK_THROWS_AS(v.encode_source("   "), DataError);

  const auto restored = data::Vocab::from_json(v.to_json());
  CHECK(restored == v);
  CHECK(restored.checksum() == v.checksum());
  auto tampered = v.to_json();
  tampered["checksum"] = "0";
  CHECK_THROWS_AS(data::Vocab::from_json(tampered), DataError);
}

TEST_CASE("JSONL reading tolerates CRLF and blank lines and reports bad lines") {
  const auto dir = temp_dir("jsonl");
  write_text(dir / "ok.jsonl", "{\"source\": \"let a = 1 ;\", \"target\": \"x\"}\r\n\r\n{\"source\": \"print a ;\", "
                               "\"label\": \"buggy\"}\n");
  const auto rows = data::read_jsonl(dir / "ok.jsonl");
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].target == "x");
  CHECK(rows[1].target == "buggy");

  write_text(dir / "bad.jsonl", "{\"source\": \"a\"}\n{\"source\": \"b\", \"target\": \"c\"}\n{\"source\": \"d\"}\n");
  try {
    data::read_jsonl(dir / "bad.jsonl");
    FAIL("expected a data error");
  } catch (const DataError& e) {
    const std::string what = e.what();
    CHECK(what.find("line 1: missing \"target\"") != std::string::npos);
    CHECK(what.find("line 3: missing \"target\"") != std::string::npos);
  }
  CHECK_THROWS_AS(data::read_jsonl(dir / "absent.jsonl"), DataError);
}

TEST_CASE("raw corpora survive a save and load") {
  const auto dir = temp_dir("corpus");
  const auto raw = data::generate_minilang_corpus("beta", data::TaskKind::Summarization, 30, 5, 5, 8);
  const std::vector<data::RawCorpus> raws = {raw};
  const auto vocab = data::build_vocab(raws);
  data::save_raw_corpus(dir / "c", raw, vocab, {{"note", 1}});
  auto loaded = data::load_raw_corpus(dir / "c");
  CHECK(loaded.train == raw.train);
  CHECK(loaded.dev == raw.dev);
  CHECK(loaded.test == raw.test);
  CHECK(loaded.seed == raw.seed);
  CHECK(loaded.task.task_id == raw.task.task_id);
}

TEST_CASE("encoding rejects unusable corpora") {
  auto raw = data::generate_minilang_corpus("alpha", data::TaskKind::Summarization, 10, 3, 3, 8);
  const std::vector<data::RawCorpus> raws = {raw};
  const auto vocab = data::build_vocab(raws);
  auto leaky = raw;
  leaky.dev.push_back(leaky.train.front());
  CHECK_THROWS_AS(data::encode_corpus(leaky, vocab), DataError);
  auto empty = raw;
  empty.train.clear();
  CHECK_THROWS_AS(data::encode_corpus(empty, vocab), DataError);
}

TEST_CASE("subsample keeps ceil(rate * n) examples in order") {
  const auto raw = data::generate_minilang_corpus("alpha", data::TaskKind::Summarization, 95, 3, 3, 8);
  const std::vector<data::RawCorpus> raws = {raw};
  const auto vocab = data::build_vocab(raws);
  const auto corpus = data::encode_corpus(raw, vocab);
  const auto s = data::subsample(corpus, 0.10, 1);
  CHECK(s.train.size() == 10);
  CHECK(data::subsample(corpus, 0.05, 1).train.size() == 5);
  CHECK(data::subsample(corpus, 1.0, 1).train.size() == 95);
  std::size_t cursor = 0;
  for (const auto& ex : s.train) {
    while (cursor < corpus.train.size() && corpus.train[cursor].raw_source != ex.raw_source) ++cursor;
    CHECK(cursor < corpus.train.size());
  }
  CHECK(data::subsample(corpus, 0.10, 1).train.front().raw_source == s.train.front().raw_source);
  CHECK(s.dev.size() == corpus.dev.size());
  CHECK_THROWS_AS(data::subsample(corpus, 0.0, 1), ConfigError);
  CHECK_THROWS_AS(data::subsample(corpus, 1.5, 1), ConfigError);
}

TEST_CASE("translation tasks require a target language") {
  data::TaskSpec spec{"t", data::TaskKind::Translation, "alpha", std::nullopt, ""};
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec.target_language = "beta";
  CHECK_NOTHROW(spec.validate());
  CHECK(data::TaskSpec::from_json(spec.to_json()) == spec);
}
