#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "transcoder/errors.hpp"
#include "transcoder/metrics/metrics.hpp"
#include "transcoder/model/backbone.hpp"

using namespace transcoder;
using metrics::TokenSeq;

TEST_CASE("BLEU hand case with brevity penalty") {
  const std::vector<TokenSeq> hyp = {{1, 2, 3, 4}};
  const std::vector<TokenSeq> ref = {{1, 2, 3, 4, 5}};
  CHECK(metrics::bleu4_smoothed(hyp, ref) == doctest::Approx(100.0 * std::exp(-0.25)).epsilon(1e-12));
  CHECK(std::abs(metrics::bleu4_smoothed(hyp, ref) - 77.88) < 0.01);
}

TEST_CASE("BLEU of identical and disjoint corpora") {
  const std::vector<TokenSeq> a = {{1, 2, 3, 4, 5}, {6, 7}};
  CHECK(metrics::bleu4_smoothed(a, a) == 100.0);
  const std::vector<TokenSeq> b = {{9, 9, 9}, {8}};
  CHECK(metrics::bleu4_smoothed(b, a) == 0.0);
}

TEST_CASE("BLEU is invariant to example order") {
  const std::vector<TokenSeq> h = {{1, 2, 3}, {4, 5, 6, 7}, {8, 9}};
  const std::vector<TokenSeq> r = {{1, 2, 4}, {4, 5, 6}, {8, 9, 10}};
  const std::vector<TokenSeq> h2 = {h[2], h[0], h[1]};
  const std::vector<TokenSeq> r2 = {r[2], r[0], r[1]};
  CHECK(metrics::bleu4_smoothed(h, r) == doctest::Approx(metrics::bleu4_smoothed(h2, r2)).epsilon(1e-12));
}

TEST_CASE("BLEU input errors") {
  const std::vector<TokenSeq> one = {{1}};
  const std::vector<TokenSeq> two = {{1}, {2}};
  CHECK_THROWS_AS(metrics::bleu4_smoothed(std::span<const TokenSeq>(), std::span<const TokenSeq>()), DataError);
  CHECK_THROWS_AS(metrics::bleu4_smoothed(one, two), DataError);
}

TEST_CASE("accuracy") {
  const std::vector<int> gold = {1, 1, 1, 0};
  const std::vector<int> pred = {1, 0, 1, 1};
  CHECK(metrics::accuracy<int>(pred, gold) == 0.5);
  CHECK(metrics::accuracy<int>(gold, gold) == 1.0);
  const std::vector<int> flipped = {0, 0, 0, 1};
  CHECK(metrics::accuracy<int>(flipped, gold) == 0.0);
  CHECK_THROWS_AS(metrics::accuracy<int>(std::span<const int>(), std::span<const int>()), DataError);
}

TEST_CASE("EvalResult JSON round trip and range checks") {
  const metrics::EvalResult r{"task", "accuracy", 0.5, 10};
  const auto back = metrics::EvalResult::from_json(nlohmann::json::parse(r.to_json().dump()));
  CHECK(back.value == 0.5);
  CHECK(back.n_examples == 10);
  CHECK(metrics::metric_name(data::TaskKind::Classification) == "accuracy");
  CHECK(metrics::metric_name(data::TaskKind::Summarization) == "bleu4");
}

TEST_CASE("an untrained model is near chance on balanced classification") {
  const auto raw = data::generate_minilang_corpus("alpha", data::TaskKind::Classification, 4, 4, 240, 17);
  const std::vector<data::RawCorpus> raws = {raw};
  const auto vocab = data::build_vocab(raws);
  const auto corpus = data::encode_corpus(raw, vocab);
  const auto config = testing::small_config(vocab.size(), 0);
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto backbone = model::Backbone<float>::init(config, seed);
    const auto a = metrics::evaluate<float>(backbone, nullptr, corpus.test, corpus.task, vocab);
    const auto b = metrics::evaluate<float>(backbone, nullptr, corpus.test, corpus.task, vocab);
    CHECK(a.value == b.value);
    CHECK(a.n_examples == 240);
    // Constant predictions score exactly 0.5 on the alternating labels.
    CHECK(a.value == doctest::Approx(0.5).epsilon(0.2));
  }
}
