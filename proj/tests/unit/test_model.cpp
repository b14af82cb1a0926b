#include <doctest.h>

#include <cstring>

#include "fixtures.hpp"
#include "transcoder/errors.hpp"
#include "transcoder/model/checkpoint.hpp"
#include "transcoder/model/transformer.hpp"

using namespace transcoder;

namespace {

std::size_t expected_parameters(const model::ModelConfig& c) {
  const std::size_t d = c.d_model;
  const std::size_t attn = 4 * (d * d + d);
  const std::size_t ln = 2 * d;
  const std::size_t ffn = d * c.d_ff + c.d_ff + c.d_ff * d + d;
  const std::size_t encoder = c.n_encoder_layers * (attn + ffn + 2 * ln);
  const std::size_t decoder = c.n_decoder_layers * (2 * attn + ffn + 3 * ln);
  const std::size_t embeddings = c.vocab_size * d + c.max_source_len * d + c.max_target_len * d;
  const std::size_t head = d * c.vocab_size + c.vocab_size;
  return embeddings + encoder + ln + decoder + ln + head;
}

model::TokenBatch toy_batch() {
  const std::vector<std::vector<TokenId>> sources = {{6, 7, 8, 9}, {10, 11}};
  const std::vector<std::vector<TokenId>> targets = {{1, 7, 12, 2}, {1, 8, 2}};
  return model::make_batch(sources, targets);
}

float loss_of(const model::Backbone<float>& b, const model::PrefixBank<float>* p, const model::TokenBatch& batch) {
  ad::Tape<float> tape(false);
  return model::sequence_loss(tape, b, p, batch).item();
}

}  // namespace

TEST_CASE("default backbone has the expected parameter count") {
  model::ModelConfig c;
  const auto b = model::Backbone<float>::init(c, 1);
  CHECK(b.parameter_count() == expected_parameters(c));
  CHECK(b.parameter_count() == 307968);
}

TEST_CASE("model config validation and strict parsing") {
  model::ModelConfig c;
  c.n_heads = 3;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  auto j = model::ModelConfig{}.to_json();
  CHECK(model::ModelConfig::from_json(j) == model::ModelConfig{});
  j["hidden"] = 3;
  CHECK_THROWS_AS(model::ModelConfig::from_json(j), ConfigError);
}

TEST_CASE("backbone initialization is seeded") {
  const auto c = testing::small_config(20);
  CHECK(model::Backbone<float>::init(c, 1).content_hash() == model::Backbone<float>::init(c, 1).content_hash());
  CHECK(model::Backbone<float>::init(c, 1).content_hash() != model::Backbone<float>::init(c, 2).content_hash());
}

TEST_CASE("prefix bank has one key/value pair per attention site") {
  const auto c = testing::small_config(20, 3);
  const auto bank = model::PrefixBank<float>::init(c, 5);
  ad::Tape<float> tape(false);
  const auto sites = bank.materialize(tape);
  CHECK(sites.size() == c.attention_sites());
  for (const auto& s : sites) {
    CHECK(s.key.shape() == ad::Shape{3, c.d_model});
    CHECK(s.value.shape() == ad::Shape{3, c.d_model});
  }
}

TEST_CASE("collapsing the prefix encoder preserves the forward pass") {
  const auto c = testing::small_config(20, 3);
  const auto backbone = model::Backbone<float>::init(c, 1);
  auto bank = model::PrefixBank<float>::init(c, 5);
  const auto batch = toy_batch();
  const float before = loss_of(backbone, &bank, batch);
  bank.collapse();
  CHECK_FALSE(bank.has_encoder());
  CHECK(loss_of(backbone, &bank, batch) == doctest::Approx(before).epsilon(1e-6));
}

TEST_CASE("a zero-length prefix is the same as no prefix") {
  const auto c = testing::small_config(20, 0);
  const auto backbone = model::Backbone<float>::init(c, 1);
  const auto bank = model::PrefixBank<float>::init(c, 5);
  CHECK(bank.parameters().empty());
  const auto batch = toy_batch();
  const float with = loss_of(backbone, &bank, batch);
  const float without = loss_of(backbone, nullptr, batch);
  CHECK(std::memcmp(&with, &without, sizeof(float)) == 0);
}

TEST_CASE("a prefix changes the output") {
  const auto c = testing::small_config(20, 3);
  const auto backbone = model::Backbone<float>::init(c, 1);
  const auto bank = model::PrefixBank<float>::init(c, 5);
  const auto batch = toy_batch();
  CHECK(loss_of(backbone, &bank, batch) != loss_of(backbone, nullptr, batch));
}

TEST_CASE("a prefix built for another backbone layout is rejected") {
  const auto c = testing::small_config(20, 3);
  auto other = c;
  other.d_model = 8;
  other.d_ff = 16;
  const auto backbone = model::Backbone<float>::init(c, 1);
  const auto bank = model::PrefixBank<float>::init(other, 5);
  ad::Tape<float> tape(false);
  CHECK_THROWS_AS(model::forward(tape, backbone, &bank, toy_batch()), CompatibilityError);
}

TEST_CASE("over-long sequences are data errors") {
  auto c = testing::small_config(20);
  c.max_source_len = 3;
  const auto backbone = model::Backbone<float>::init(c, 1);
  ad::Tape<float> tape(false);
  CHECK_THROWS_AS(model::forward<float>(tape, backbone, nullptr, toy_batch()), DataError);
}

TEST_CASE("checkpoints round-trip byte for byte") {
  const auto c = testing::small_config(20, 3);
  const auto backbone = model::Backbone<float>::init(c, 1);
  const auto text = model::snapshot(backbone).serialize();
  const auto parsed = model::Checkpoint::parse(text);
  CHECK(parsed.serialize() == text);
  const auto restored = model::load_backbone<float>(parsed, &c);
  CHECK(restored.content_hash() == backbone.content_hash());

  auto bank = model::PrefixBank<float>::init(c, 5);
  for (int form = 0; form < 2; ++form) {
    const auto ptext = model::snapshot(bank).serialize();
    const auto p = model::load_prefix<float>(model::Checkpoint::parse(ptext), &c);
    CHECK(p.has_encoder() == bank.has_encoder());
    CHECK(p.content_hash() == bank.content_hash());
    CHECK(model::snapshot(p).serialize() == ptext);
    bank.collapse();
  }
}

TEST_CASE("loading a prefix with the wrong length names both lengths") {
  const auto c = testing::small_config(20, 3);
  auto expected = c;
  expected.prefix_length = 5;
  const auto text = model::snapshot(model::PrefixBank<float>::init(c, 5)).serialize();
  try {
    model::load_prefix<float>(model::Checkpoint::parse(text), &expected);
    FAIL("expected a compatibility error");
  } catch (const CompatibilityError& e) {
    CHECK(std::string(e.what()) == "prefix length mismatch: checkpoint has L=3, model expects L=5");
  }
}

TEST_CASE("tampered checkpoints are rejected") {
  const auto c = testing::small_config(20, 3);
  auto j = nlohmann::json::parse(model::snapshot(model::Backbone<float>::init(c, 1)).serialize());
  j["fingerprint"] = "deadbeef";
  CHECK_THROWS(model::Checkpoint::parse(j.dump()));
  CHECK_THROWS(model::Checkpoint::parse("{not json"));
}

TEST_CASE("greedy generation is deterministic and respects the allowed set") {
  const auto c = testing::small_config(20, 3);
  const auto backbone = model::Backbone<float>::init(c, 1);
  const std::vector<std::vector<TokenId>> sources = {{6, 7, 8}, {9}};
  const auto a = model::generate_greedy(backbone, static_cast<const model::PrefixBank<float>*>(nullptr), sources, 5);
  const auto b = model::generate_greedy(backbone, static_cast<const model::PrefixBank<float>*>(nullptr), sources, 5);
  CHECK(a == b);
  for (const auto& seq : a) CHECK(seq.size() <= 5);
  const TokenId allowed[] = {4, 5};
  const auto labels = model::generate_greedy(backbone, static_cast<const model::PrefixBank<float>*>(nullptr), sources,
                                             1, allowed);
  for (const auto& seq : labels) {
    REQUIRE(seq.size() == 1);
    CHECK((seq[0] == 4 || seq[0] == 5));
  }
}
