#pragma once

#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "transcoder/model/tokens.hpp"

namespace transcoder::data {

inline constexpr std::string_view kPadToken = "<pad>";
inline constexpr std::string_view kBosToken = "<bos>";
inline constexpr std::string_view kEosToken = "<eos>";
inline constexpr std::string_view kUnkToken = "<unk>";
inline constexpr std::string_view kBuggyLabel = "buggy";
inline constexpr std::string_view kCleanLabel = "clean";

std::vector<std::string> tokenize(std::string_view text);

/// Token/id bijection. Ids 0-3 are PAD, BOS, EOS, UNK; the classification
/// labels follow, then every other token in lexicographic order.
class Vocab {
 public:
  Vocab();
  /// Builds from a token multiset; order and duplicates do not matter.
  static Vocab from_tokens(std::span<const std::string> tokens);

  [[nodiscard]] std::size_t size() const { return tokens_.size(); }
  [[nodiscard]] bool contains(std::string_view token) const;
  /// UNK for unknown tokens.
  [[nodiscard]] TokenId id(std::string_view token) const;
  /// Throws DataError for ids outside the vocabulary.
  [[nodiscard]] const std::string& token(TokenId id) const;
  [[nodiscard]] const std::vector<std::string>& tokens() const { return tokens_; }
  [[nodiscard]] std::vector<TokenId> label_ids() const;

  [[nodiscard]] std::vector<TokenId> encode(std::string_view text) const;
  /// Throws DataError when the text has no tokens.
  [[nodiscard]] std::vector<TokenId> encode_source(std::string_view text) const;
  /// Wraps in BOS ... EOS.
  [[nodiscard]] std::vector<TokenId> encode_target(std::string_view text) const;
  /// Drops PAD/BOS and stops at the first EOS.
  [[nodiscard]] std::string decode(std::span<const TokenId> ids) const;

  [[nodiscard]] std::string checksum() const;
  [[nodiscard]] nlohmann::json to_json() const;
  static Vocab from_json(const nlohmann::json& j);

  friend bool operator==(const Vocab& a, const Vocab& b) { return a.tokens_ == b.tokens_; }

 private:
  void index();

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> ids_;
};

}  // namespace transcoder::data
