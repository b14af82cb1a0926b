#include "transcoder/data/vocab.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "transcoder/errors.hpp"
#include "transcoder/util/hash.hpp"

namespace transcoder::data {

namespace {
const std::vector<std::string>& reserved() {
  static const std::vector<std::string> r = {std::string(kPadToken),   std::string(kBosToken),
                                             std::string(kEosToken),   std::string(kUnkToken),
                                             std::string(kBuggyLabel), std::string(kCleanLabel)};
  return r;
}
}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::istringstream in{std::string(text)};
  for (std::string t; in >> t;) out.push_back(std::move(t));
  return out;
}

Vocab::Vocab() : tokens_(reserved()) { index(); }

Vocab Vocab::from_tokens(std::span<const std::string> tokens) {
  std::set<std::string> rest(tokens.begin(), tokens.end());
  for (const auto& r : reserved()) rest.erase(r);
  Vocab v;
  v.tokens_.insert(v.tokens_.end(), rest.begin(), rest.end());
  v.index();
  return v;
}

void Vocab::index() {
  ids_.clear();
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!ids_.emplace(tokens_[i], static_cast<TokenId>(i)).second) {
      throw DataError("duplicate vocabulary token '" + tokens_[i] + "'");
    }
  }
}

bool Vocab::contains(std::string_view token) const { return ids_.contains(std::string(token)); }

TokenId Vocab::id(std::string_view token) const {
  const auto it = ids_.find(std::string(token));
  return it == ids_.end() ? kUnkId : it->second;
}

const std::string& Vocab::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw DataError("token id " + std::to_string(id) + " outside vocabulary of size " + std::to_string(size()));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<TokenId> Vocab::label_ids() const { return {id(kBuggyLabel), id(kCleanLabel)}; }

std::vector<TokenId> Vocab::encode(std::string_view text) const {
  std::vector<TokenId> out;
  for (const auto& t : tokenize(text)) out.push_back(id(t));
  return out;
}

std::vector<TokenId> Vocab::encode_source(std::string_view text) const {
  auto ids = encode(text);
  if (ids.empty()) throw DataError("source text has no tokens");
  return ids;
}

std::vector<TokenId> Vocab::encode_target(std::string_view text) const {
  std::vector<TokenId> out{kBosId};
  const auto body = encode(text);
  out.insert(out.end(), body.begin(), body.end());
  out.push_back(kEosId);
  return out;
}

std::string Vocab::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (const auto id : ids) {
    if (id == kEosId) break;
    if (id == kPadId || id == kBosId) continue;
    if (!out.empty()) out += ' ';
    out += token(id);
  }
  return out;
}

std::string Vocab::checksum() const {
  util::Fnv1a h;
  for (const auto& t : tokens_) {
    h.update(t);
    h.update(std::string_view("\n"));
  }
  return h.hex();
}

nlohmann::json Vocab::to_json() const { return {{"tokens", tokens_}, {"checksum", checksum()}}; }

Vocab Vocab::from_json(const nlohmann::json& j) {
  Vocab v;
  try {
    v.tokens_ = j.at("tokens").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed vocabulary: ") + e.what());
  }
  const auto& r = reserved();
  if (v.tokens_.size() < r.size() || !std::equal(r.begin(), r.end(), v.tokens_.begin())) {
    throw DataError("vocabulary does not start with the reserved tokens");
  }
  v.index();
  if (j.contains("checksum") && j.at("checksum") != v.checksum()) {
    throw DataError("vocabulary checksum mismatch");
  }
  return v;
}

}  // namespace transcoder::data
