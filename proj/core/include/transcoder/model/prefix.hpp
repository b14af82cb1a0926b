#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "transcoder/autodiff/tape.hpp"
#include "transcoder/model/backbone.hpp"

namespace transcoder::model {

/// Key/value prefix for one attention site, each [L x d_model] in projected space.
template <typename T>
struct SitePrefix {
  ad::DiffTensor<T> key;
  ad::DiffTensor<T> value;
};

/// Attention-site layout: encoder self-attention layers first, then for each
/// decoder layer its self-attention followed by its cross-attention.
std::size_t encoder_site(const ModelConfig& config, std::size_t layer);
std::size_t decoder_self_site(const ModelConfig& config, std::size_t layer);
std::size_t decoder_cross_site(const ModelConfig& config, std::size_t layer);
std::string site_name(const ModelConfig& config, std::size_t site);

inline constexpr const char* kPrefixRandomInit = "random-init";
inline constexpr const char* kPrefixSourceTrained = "source-trained";

/// The knowledge prefix: one key/value pair per attention site.
///
/// Two storage forms. With a prefix encoder, site prefixes are a pure
/// function of a [L x d_emb] embedding table pushed through
/// tanh(E W1 + b1) W2 + b2, which yields all sites' keys and values at once.
/// After collapse() the materialized arrays are stored directly.
template <typename T>
class PrefixBank {
 public:
  /// Draws theta_0 from the "prefix-init" stream of `seed` using the same
  /// uniform 1/sqrt(fan_in) family as the backbone. A zero prefix length
  /// yields an empty bank with no parameters.
  static PrefixBank init(const ModelConfig& config, std::uint64_t seed, bool with_encoder = true);

  /// Builds a collapsed bank from explicit site arrays.
  static PrefixBank from_sites(const ModelConfig& config, std::vector<SitePrefix<T>> sites);

  [[nodiscard]] const ModelConfig& config() const noexcept { return config_; }
  [[nodiscard]] std::size_t length() const noexcept { return config_.prefix_length; }
  [[nodiscard]] bool has_encoder() const noexcept { return encoder_.has_value(); }
  [[nodiscard]] std::uint64_t seed() const noexcept { return seed_; }
  [[nodiscard]] const std::string& provenance() const noexcept { return provenance_; }
  void set_provenance(std::string provenance) { provenance_ = std::move(provenance); }

  /// Per-site prefixes, recorded on `tape` so gradients reach the encoder.
  [[nodiscard]] std::vector<SitePrefix<T>> materialize(ad::Tape<T>& tape) const;

  /// Replaces the encoder by its materialized output. No-op (with a warning)
  /// when already collapsed.
  void collapse();

  /// Trainable tensors in registration order; empty for a zero-length bank.
  [[nodiscard]] std::vector<NamedParameter<T>> parameters() const;

  [[nodiscard]] PrefixBank clone() const;
  [[nodiscard]] std::string content_hash() const;

 private:
  struct Encoder {
    ad::DiffTensor<T> embedding;  // [L x d_emb]
    Linear<T> hidden;             // [d_emb x hidden]
    Linear<T> output;             // [hidden x sites*2*d]
  };

  explicit PrefixBank(const ModelConfig& config) : config_(config) {}

  ModelConfig config_;
  std::uint64_t seed_ = 0;
  std::string provenance_ = kPrefixRandomInit;
  std::optional<Encoder> encoder_;
  std::vector<SitePrefix<T>> sites_;  // used once collapsed
};

}  // namespace transcoder::model
