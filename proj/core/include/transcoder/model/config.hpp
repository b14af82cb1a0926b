#pragma once

#include <cstddef>
#include <string>

#include <nlohmann/json.hpp>

namespace transcoder::model {

/// Architecture of the toy encoder-decoder backbone and its knowledge prefix.
struct ModelConfig {
  std::size_t vocab_size = 512;
  std::size_t d_model = 64;
  std::size_t n_heads = 4;
  std::size_t n_encoder_layers = 2;
  std::size_t n_decoder_layers = 2;
  std::size_t d_ff = 256;
  std::size_t max_source_len = 64;
  std::size_t max_target_len = 64;
  std::size_t prefix_length = 32;
  double dropout_rate = 0.1;
  // Reparameterization network that generates the prefix during source training.
  std::size_t prefix_embedding_dim = 64;
  std::size_t prefix_hidden_dim = 128;

  /// Throws ConfigError on any violated invariant.
  void validate() const;

  [[nodiscard]] std::size_t head_dim() const { return d_model / n_heads; }

  /// Encoder self-attention, decoder self-attention and decoder cross-attention layers.
  [[nodiscard]] std::size_t attention_sites() const { return n_encoder_layers + 2 * n_decoder_layers; }

  /// Hash of the fields that determine backbone parameter shapes.
  [[nodiscard]] std::string backbone_fingerprint() const;
  /// Hash of the fields that determine prefix parameter shapes and their fit to a backbone.
  [[nodiscard]] std::string prefix_fingerprint() const;

  [[nodiscard]] nlohmann::json to_json() const;
  /// Rejects unknown keys; missing keys keep their defaults.
  static ModelConfig from_json(const nlohmann::json& j);

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

}  // namespace transcoder::model
