#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "transcoder/autodiff/tensor.hpp"
#include "transcoder/model/config.hpp"

namespace transcoder::model {

template <typename T>
struct NamedParameter {
  std::string name;
  ad::DiffTensor<T> tensor;
};

template <typename T>
struct Linear {
  ad::DiffTensor<T> weight;  // [in x out]
  ad::DiffTensor<T> bias;    // [out]
};

template <typename T>
struct LayerNormParams {
  ad::DiffTensor<T> gain;
  ad::DiffTensor<T> bias;
};

template <typename T>
struct AttentionParams {
  Linear<T> query, key, value, output;
};

template <typename T>
struct FeedForwardParams {
  Linear<T> in, out;
};

template <typename T>
struct EncoderLayer {
  LayerNormParams<T> ln_attn;
  AttentionParams<T> self_attn;
  LayerNormParams<T> ln_ffn;
  FeedForwardParams<T> ffn;
};

template <typename T>
struct DecoderLayer {
  LayerNormParams<T> ln_self;
  AttentionParams<T> self_attn;
  LayerNormParams<T> ln_cross;
  AttentionParams<T> cross_attn;
  LayerNormParams<T> ln_ffn;
  FeedForwardParams<T> ffn;
};

inline constexpr const char* kProvenanceRandomInit = "random-init";
inline constexpr const char* kProvenancePretrained = "base-pretrained";

/// Pre-LN transformer encoder-decoder (the "CodePTM" stand-in).
///
/// Parameters are registered in a fixed order; that order drives
/// initialization, optimizer updates and serialization.
template <typename T>
class Backbone {
 public:
  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases, unit gains,
  /// drawn in registration order from the "backbone-init" stream of `seed`.
  static Backbone init(const ModelConfig& config, std::uint64_t seed);

  /// Zero-filled parameters with the right shapes (used by checkpoint loading).
  static Backbone allocate(const ModelConfig& config);

  [[nodiscard]] const ModelConfig& config() const noexcept { return config_; }
  [[nodiscard]] std::uint64_t seed() const noexcept { return seed_; }
  [[nodiscard]] const std::string& provenance() const noexcept { return provenance_; }
  void set_seed(std::uint64_t seed) noexcept { seed_ = seed; }
  void set_provenance(std::string provenance) { provenance_ = std::move(provenance); }

  [[nodiscard]] const std::vector<NamedParameter<T>>& parameters() const noexcept { return params_; }
  [[nodiscard]] std::size_t parameter_count() const;
  /// Hash over parameter names, shapes and values.
  [[nodiscard]] std::string content_hash() const;
  [[nodiscard]] Backbone clone() const;
  /// Copies values from a backbone of identical shape.
  void assign_from(const Backbone& other);

  ad::DiffTensor<T> token_embedding;   // [vocab x d]
  ad::DiffTensor<T> source_positions;  // [max_source_len x d]
  ad::DiffTensor<T> target_positions;  // [max_target_len x d]
  std::vector<EncoderLayer<T>> encoder;
  LayerNormParams<T> encoder_final;
  std::vector<DecoderLayer<T>> decoder;
  LayerNormParams<T> decoder_final;
  Linear<T> lm_head;  // [d x vocab]

 private:
  explicit Backbone(const ModelConfig& config);

  ModelConfig config_;
  std::uint64_t seed_ = 0;
  std::string provenance_ = kProvenanceRandomInit;
  std::vector<NamedParameter<T>> params_;
  std::vector<double> init_scale_;  // > 0 uniform bound, 0 zeros, < 0 ones
};

}  // namespace transcoder::model
