#pragma once

#include <span>
#include <vector>

#include "transcoder/autodiff/tape.hpp"
#include "transcoder/model/backbone.hpp"
#include "transcoder/model/prefix.hpp"
#include "transcoder/model/tokens.hpp"
#include "transcoder/util/rng.hpp"

namespace transcoder::model {

/// Padded token batch. Targets are split for teacher forcing:
/// target_in = [BOS, y1, ..., yn], target_out = [y1, ..., yn, EOS].
struct TokenBatch {
  std::size_t batch = 0;
  std::size_t source_len = 0;
  std::size_t target_len = 0;
  std::vector<TokenId> source;      // [batch x source_len]
  std::vector<TokenId> target_in;   // [batch x target_len]
  std::vector<TokenId> target_out;  // [batch x target_len]
};

/// Pads each sequence with kPadId. Targets must start with BOS and hold at least two tokens.
TokenBatch make_batch(std::span<const std::vector<TokenId>> sources, std::span<const std::vector<TokenId>> targets);

/// Sources only; target fields stay empty (generation).
TokenBatch make_source_batch(std::span<const std::vector<TokenId>> sources);

struct AttentionMask {
  std::size_t batch = 0;
  std::size_t query_len = 0;
  std::size_t key_len = 0;
  std::vector<std::uint8_t> key_padding;  // [batch x key_len], 1 = padded; empty = none
  bool causal = false;

  /// Dense [batch x query_len x (prefix_len + key_len)] mask. Prefix columns
  /// are never masked; causal masking applies to sequence columns only.
  [[nodiscard]] std::vector<std::uint8_t> expand(std::size_t prefix_len) const;
  [[nodiscard]] bool empty() const { return !causal && key_padding.empty(); }
};

template <typename T>
struct AttentionResult {
  ad::DiffTensor<T> output;   // [batch*query_len x d]
  ad::DiffTensor<T> weights;  // [batch*heads x query_len x (L + key_len)]
};

/// Scaled dot-product attention over already projected inputs, with the
/// site prefix prepended to keys and values.
///
/// queries: [batch*query_len x d]; keys, values: [batch*key_len x d].
/// `prefix` may be null (or zero length) for vanilla attention.
template <typename T>
AttentionResult<T> attention_with_prefix(ad::Tape<T>& tape, const ad::DiffTensor<T>& queries,
                                         const ad::DiffTensor<T>& keys, const ad::DiffTensor<T>& values,
                                         const SitePrefix<T>* prefix, const AttentionMask& mask,
                                         std::size_t heads);

/// Dropout is applied only when `training` is set and `rng` is provided.
struct ForwardOptions {
  bool training = false;
  util::Rng* rng = nullptr;
};

/// Encoder output [batch*source_len x d].
template <typename T>
ad::DiffTensor<T> encode(ad::Tape<T>& tape, const Backbone<T>& backbone, std::span<const SitePrefix<T>> sites,
                         const TokenBatch& batch, ForwardOptions options = {});

/// Decoder logits [batch x target_len x vocab] for batch.target_in.
template <typename T>
ad::DiffTensor<T> decode(ad::Tape<T>& tape, const Backbone<T>& backbone, std::span<const SitePrefix<T>> sites,
                         const ad::DiffTensor<T>& memory, const TokenBatch& batch, ForwardOptions options = {});

/// Teacher-forced logits [batch x target_len x vocab].
/// Throws DataError on sequences longer than the configured maxima.
template <typename T>
ad::DiffTensor<T> forward(ad::Tape<T>& tape, const Backbone<T>& backbone, const PrefixBank<T>* prefix,
                          const TokenBatch& batch, ForwardOptions options = {});

/// Mean token cross-entropy of batch.target_out, padding ignored.
template <typename T>
ad::DiffTensor<T> sequence_loss(ad::Tape<T>& tape, const Backbone<T>& backbone, const PrefixBank<T>* prefix,
                                const TokenBatch& batch, ForwardOptions options = {});

/// Greedy decoding from BOS. Each output holds the generated tokens
/// (terminating EOS included when produced), at most max_len of them; the
/// length is also capped by max_target_len - 1. Ties go to the lowest id.
/// When `allowed` is given, argmax is restricted to those ids.
template <typename T>
std::vector<std::vector<TokenId>> generate_greedy(const Backbone<T>& backbone, const PrefixBank<T>* prefix,
                                                  std::span<const std::vector<TokenId>> sources,
                                                  std::size_t max_len,
                                                  std::span<const TokenId> allowed = {});

}  // namespace transcoder::model
