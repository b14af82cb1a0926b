#include "transcoder/model/transformer.hpp"

#include <algorithm>
#include <cmath>

#include "transcoder/autodiff/ops.hpp"

namespace transcoder::model {

namespace {

constexpr double kLayerNormEps = 1e-5;

template <typename T>
ad::DiffTensor<T> maybe_dropout(ad::Tape<T>& tape, const ad::DiffTensor<T>& x, const ForwardOptions& options,
                                double rate) {
  if (!options.training || options.rng == nullptr || rate == 0.0) return x;
  return ad::dropout(tape, x, rate, *options.rng);
}

template <typename T>
ad::DiffTensor<T> linear(ad::Tape<T>& tape, const ad::DiffTensor<T>& x, const Linear<T>& l) {
  return ad::add_bias(tape, ad::matmul(tape, x, l.weight), l.bias);
}

template <typename T>
ad::DiffTensor<T> norm(ad::Tape<T>& tape, const ad::DiffTensor<T>& x, const LayerNormParams<T>& p) {
  return ad::layer_norm(tape, x, p.gain, p.bias, kLayerNormEps);
}

template <typename T>
ad::DiffTensor<T> feed_forward(ad::Tape<T>& tape, const ad::DiffTensor<T>& x, const FeedForwardParams<T>& p) {
  return linear(tape, ad::gelu(tape, linear(tape, x, p.in)), p.out);
}

template <typename T>
ad::DiffTensor<T> multi_head(ad::Tape<T>& tape, const AttentionParams<T>& p, const ad::DiffTensor<T>& x_query,
                             const ad::DiffTensor<T>& x_memory, const SitePrefix<T>* prefix, const AttentionMask& mask,
                             std::size_t heads) {
  auto q = linear(tape, x_query, p.query);
  auto k = linear(tape, x_memory, p.key);
  auto v = linear(tape, x_memory, p.value);
  auto attended = attention_with_prefix(tape, q, k, v, prefix, mask, heads);
  return linear(tape, attended.output, p.output);
}

std::vector<std::uint8_t> padding_of(std::span<const TokenId> tokens) {
  std::vector<std::uint8_t> pad(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) pad[i] = tokens[i] == kPadId ? 1 : 0;
  return pad;
}

std::vector<TokenId> positions(std::size_t batch, std::size_t len) {
  std::vector<TokenId> pos(batch * len);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t s = 0; s < len; ++s) pos[b * len + s] = static_cast<TokenId>(s);
  return pos;
}

template <typename T>
const SitePrefix<T>* site_at(std::span<const SitePrefix<T>> sites, std::size_t index) {
  return sites.empty() ? nullptr : &sites[index];
}

template <typename T>
void check_sites(const Backbone<T>& backbone, std::span<const SitePrefix<T>> sites) {
  if (!sites.empty() && sites.size() != backbone.config().attention_sites()) {
    throw ShapeError("prefix provides " + std::to_string(sites.size()) + " sites, backbone has " +
                     std::to_string(backbone.config().attention_sites()));
  }
}

}  // namespace

TokenBatch make_source_batch(std::span<const std::vector<TokenId>> sources) {
  TokenBatch b;
  b.batch = sources.size();
  for (const auto& s : sources) {
    if (s.empty()) throw DataError("empty source sequence");
    b.source_len = std::max(b.source_len, s.size());
  }
  b.source.assign(b.batch * b.source_len, kPadId);
  for (std::size_t i = 0; i < b.batch; ++i) std::copy(sources[i].begin(), sources[i].end(), b.source.begin() + i * b.source_len);
  return b;
}

TokenBatch make_batch(std::span<const std::vector<TokenId>> sources, std::span<const std::vector<TokenId>> targets) {
  if (sources.size() != targets.size()) throw ShapeError("make_batch: source and target counts differ");
  TokenBatch b = make_source_batch(sources);
  for (const auto& t : targets) {
    if (t.size() < 2 || t.front() != kBosId) throw DataError("target must start with BOS and hold at least 2 tokens");
    b.target_len = std::max(b.target_len, t.size() - 1);
  }
  b.target_in.assign(b.batch * b.target_len, kPadId);
  b.target_out.assign(b.batch * b.target_len, kPadId);
  for (std::size_t i = 0; i < b.batch; ++i) {
    const auto& t = targets[i];
    std::copy(t.begin(), t.end() - 1, b.target_in.begin() + i * b.target_len);
    std::copy(t.begin() + 1, t.end(), b.target_out.begin() + i * b.target_len);
  }
  return b;
}

std::vector<std::uint8_t> AttentionMask::expand(std::size_t prefix_len) const {
  const std::size_t total = prefix_len + key_len;
  std::vector<std::uint8_t> out(batch * query_len * total, 0);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t q = 0; q < query_len; ++q) {
      std::uint8_t* row = out.data() + (b * query_len + q) * total + prefix_len;
      for (std::size_t k = 0; k < key_len; ++k) {
        const bool padded = !key_padding.empty() && key_padding[b * key_len + k] != 0;
        row[k] = (padded || (causal && k > q)) ? 1 : 0;
      }
    }
  return out;
}

template <typename T>
AttentionResult<T> attention_with_prefix(ad::Tape<T>& tape, const ad::DiffTensor<T>& queries,
                                         const ad::DiffTensor<T>& keys, const ad::DiffTensor<T>& values,
                                         const SitePrefix<T>* prefix, const AttentionMask& mask, std::size_t heads) {
  const std::size_t batch = mask.batch, sq = mask.query_len, sk = mask.key_len;
  if (queries.rank() != 2 || queries.dim(0) != batch * sq || keys.rank() != 2 || keys.dim(0) != batch * sk ||
      values.shape() != keys.shape() || keys.dim(1) != queries.dim(1)) {
    throw ShapeError("attention: inputs " + ad::to_string(queries.shape()) + ", " + ad::to_string(keys.shape()) +
                     ", " + ad::to_string(values.shape()) + " disagree with mask");
  }
  if (!mask.key_padding.empty() && mask.key_padding.size() != batch * sk) {
    throw ShapeError("attention: key padding has wrong length");
  }
  const std::size_t d = queries.dim(1);
  if (heads == 0 || d % heads != 0) throw ShapeError("attention: width not divisible by heads");
  const std::size_t dh = d / heads;

  auto qh = ad::split_heads(tape, queries, batch, sq, heads);
  auto kh = ad::split_heads(tape, keys, batch, sk, heads);
  auto vh = ad::split_heads(tape, values, batch, sk, heads);
  std::size_t prefix_len = 0;
  if (prefix != nullptr) {
    const auto& pk = prefix->key;
    const auto& pv = prefix->value;
    if (pk.rank() != 2 || pk.shape() != pv.shape() || pk.dim(1) != d) {
      throw ShapeError("attention: prefix key " + ad::to_string(pk.shape()) + " / value " +
                       ad::to_string(pv.shape()) + " do not match width " + std::to_string(d));
    }
    prefix_len = pk.dim(0);
    if (prefix_len > 0) {
      kh = ad::concat_prefix(tape, kh, pk, heads);
      vh = ad::concat_prefix(tape, vh, pv, heads);
    }
  }
  auto scores = ad::scale(tape, ad::batched_matmul(tape, qh, kh, true), T(1.0 / std::sqrt(static_cast<double>(dh))));
  if (!mask.empty()) scores = ad::add_mask(tape, scores, mask.expand(prefix_len), heads);
  auto weights = ad::softmax(tape, scores, 2);
  auto context = ad::batched_matmul(tape, weights, vh, false);
  return {ad::merge_heads(tape, context, batch, heads), weights};
}

template <typename T>
ad::DiffTensor<T> encode(ad::Tape<T>& tape, const Backbone<T>& backbone, std::span<const SitePrefix<T>> sites,
                         const TokenBatch& batch, ForwardOptions options) {
  const auto& cfg = backbone.config();
  check_sites(backbone, sites);
  if (batch.source_len > cfg.max_source_len) {
    throw DataError("source length " + std::to_string(batch.source_len) + " exceeds max_source_len " +
                    std::to_string(cfg.max_source_len));
  }
  const auto pos = positions(batch.batch, batch.source_len);
  auto x = ad::add(tape, ad::embedding(tape, backbone.token_embedding, batch.source),
                   ad::embedding(tape, backbone.source_positions, pos));
  x = maybe_dropout(tape, x, options, cfg.dropout_rate);
  AttentionMask mask{batch.batch, batch.source_len, batch.source_len, padding_of(batch.source), false};
  for (std::size_t i = 0; i < backbone.encoder.size(); ++i) {
    const auto& layer = backbone.encoder[i];
    auto h = norm(tape, x, layer.ln_attn);
    auto a = multi_head(tape, layer.self_attn, h, h, site_at(sites, encoder_site(cfg, i)), mask, cfg.n_heads);
    x = ad::add(tape, x, maybe_dropout(tape, a, options, cfg.dropout_rate));
    auto f = feed_forward(tape, norm(tape, x, layer.ln_ffn), layer.ffn);
    x = ad::add(tape, x, maybe_dropout(tape, f, options, cfg.dropout_rate));
  }
  return norm(tape, x, backbone.encoder_final);
}

template <typename T>
ad::DiffTensor<T> decode(ad::Tape<T>& tape, const Backbone<T>& backbone, std::span<const SitePrefix<T>> sites,
                         const ad::DiffTensor<T>& memory, const TokenBatch& batch, ForwardOptions options) {
  const auto& cfg = backbone.config();
  check_sites(backbone, sites);
  if (batch.target_len > cfg.max_target_len) {
    throw DataError("target length " + std::to_string(batch.target_len) + " exceeds max_target_len " +
                    std::to_string(cfg.max_target_len));
  }
  if (batch.target_in.size() != batch.batch * batch.target_len) throw ShapeError("decode: malformed target batch");
  const auto pos = positions(batch.batch, batch.target_len);
  auto y = ad::add(tape, ad::embedding(tape, backbone.token_embedding, batch.target_in),
                   ad::embedding(tape, backbone.target_positions, pos));
  y = maybe_dropout(tape, y, options, cfg.dropout_rate);
  const AttentionMask self_mask{batch.batch, batch.target_len, batch.target_len, {}, true};
  const AttentionMask cross_mask{batch.batch, batch.target_len, batch.source_len, padding_of(batch.source), false};
  for (std::size_t i = 0; i < backbone.decoder.size(); ++i) {
    const auto& layer = backbone.decoder[i];
    auto h = norm(tape, y, layer.ln_self);
    auto a = multi_head(tape, layer.self_attn, h, h, site_at(sites, decoder_self_site(cfg, i)), self_mask, cfg.n_heads);
    y = ad::add(tape, y, maybe_dropout(tape, a, options, cfg.dropout_rate));
    h = norm(tape, y, layer.ln_cross);
    auto c = multi_head(tape, layer.cross_attn, h, memory, site_at(sites, decoder_cross_site(cfg, i)), cross_mask,
                        cfg.n_heads);
    y = ad::add(tape, y, maybe_dropout(tape, c, options, cfg.dropout_rate));
    auto f = feed_forward(tape, norm(tape, y, layer.ln_ffn), layer.ffn);
    y = ad::add(tape, y, maybe_dropout(tape, f, options, cfg.dropout_rate));
  }
  auto logits = linear(tape, norm(tape, y, backbone.decoder_final), backbone.lm_head);
  return ad::reshape(tape, logits, {batch.batch, batch.target_len, cfg.vocab_size});
}

template <typename T>
ad::DiffTensor<T> forward(ad::Tape<T>& tape, const Backbone<T>& backbone, const PrefixBank<T>* prefix,
                          const TokenBatch& batch, ForwardOptions options) {
  std::vector<SitePrefix<T>> sites;
  if (prefix != nullptr) {
    if (prefix->config().d_model != backbone.config().d_model ||
        prefix->config().attention_sites() != backbone.config().attention_sites()) {
      throw CompatibilityError("prefix bank does not fit the backbone layout");
    }
    sites = prefix->materialize(tape);
  }
  auto memory = encode<T>(tape, backbone, sites, batch, options);
  return decode<T>(tape, backbone, sites, memory, batch, options);
}

template <typename T>
ad::DiffTensor<T> sequence_loss(ad::Tape<T>& tape, const Backbone<T>& backbone, const PrefixBank<T>* prefix,
                                const TokenBatch& batch, ForwardOptions options) {
  auto logits = forward(tape, backbone, prefix, batch, options);
  return ad::cross_entropy(tape, logits, batch.target_out, kPadId);
}

template <typename T>
std::vector<std::vector<TokenId>> generate_greedy(const Backbone<T>& backbone, const PrefixBank<T>* prefix,
                                                  std::span<const std::vector<TokenId>> sources, std::size_t max_len,
                                                  std::span<const TokenId> allowed) {
  std::vector<std::vector<TokenId>> out(sources.size());
  if (sources.empty()) return out;
  const auto& cfg = backbone.config();
  const std::size_t limit = std::min(max_len, cfg.max_target_len - 1);
  ad::Tape<T> tape(false);
  std::vector<SitePrefix<T>> sites;
  if (prefix != nullptr) sites = prefix->materialize(tape);
  TokenBatch batch = make_source_batch(sources);
  const auto memory = encode<T>(tape, backbone, sites, batch);
  std::vector<bool> done(sources.size(), false);
  const std::size_t vocab = cfg.vocab_size;
  for (std::size_t step = 0; step < limit; ++step) {
    batch.target_len = step + 1;
    batch.target_in.assign(batch.batch * batch.target_len, kPadId);
    for (std::size_t b = 0; b < batch.batch; ++b) {
      batch.target_in[b * batch.target_len] = kBosId;
      std::copy(out[b].begin(), out[b].end(), batch.target_in.begin() + b * batch.target_len + 1);
    }
    const auto logits = decode<T>(tape, backbone, sites, memory, batch);
    const auto data = logits.data();
    bool all_done = true;
    for (std::size_t b = 0; b < batch.batch; ++b) {
      if (done[b]) continue;
      const T* row = data.data() + (b * batch.target_len + step) * vocab;
      TokenId best = -1;
      if (allowed.empty()) {
        best = 0;
        for (std::size_t j = 1; j < vocab; ++j)
          if (row[j] > row[static_cast<std::size_t>(best)]) best = static_cast<TokenId>(j);
      } else {
        std::vector<TokenId> ids(allowed.begin(), allowed.end());
        std::sort(ids.begin(), ids.end());
        for (TokenId id : ids) {
          if (id < 0 || static_cast<std::size_t>(id) >= vocab) throw ShapeError("allowed token outside vocabulary");
          if (best < 0 || row[static_cast<std::size_t>(id)] > row[static_cast<std::size_t>(best)]) best = id;
        }
      }
      out[b].push_back(best);
      if (best == kEosId) done[b] = true;
      all_done = all_done && done[b];
    }
    if (all_done) break;
  }
  return out;
}

#define TRANSCODER_INSTANTIATE_TRANSFORMER(T)                                                                      \
  template AttentionResult<T> attention_with_prefix(ad::Tape<T>&, const ad::DiffTensor<T>&,                        \
                                                    const ad::DiffTensor<T>&, const ad::DiffTensor<T>&,            \
                                                    const SitePrefix<T>*, const AttentionMask&, std::size_t);      \
  template ad::DiffTensor<T> encode(ad::Tape<T>&, const Backbone<T>&, std::span<const SitePrefix<T>>,              \
                                    const TokenBatch&, ForwardOptions);                                           \
  template ad::DiffTensor<T> decode(ad::Tape<T>&, const Backbone<T>&, std::span<const SitePrefix<T>>,              \
                                    const ad::DiffTensor<T>&, const TokenBatch&, ForwardOptions);                 \
  template ad::DiffTensor<T> forward(ad::Tape<T>&, const Backbone<T>&, const PrefixBank<T>*, const TokenBatch&,    \
                                     ForwardOptions);                                                             \
  template ad::DiffTensor<T> sequence_loss(ad::Tape<T>&, const Backbone<T>&, const PrefixBank<T>*,                 \
                                           const TokenBatch&, ForwardOptions);                                    \
  template std::vector<std::vector<TokenId>> generate_greedy(const Backbone<T>&, const PrefixBank<T>*,            \
                                                             std::span<const std::vector<TokenId>>, std::size_t,  \
                                                             std::span<const TokenId>);

TRANSCODER_INSTANTIATE_TRANSFORMER(float)
TRANSCODER_INSTANTIATE_TRANSFORMER(double)

#undef TRANSCODER_INSTANTIATE_TRANSFORMER

}  // namespace transcoder::model
