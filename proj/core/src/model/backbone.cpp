#include "transcoder/model/backbone.hpp"

#include <cmath>

#include "transcoder/util/hash.hpp"
#include "transcoder/util/rng.hpp"

namespace transcoder::model {

namespace {

constexpr double kZeros = 0.0;
constexpr double kOnes = -1.0;

}  // namespace

template <typename T>
Backbone<T>::Backbone(const ModelConfig& config) : config_(config) {
  config_.validate();
  const std::size_t d = config_.d_model, ff = config_.d_ff, vocab = config_.vocab_size;

  auto add = [this](std::string name, ad::Shape shape, double scale) {
    auto t = ad::DiffTensor<T>::zeros(std::move(shape), true);
    params_.push_back({std::move(name), t});
    init_scale_.push_back(scale);
    return t;
  };
  auto uniform_bound = [](std::size_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); };
  auto linear = [&](const std::string& name, std::size_t in, std::size_t out) {
    Linear<T> l;
    l.weight = add(name + ".weight", {in, out}, uniform_bound(in));
    l.bias = add(name + ".bias", {out}, kZeros);
    return l;
  };
  auto norm = [&](const std::string& name) {
    LayerNormParams<T> n;
    n.gain = add(name + ".gain", {d}, kOnes);
    n.bias = add(name + ".bias", {d}, kZeros);
    return n;
  };
  auto attention = [&](const std::string& name) {
    AttentionParams<T> a;
    a.query = linear(name + ".query", d, d);
    a.key = linear(name + ".key", d, d);
    a.value = linear(name + ".value", d, d);
    a.output = linear(name + ".output", d, d);
    return a;
  };
  auto ffn = [&](const std::string& name) {
    FeedForwardParams<T> f;
    f.in = linear(name + ".in", d, ff);
    f.out = linear(name + ".out", ff, d);
    return f;
  };

  token_embedding = add("embed.token", {vocab, d}, uniform_bound(d));
  source_positions = add("embed.source_position", {config_.max_source_len, d}, uniform_bound(d));
  target_positions = add("embed.target_position", {config_.max_target_len, d}, uniform_bound(d));
  for (std::size_t i = 0; i < config_.n_encoder_layers; ++i) {
    const std::string p = "encoder." + std::to_string(i);
    EncoderLayer<T> layer;
    layer.ln_attn = norm(p + ".ln_attn");
    layer.self_attn = attention(p + ".self_attn");
    layer.ln_ffn = norm(p + ".ln_ffn");
    layer.ffn = ffn(p + ".ffn");
    encoder.push_back(std::move(layer));
  }
  encoder_final = norm("encoder.ln_final");
  for (std::size_t i = 0; i < config_.n_decoder_layers; ++i) {
    const std::string p = "decoder." + std::to_string(i);
    DecoderLayer<T> layer;
    layer.ln_self = norm(p + ".ln_self");
    layer.self_attn = attention(p + ".self_attn");
    layer.ln_cross = norm(p + ".ln_cross");
    layer.cross_attn = attention(p + ".cross_attn");
    layer.ln_ffn = norm(p + ".ln_ffn");
    layer.ffn = ffn(p + ".ffn");
    decoder.push_back(std::move(layer));
  }
  decoder_final = norm("decoder.ln_final");
  lm_head = linear("lm_head", d, vocab);
}

template <typename T>
Backbone<T> Backbone<T>::allocate(const ModelConfig& config) {
  return Backbone(config);
}

template <typename T>
Backbone<T> Backbone<T>::init(const ModelConfig& config, std::uint64_t seed) {
  Backbone b(config);
  b.seed_ = seed;
  auto rng = util::Rng::stream(seed, "backbone-init");
  for (std::size_t i = 0; i < b.params_.size(); ++i) {
    auto data = b.params_[i].tensor.mutable_data();
    const double scale = b.init_scale_[i];
    if (scale > 0.0) {
      for (auto& v : data) v = static_cast<T>(rng.uniform(-scale, scale));
    } else if (scale == kOnes) {
      std::fill(data.begin(), data.end(), T(1));
    }
  }
  return b;
}

template <typename T>
std::size_t Backbone<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

template <typename T>
std::string Backbone<T>::content_hash() const {
  util::Fnv1a h;
  for (const auto& p : params_) {
    h.update(p.name);
    h.update(ad::to_string(p.tensor.shape()));
    h.update_values(p.tensor.data());
  }
  return h.hex();
}

template <typename T>
Backbone<T> Backbone<T>::clone() const {
  Backbone copy(config_);
  copy.assign_from(*this);
  return copy;
}

template <typename T>
void Backbone<T>::assign_from(const Backbone& other) {
  if (other.params_.size() != params_.size()) throw ShapeError("backbone layouts differ");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto src = other.params_[i].tensor.data();
    auto dst = params_[i].tensor.mutable_data();
    if (src.size() != dst.size()) throw ShapeError("backbone parameter " + params_[i].name + " differs in size");
    std::copy(src.begin(), src.end(), dst.begin());
    params_[i].tensor.clear_grad();
  }
  seed_ = other.seed_;
  provenance_ = other.provenance_;
}

template class Backbone<float>;
template class Backbone<double>;

}  // namespace transcoder::model
