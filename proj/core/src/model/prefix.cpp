#include "transcoder/model/prefix.hpp"

#include <cmath>

#include <spdlog/spdlog.h>

#include "transcoder/autodiff/ops.hpp"
#include "transcoder/util/hash.hpp"
#include "transcoder/util/rng.hpp"

namespace transcoder::model {

std::size_t encoder_site(const ModelConfig& config, std::size_t layer) {
  if (layer >= config.n_encoder_layers) throw ShapeError("encoder layer out of range");
  return layer;
}

std::size_t decoder_self_site(const ModelConfig& config, std::size_t layer) {
  if (layer >= config.n_decoder_layers) throw ShapeError("decoder layer out of range");
  return config.n_encoder_layers + 2 * layer;
}

std::size_t decoder_cross_site(const ModelConfig& config, std::size_t layer) {
  return decoder_self_site(config, layer) + 1;
}

std::string site_name(const ModelConfig& config, std::size_t site) {
  if (site < config.n_encoder_layers) return "encoder." + std::to_string(site) + ".self_attn";
  const std::size_t rel = site - config.n_encoder_layers;
  if (rel >= 2 * config.n_decoder_layers) throw ShapeError("attention site out of range");
  return "decoder." + std::to_string(rel / 2) + (rel % 2 == 0 ? ".self_attn" : ".cross_attn");
}

namespace {

template <typename T>
void fill_uniform(const ad::DiffTensor<T>& t, double bound, util::Rng& rng) {
  for (auto& v : t.mutable_data()) v = static_cast<T>(rng.uniform(-bound, bound));
}

}  // namespace

template <typename T>
PrefixBank<T> PrefixBank<T>::init(const ModelConfig& config, std::uint64_t seed, bool with_encoder) {
  config.validate();
  PrefixBank bank(config);
  bank.seed_ = seed;
  const std::size_t len = config.prefix_length, d = config.d_model, sites = config.attention_sites();
  if (len == 0) {
    for (std::size_t s = 0; s < sites; ++s) {
      bank.sites_.push_back({ad::DiffTensor<T>::zeros({0, d}), ad::DiffTensor<T>::zeros({0, d})});
    }
    return bank;
  }
  auto rng = util::Rng::stream(seed, "prefix-init");
  auto bound = [](std::size_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); };
  if (with_encoder) {
    const std::size_t emb = config.prefix_embedding_dim, hidden = config.prefix_hidden_dim;
    Encoder enc;
    enc.embedding = ad::DiffTensor<T>::zeros({len, emb}, true);
    enc.hidden.weight = ad::DiffTensor<T>::zeros({emb, hidden}, true);
    enc.hidden.bias = ad::DiffTensor<T>::zeros({hidden}, true);
    enc.output.weight = ad::DiffTensor<T>::zeros({hidden, sites * 2 * d}, true);
    enc.output.bias = ad::DiffTensor<T>::zeros({sites * 2 * d}, true);
    fill_uniform(enc.embedding, bound(emb), rng);
    fill_uniform(enc.hidden.weight, bound(emb), rng);
    fill_uniform(enc.output.weight, bound(hidden), rng);
    bank.encoder_ = std::move(enc);
  } else {
    for (std::size_t s = 0; s < sites; ++s) {
      SitePrefix<T> site{ad::DiffTensor<T>::zeros({len, d}, true), ad::DiffTensor<T>::zeros({len, d}, true)};
      fill_uniform(site.key, bound(d), rng);
      fill_uniform(site.value, bound(d), rng);
      bank.sites_.push_back(std::move(site));
    }
  }
  return bank;
}

template <typename T>
PrefixBank<T> PrefixBank<T>::from_sites(const ModelConfig& config, std::vector<SitePrefix<T>> sites) {
  config.validate();
  if (sites.size() != config.attention_sites()) {
    throw ShapeError("prefix bank needs " + std::to_string(config.attention_sites()) + " sites, got " +
                     std::to_string(sites.size()));
  }
  const ad::Shape expected{config.prefix_length, config.d_model};
  for (auto& s : sites) {
    if (s.key.shape() != expected || s.value.shape() != expected) {
      throw ShapeError("site prefix shape must be " + ad::to_string(expected));
    }
    s.key.set_requires_grad(config.prefix_length > 0);
    s.value.set_requires_grad(config.prefix_length > 0);
  }
  PrefixBank bank(config);
  bank.sites_ = std::move(sites);
  return bank;
}

template <typename T>
std::vector<SitePrefix<T>> PrefixBank<T>::materialize(ad::Tape<T>& tape) const {
  if (!encoder_) return sites_;
  const auto& enc = *encoder_;
  const std::size_t d = config_.d_model;
  auto h = ad::tanh(tape, ad::add_bias(tape, ad::matmul(tape, enc.embedding, enc.hidden.weight), enc.hidden.bias));
  auto out = ad::add_bias(tape, ad::matmul(tape, h, enc.output.weight), enc.output.bias);
  std::vector<SitePrefix<T>> sites;
  sites.reserve(config_.attention_sites());
  for (std::size_t s = 0; s < config_.attention_sites(); ++s) {
    sites.push_back({ad::slice_cols(tape, out, 2 * s * d, d), ad::slice_cols(tape, out, (2 * s + 1) * d, d)});
  }
  return sites;
}

template <typename T>
void PrefixBank<T>::collapse() {
  if (!encoder_) {
    spdlog::warn("prefix bank is already collapsed; collapse() ignored");
    return;
  }
  ad::Tape<T> tape(false);
  auto sites = materialize(tape);
  for (auto& s : sites) {
    s.key = s.key.clone();
    s.value = s.value.clone();
    s.key.set_requires_grad(true);
    s.value.set_requires_grad(true);
  }
  sites_ = std::move(sites);
  encoder_.reset();
}

template <typename T>
std::vector<NamedParameter<T>> PrefixBank<T>::parameters() const {
  std::vector<NamedParameter<T>> out;
  if (config_.prefix_length == 0) return out;
  if (encoder_) {
    out.push_back({"prefix.encoder.embedding", encoder_->embedding});
    out.push_back({"prefix.encoder.hidden.weight", encoder_->hidden.weight});
    out.push_back({"prefix.encoder.hidden.bias", encoder_->hidden.bias});
    out.push_back({"prefix.encoder.output.weight", encoder_->output.weight});
    out.push_back({"prefix.encoder.output.bias", encoder_->output.bias});
    return out;
  }
  for (std::size_t s = 0; s < sites_.size(); ++s) {
    const std::string base = "prefix." + site_name(config_, s);
    out.push_back({base + ".key", sites_[s].key});
    out.push_back({base + ".value", sites_[s].value});
  }
  return out;
}

template <typename T>
PrefixBank<T> PrefixBank<T>::clone() const {
  PrefixBank copy(config_);
  copy.seed_ = seed_;
  copy.provenance_ = provenance_;
  if (encoder_) {
    copy.encoder_ = Encoder{encoder_->embedding.clone(),
                            {encoder_->hidden.weight.clone(), encoder_->hidden.bias.clone()},
                            {encoder_->output.weight.clone(), encoder_->output.bias.clone()}};
  }
  for (const auto& s : sites_) copy.sites_.push_back({s.key.clone(), s.value.clone()});
  return copy;
}

template <typename T>
std::string PrefixBank<T>::content_hash() const {
  util::Fnv1a h;
  for (const auto& p : parameters()) {
    h.update(p.name);
    h.update_values(p.tensor.data());
  }
  return h.hex();
}

template class PrefixBank<float>;
template class PrefixBank<double>;

}  // namespace transcoder::model
