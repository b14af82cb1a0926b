#include "transcoder/model/config.hpp"

#include "transcoder/errors.hpp"
#include "transcoder/util/hash.hpp"

namespace transcoder::model {

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ConfigError(std::string("model config: ") + name + " must be >= 1");
  };
  positive(vocab_size, "vocab_size");
  positive(d_model, "d_model");
  positive(n_heads, "n_heads");
  positive(n_encoder_layers, "n_encoder_layers");
  positive(n_decoder_layers, "n_decoder_layers");
  positive(d_ff, "d_ff");
  positive(max_source_len, "max_source_len");
  positive(max_target_len, "max_target_len");
  positive(prefix_embedding_dim, "prefix_embedding_dim");
  positive(prefix_hidden_dim, "prefix_hidden_dim");
  if (d_model % n_heads != 0) {
    throw ConfigError("model config: d_model " + std::to_string(d_model) + " is not divisible by n_heads " +
                      std::to_string(n_heads));
  }
  if (max_target_len < 2) throw ConfigError("model config: max_target_len must leave room for BOS and EOS");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("model config: dropout_rate must be in [0, 1)");
}

std::string ModelConfig::backbone_fingerprint() const {
  const nlohmann::json j = {{"vocab_size", vocab_size},         {"d_model", d_model},
                            {"n_heads", n_heads},               {"n_encoder_layers", n_encoder_layers},
                            {"n_decoder_layers", n_decoder_layers}, {"d_ff", d_ff},
                            {"max_source_len", max_source_len}, {"max_target_len", max_target_len}};
  return util::to_hex(util::fnv1a(j.dump()));
}

std::string ModelConfig::prefix_fingerprint() const {
  const nlohmann::json j = {{"backbone", backbone_fingerprint()},
                            {"prefix_length", prefix_length},
                            {"prefix_embedding_dim", prefix_embedding_dim},
                            {"prefix_hidden_dim", prefix_hidden_dim}};
  return util::to_hex(util::fnv1a(j.dump()));
}

nlohmann::json ModelConfig::to_json() const {
  return {{"vocab_size", vocab_size},
          {"d_model", d_model},
          {"n_heads", n_heads},
          {"n_encoder_layers", n_encoder_layers},
          {"n_decoder_layers", n_decoder_layers},
          {"d_ff", d_ff},
          {"max_source_len", max_source_len},
          {"max_target_len", max_target_len},
          {"prefix_length", prefix_length},
          {"dropout_rate", dropout_rate},
          {"prefix_embedding_dim", prefix_embedding_dim},
          {"prefix_hidden_dim", prefix_hidden_dim}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("model config must be a JSON object");
  ModelConfig c;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "vocab_size") c.vocab_size = value.get<std::size_t>();
      else if (key == "d_model") c.d_model = value.get<std::size_t>();
      else if (key == "n_heads") c.n_heads = value.get<std::size_t>();
      else if (key == "n_encoder_layers") c.n_encoder_layers = value.get<std::size_t>();
      else if (key == "n_decoder_layers") c.n_decoder_layers = value.get<std::size_t>();
      else if (key == "d_ff") c.d_ff = value.get<std::size_t>();
      else if (key == "max_source_len") c.max_source_len = value.get<std::size_t>();
      else if (key == "max_target_len") c.max_target_len = value.get<std::size_t>();
      else if (key == "prefix_length") c.prefix_length = value.get<std::size_t>();
      else if (key == "dropout_rate") c.dropout_rate = value.get<double>();
      else if (key == "prefix_embedding_dim") c.prefix_embedding_dim = value.get<std::size_t>();
      else if (key == "prefix_hidden_dim") c.prefix_hidden_dim = value.get<std::size_t>();
      else throw ConfigError("model config: unknown key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("model config: bad value for '" + key + "': " + e.what());
    }
  }
  return c;
}

}  // namespace transcoder::model
