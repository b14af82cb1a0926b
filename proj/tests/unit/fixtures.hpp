#pragma once

#include <vector>

#include "transcoder/data/corpus.hpp"
#include "transcoder/model/config.hpp"

namespace transcoder::testing {

struct SmallWorld {
  data::Vocab vocab;
  std::vector<data::Corpus> corpora;  // sum-alpha, trans-alpha, cls-alpha, cls-beta
  model::ModelConfig config;
};

inline model::ModelConfig small_config(std::size_t vocab_size, std::size_t prefix_length = 4) {
  model::ModelConfig c;
  c.vocab_size = vocab_size;
  c.d_model = 16;
  c.d_ff = 32;
  c.n_heads = 2;
  c.n_encoder_layers = 1;
  c.n_decoder_layers = 1;
  c.prefix_length = prefix_length;
  c.prefix_embedding_dim = 8;
  c.prefix_hidden_dim = 16;
  return c;
}

inline SmallWorld small_world(std::size_t prefix_length = 4) {
  std::vector<data::RawCorpus> raws;
  raws.push_back(data::generate_minilang_corpus("alpha", data::TaskKind::Summarization, 80, 12, 12, 41));
  raws.push_back(data::generate_minilang_corpus("alpha", data::TaskKind::Translation, 60, 12, 12, 42));
  raws.push_back(data::generate_minilang_corpus("alpha", data::TaskKind::Classification, 40, 12, 12, 43));
  raws.push_back(data::generate_minilang_corpus("beta", data::TaskKind::Classification, 48, 12, 12, 44));
  SmallWorld w;
  w.vocab = data::build_vocab(raws);
  for (const auto& raw : raws) w.corpora.push_back(data::encode_corpus(raw, w.vocab));
  w.config = small_config(w.vocab.size(), prefix_length);
  return w;
}

}  // namespace transcoder::testing
