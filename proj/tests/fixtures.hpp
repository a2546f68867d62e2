// Small corpora and models shared by the test suites.
#pragma once

#include <algorithm>
#include <vector>

#include "medex/corpus.hpp"
#include "medex/model.hpp"

namespace fixture {

inline medex::EncoderConfig tiny_encoder(std::size_t d_model = 8, std::size_t layers = 1) {
  medex::EncoderConfig c;
  c.d_model = d_model;
  c.heads = 2;
  c.layers = layers;
  c.d_ff = 2 * d_model;
  c.max_len = 64;
  c.dropout_rate = 0.0;
  return c;
}

// Synthetic corpus tokenized with a vocabulary built from itself.
struct Tokenized {
  medex::Corpus corpus;
  medex::Vocab vocab;
};

inline Tokenized tokenized_corpus(std::size_t size, std::uint64_t seed, std::size_t min_freq = 2) {
  Tokenized t{medex::generate_synthetic_corpus(size, seed), {}};
  t.vocab = medex::build_vocab(t.corpus, min_freq);
  medex::tokenize(t.corpus, t.vocab);
  return t;
}

inline medex::Model tiny_model(const Tokenized& data, medex::HeadKind head, std::uint64_t seed,
                               std::size_t d_model = 8, std::size_t layers = 1) {
  return medex::make_model(data.vocab, tiny_encoder(d_model, layers), head, medex::HeadConfig{},
                           data.corpus.scheme, data.corpus.relation_labels, seed);
}

// First sentence with at least `spans` entities and at most `max_tokens` tokens
// and subwords.
inline const medex::Sentence& find_sentence(const medex::Corpus& c, std::size_t spans,
                                            std::size_t max_tokens = 64) {
  for (const auto& s : c.sentences) {
    std::size_t pieces = 0;
    for (const auto& t : s.tokens) pieces += t.subword_ids.size();
    if (s.spans.size() >= spans && s.size() <= max_tokens && pieces <= max_tokens) return s;
  }
  throw std::runtime_error("no sentence matches the fixture request");
}

}  // namespace fixture
