#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "medex/corpus.hpp"
#include "medex/encoder.hpp"
#include "medex/tensor.hpp"

namespace medex {

// Left-to-right tagger conditioned on the previous tag. Row K of the tag
// embedding is the begin-of-sequence marker.
struct Seq2SeqParams {
  Tensor tag_embedding;  // [(K+1) × d_t]
  Tensor weight;         // [(d_model + d_t) × K]
  Tensor bias;           // [K]

  std::size_t num_tags() const { return bias.numel(); }
  NamedTensors named() const;
};

Seq2SeqParams init_seq2seq(std::size_t d_model, std::size_t num_tags, std::size_t tag_dim,
                           std::uint64_t seed);

// Mean cross-entropy with gold previous tags fed forward.
Tensor teacher_forced_loss(const Tensor& h, std::span<const TagIndex> tags,
                           const Seq2SeqParams& params);

// Feeds back its own argmax; applies no BIO constraint.
std::vector<TagIndex> greedy_decode(const Tensor& h, const Seq2SeqParams& params);

// Fraction of adjacent pairs, counting a virtual O before each sequence, where
// an I-c follows anything other than B-c or I-c.
double invalid_transition_rate(std::span<const std::vector<TagIndex>> batch,
                               const TagScheme& scheme);

}  // namespace medex
