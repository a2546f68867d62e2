#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "medex/corpus.hpp"
#include "medex/tensor.hpp"

namespace medex {

struct EncoderConfig {
  std::size_t vocab_size = 0;
  std::size_t d_model = 32;
  std::size_t heads = 2;
  std::size_t layers = 2;
  std::size_t d_ff = 64;
  std::size_t max_len = 64;
  double dropout_rate = 0.1;  // only applied when encoding with training=true

  std::size_t head_dim() const { return d_model / heads; }
  // Throws ValidationError naming the offending field.
  void validate() const;
  bool operator==(const EncoderConfig&) const = default;
};

struct EncoderLayer {
  Tensor wq, wk, wv, wo;
  Tensor ff1_w, ff1_b, ff2_w, ff2_b;
  Tensor ln1_gain, ln1_bias, ln2_gain, ln2_bias;
};

struct EncoderParams {
  Tensor token_embedding;     // [vocab × d_model]
  Tensor position_embedding;  // [max_len × d_model]
  std::vector<EncoderLayer> layers;
  Tensor mlm_projection;  // [d_model × vocab]

  std::vector<std::pair<std::string, Tensor>> named() const;
  std::vector<Tensor> all() const;
};

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

EncoderParams init_encoder(const EncoderConfig& config, std::uint64_t seed);

// softmax(QKᵀ/√d_k + bias)·V where masked positions get a -1e9 bias.
// `masked` is empty (nothing masked) or has one entry per key position.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v,
                 std::span<const bool> masked = {});
Tensor attention_weights(const Tensor& q, const Tensor& k, std::span<const bool> masked = {});

// Contextual representations H [n × d_model] for a subword-id sequence.
// Dropout masks are drawn from `dropout_seed` when training is set.
Tensor encode(std::span<const TokenId> ids, const EncoderParams& params,
              const EncoderConfig& config, bool training, std::uint64_t dropout_seed = 0,
              std::span<const bool> padding = {});

// Token-level representations: each token takes the row of its first subword.
Tensor encode_tokens(const Sentence& sentence, const EncoderParams& params,
                     const EncoderConfig& config, bool training, std::uint64_t dropout_seed = 0);

std::vector<TokenId> flatten_subwords(const Sentence& sentence);

struct MaskedSequence {
  std::vector<TokenId> input;
  std::vector<std::size_t> positions;
  std::vector<TokenId> targets;
};

// Selects max(1, floor(mask_prob·n)) positions; of those floor(0.8k) become
// [MASK], floor(0.1k) a random non-reserved id, the rest stay unchanged.
MaskedSequence mask_tokens(std::span<const TokenId> ids, std::size_t vocab_size,
                           double mask_prob, Rng& rng);

// Mean cross-entropy of the MLM projection at the selected positions.
Tensor mlm_step(std::span<const std::vector<TokenId>> batch, const EncoderParams& params,
                const EncoderConfig& config, double mask_prob, std::uint64_t seed);

}  // namespace medex
