#include "medex/encoder.hpp"

#include <algorithm>
#include <cmath>

#include "medex/errors.hpp"

namespace medex {

namespace {

constexpr double kMaskBias = -1e9;

Tensor zeros(std::size_t n) { return Tensor({n}, true); }
Tensor ones(std::size_t n) { return Tensor({n}, std::vector<double>(n, 1.0), true); }

Tensor dropout(const Tensor& x, double rate, Rng& rng) {
  if (rate <= 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> keep(x.numel());
  for (auto& k : keep) k = rng.uniform() < rate ? 0.0 : keep_scale;
  return mul(x, Tensor(x.shape(), std::move(keep)));
}

}  // namespace

void EncoderConfig::validate() const {
  if (vocab_size <= Vocab::num_reserved) {
    throw ValidationError("encoder.vocab_size must exceed the reserved entries");
  }
  if (d_model == 0) throw ValidationError("encoder.d_model must be positive");
  if (heads == 0 || d_model % heads != 0) {
    throw ValidationError("encoder.heads must divide encoder.d_model");
  }
  if (layers == 0) throw ValidationError("encoder.layers must be positive");
  if (d_ff == 0) throw ValidationError("encoder.d_ff must be positive");
  if (max_len == 0) throw ValidationError("encoder.max_len must be positive");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw ValidationError("encoder.dropout must lie in [0, 1)");
  }
}

NamedTensors EncoderParams::named() const {
  NamedTensors out = {{"encoder.token_embedding", token_embedding},
                      {"encoder.position_embedding", position_embedding}};
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& L = layers[l];
    const std::string p = "encoder.layer" + std::to_string(l) + ".";
    out.insert(out.end(), {{p + "wq", L.wq},
                           {p + "wk", L.wk},
                           {p + "wv", L.wv},
                           {p + "wo", L.wo},
                           {p + "ff1_w", L.ff1_w},
                           {p + "ff1_b", L.ff1_b},
                           {p + "ff2_w", L.ff2_w},
                           {p + "ff2_b", L.ff2_b},
                           {p + "ln1_gain", L.ln1_gain},
                           {p + "ln1_bias", L.ln1_bias},
                           {p + "ln2_gain", L.ln2_gain},
                           {p + "ln2_bias", L.ln2_bias}});
  }
  out.emplace_back("encoder.mlm_projection", mlm_projection);
  return out;
}

std::vector<Tensor> EncoderParams::all() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named()) out.push_back(t);
  return out;
}

EncoderParams init_encoder(const EncoderConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  const std::size_t d = config.d_model;
  EncoderParams p;
  p.token_embedding = glorot_uniform(config.vocab_size, d, rng);
  p.position_embedding = glorot_uniform(config.max_len, d, rng);
  for (std::size_t l = 0; l < config.layers; ++l) {
    EncoderLayer L;
    L.wq = glorot_uniform(d, d, rng);
    L.wk = glorot_uniform(d, d, rng);
    L.wv = glorot_uniform(d, d, rng);
    L.wo = glorot_uniform(d, d, rng);
    L.ff1_w = glorot_uniform(d, config.d_ff, rng);
    L.ff1_b = zeros(config.d_ff);
    L.ff2_w = glorot_uniform(config.d_ff, d, rng);
    L.ff2_b = zeros(d);
    L.ln1_gain = ones(d);
    L.ln1_bias = zeros(d);
    L.ln2_gain = ones(d);
    L.ln2_bias = zeros(d);
    p.layers.push_back(std::move(L));
  }
  p.mlm_projection = glorot_uniform(d, config.vocab_size, rng);
  return p;
}

Tensor attention_weights(const Tensor& q, const Tensor& k, std::span<const bool> masked) {
  if (q.cols() != k.cols()) {
    throw ShapeError("attention: query " + shape_string(q.shape()) + " and key " +
                     shape_string(k.shape()) + " widths differ");
  }
  const std::size_t n = k.rows();
  Tensor scores = scale(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(q.cols())));
  if (!masked.empty()) {
    if (masked.size() != n) throw ShapeError("attention: mask length differs from key count");
    if (std::all_of(masked.begin(), masked.end(), [](bool m) { return m; })) {
      throw ContractError("attention: every position is masked");
    }
    std::vector<double> bias(n);
    for (std::size_t j = 0; j < n; ++j) bias[j] = masked[j] ? kMaskBias : 0.0;
    scores = add_row(scores, Tensor::vector(std::move(bias)));
  }
  return softmax_rows(scores);
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, std::span<const bool> masked) {
  if (k.rows() != v.rows()) {
    throw ShapeError("attention: key " + shape_string(k.shape()) + " and value " +
                     shape_string(v.shape()) + " lengths differ");
  }
  return matmul(attention_weights(q, k, masked), v);
}

Tensor encode(std::span<const TokenId> ids, const EncoderParams& params,
              const EncoderConfig& config, bool training, std::uint64_t dropout_seed,
              std::span<const bool> padding) {
  const std::size_t n = ids.size();
  if (n == 0) throw ContractError("encode: empty input");
  if (n > config.max_len) {
    throw ShapeError("encode: sequence of length " + std::to_string(n) + " exceeds max_len " +
                     std::to_string(config.max_len));
  }
  for (auto id : ids) {
    if (id >= config.vocab_size) {
      throw ContractError("encode: token id " + std::to_string(id) + " outside vocabulary");
    }
  }
  std::vector<std::size_t> rows(ids.begin(), ids.end());
  std::vector<std::size_t> positions(n);
  for (std::size_t i = 0; i < n; ++i) positions[i] = i;
  Tensor x = add(gather_rows(params.token_embedding, rows),
                 gather_rows(params.position_embedding, positions));

  Rng rng(dropout_seed);
  const double rate = training ? config.dropout_rate : 0.0;
  const std::size_t dk = config.head_dim();
  for (const auto& layer : params.layers) {
    Tensor q = matmul(x, layer.wq);
    Tensor k = matmul(x, layer.wk);
    Tensor v = matmul(x, layer.wv);
    std::vector<Tensor> heads;
    heads.reserve(config.heads);
    for (std::size_t h = 0; h < config.heads; ++h) {
      heads.push_back(attention(slice_cols(q, h * dk, dk), slice_cols(k, h * dk, dk),
                                slice_cols(v, h * dk, dk), padding));
    }
    Tensor attended = dropout(matmul(concat_cols(heads), layer.wo), rate, rng);
    x = layer_norm(add(x, attended), layer.ln1_gain, layer.ln1_bias);

    Tensor hidden = relu(add_row(matmul(x, layer.ff1_w), layer.ff1_b));
    Tensor ff = dropout(add_row(matmul(hidden, layer.ff2_w), layer.ff2_b), rate, rng);
    x = layer_norm(add(x, ff), layer.ln2_gain, layer.ln2_bias);
  }
  return x;
}

std::vector<TokenId> flatten_subwords(const Sentence& sentence) {
  std::vector<TokenId> ids;
  for (const auto& tok : sentence.tokens) {
    if (tok.subword_ids.empty()) {
      throw ContractError("token '" + tok.surface + "' has not been tokenized");
    }
    ids.insert(ids.end(), tok.subword_ids.begin(), tok.subword_ids.end());
  }
  return ids;
}

Tensor encode_tokens(const Sentence& sentence, const EncoderParams& params,
                     const EncoderConfig& config, bool training, std::uint64_t dropout_seed) {
  const auto ids = flatten_subwords(sentence);
  Tensor h = encode(ids, params, config, training, dropout_seed);
  if (ids.size() == sentence.size()) return h;
  std::vector<std::size_t> first;
  std::size_t offset = 0;
  for (const auto& tok : sentence.tokens) {
    first.push_back(offset);
    offset += tok.subword_ids.size();
  }
  return gather_rows(h, first);
}

MaskedSequence mask_tokens(std::span<const TokenId> ids, std::size_t vocab_size,
                           double mask_prob, Rng& rng) {
  if (!(mask_prob > 0.0 && mask_prob < 1.0)) {
    throw ContractError("mask_tokens: mask_prob must lie in (0, 1)");
  }
  const std::size_t n = ids.size();
  if (n == 0) throw ContractError("mask_tokens: empty sequence");
  // The epsilon keeps products such as 0.15·20 from flooring to 2.
  const auto chosen = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(mask_prob * static_cast<double>(n) + 1e-9)));
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  for (std::size_t i = 0; i < chosen; ++i) std::swap(order[i], order[i + rng.index(n - i)]);

  MaskedSequence out;
  out.input.assign(ids.begin(), ids.end());
  out.positions.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(chosen));
  std::sort(out.positions.begin(), out.positions.end());
  const auto to_mask = static_cast<std::size_t>(std::floor(0.8 * static_cast<double>(chosen)));
  const auto to_random = static_cast<std::size_t>(std::floor(0.1 * static_cast<double>(chosen)));
  const bool has_words = vocab_size > Vocab::num_reserved;
  for (std::size_t r = 0; r < chosen; ++r) {
    const std::size_t pos = order[r];
    if (r < to_mask) {
      out.input[pos] = Vocab::mask;
    } else if (r < to_mask + to_random) {
      out.input[pos] = has_words
                           ? Vocab::num_reserved + rng.index(vocab_size - Vocab::num_reserved)
                           : rng.index(vocab_size);
    }
  }
  for (auto pos : out.positions) out.targets.push_back(ids[pos]);
  return out;
}

Tensor mlm_step(std::span<const std::vector<TokenId>> batch, const EncoderParams& params,
                const EncoderConfig& config, double mask_prob, std::uint64_t seed) {
  if (batch.empty()) throw ContractError("mlm_step: empty batch");
  std::vector<Tensor> logits;
  std::vector<std::size_t> targets;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    Rng rng(derive_seed(seed, 2 * b));
    const auto masked = mask_tokens(batch[b], config.vocab_size, mask_prob, rng);
    Tensor h = encode(masked.input, params, config, true, derive_seed(seed, 2 * b + 1));
    logits.push_back(matmul(gather_rows(h, masked.positions), params.mlm_projection));
    targets.insert(targets.end(), masked.targets.begin(), masked.targets.end());
  }
  return cross_entropy(concat_rows(logits), targets);
}

}  // namespace medex
