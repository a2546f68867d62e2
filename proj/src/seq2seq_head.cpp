#include "medex/seq2seq_head.hpp"

#include "medex/errors.hpp"

namespace medex {

NamedTensors Seq2SeqParams::named() const {
  return {{"seq2seq.tag_embedding", tag_embedding},
          {"seq2seq.weight", weight},
          {"seq2seq.bias", bias}};
}

Seq2SeqParams init_seq2seq(std::size_t d_model, std::size_t num_tags, std::size_t tag_dim,
                           std::uint64_t seed) {
  Rng rng(seed);
  Seq2SeqParams p;
  p.tag_embedding = glorot_uniform(num_tags + 1, tag_dim, rng);
  p.weight = glorot_uniform(d_model + tag_dim, num_tags, rng);
  p.bias = Tensor({num_tags}, true);
  return p;
}

Tensor teacher_forced_loss(const Tensor& h, std::span<const TagIndex> tags,
                           const Seq2SeqParams& params) {
  const std::size_t n = h.rows();
  const std::size_t k = params.num_tags();
  if (tags.size() != n) {
    throw ShapeError("teacher_forced_loss: " + std::to_string(tags.size()) + " tags for " +
                     std::to_string(n) + " positions");
  }
  std::vector<std::size_t> previous(n);
  previous[0] = k;
  for (std::size_t i = 1; i < n; ++i) previous[i] = tags[i - 1];
  const Tensor parts[] = {h, gather_rows(params.tag_embedding, previous)};
  Tensor logits = add_row(matmul(concat_cols(parts), params.weight), params.bias);
  std::vector<std::size_t> targets(tags.begin(), tags.end());
  return cross_entropy(logits, targets);
}

std::vector<TagIndex> greedy_decode(const Tensor& h, const Seq2SeqParams& params) {
  NoGradGuard no_grad;
  const std::size_t n = h.rows();
  const std::size_t d = h.cols();
  const std::size_t k = params.num_tags();
  const std::size_t dt = params.tag_embedding.cols();
  if (params.weight.rows() != d + dt) {
    throw ShapeError("greedy_decode: weight " + shape_string(params.weight.shape()) +
                     " does not fit representations of width " + std::to_string(d));
  }
  // Precompute the H contribution; the tag contribution depends on the previous step.
  Tensor w_h = slice_cols(transpose(params.weight), 0, d);  // [K × d]
  Tensor from_h = matmul(h, transpose(w_h));                // [n × K]
  auto hv = from_h.values();
  auto wv = params.weight.values();
  auto ev = params.tag_embedding.values();
  auto bv = params.bias.values();
  std::vector<TagIndex> out(n);
  std::size_t prev = k;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    double best_score = 0.0;
    for (std::size_t t = 0; t < k; ++t) {
      double s = hv[i * k + t] + bv[t];
      for (std::size_t j = 0; j < dt; ++j) s += ev[prev * dt + j] * wv[(d + j) * k + t];
      if (t == 0 || s > best_score) {
        best_score = s;
        best = t;
      }
    }
    out[i] = best;
    prev = best;
  }
  return out;
}

double invalid_transition_rate(std::span<const std::vector<TagIndex>> batch,
                               const TagScheme& scheme) {
  if (batch.empty()) throw ContractError("invalid_transition_rate: empty batch");
  std::size_t checked = 0;
  std::size_t violations = 0;
  for (const auto& seq : batch) {
    TagIndex prev = TagScheme::outside();
    for (TagIndex t : seq) {
      ++checked;
      if (scheme.is_inside(t)) {
        const bool continues = prev != TagScheme::outside() &&
                               scheme.class_of(prev) == scheme.class_of(t);
        if (!continues) ++violations;
      }
      prev = t;
    }
  }
  return checked ? static_cast<double>(violations) / static_cast<double>(checked) : 0.0;
}

}  // namespace medex
