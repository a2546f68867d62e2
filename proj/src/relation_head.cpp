#include "medex/relation_head.hpp"

#include <map>

#include "medex/errors.hpp"

namespace medex {

NamedTensors RelationHeadParams::named() const {
  return {{"relation.weight", weight}, {"relation.bias", bias}};
}

RelationHeadParams init_relation_head(std::size_t d_model, std::size_t num_labels,
                                      std::uint64_t seed) {
  if (num_labels < 2) throw ContractError("relation head needs at least two labels");
  Rng rng(seed);
  RelationHeadParams p;
  p.weight = glorot_uniform(2 * d_model, num_labels, rng);
  p.bias = Tensor({num_labels}, true);
  return p;
}

Tensor entity_pool(const Tensor& h, const EntitySpan& span) {
  if (span.start > span.end || span.end >= h.rows()) {
    throw ContractError("entity_pool: span (" + std::to_string(span.start) + "," +
                        std::to_string(span.end) + ") outside " + std::to_string(h.rows()) +
                        " rows");
  }
  return mean_rows(h, span.start, span.end);
}

Tensor relation_logits(const Tensor& head, const Tensor& tail, const RelationHeadParams& params) {
  const Tensor parts[] = {reshape(head, {1, head.numel()}), reshape(tail, {1, tail.numel()})};
  return add_row(matmul(concat_cols(parts), params.weight), params.bias);
}

Tensor relation_loss(std::span<const RelationPair> pairs, const RelationHeadParams& params) {
  if (pairs.empty()) throw ContractError("relation_loss: no pairs");
  std::vector<Tensor> rows;
  std::vector<std::size_t> labels;
  for (const auto& p : pairs) {
    if (p.label >= params.num_labels()) {
      throw ContractError("relation_loss: unknown label " + std::to_string(p.label));
    }
    const Tensor parts[] = {reshape(p.head, {1, p.head.numel()}),
                            reshape(p.tail, {1, p.tail.numel()})};
    rows.push_back(concat_cols(parts));
    labels.push_back(p.label);
  }
  Tensor logits = add_row(matmul(concat_rows(rows), params.weight), params.bias);
  return cross_entropy(logits, labels);
}

std::vector<RelationPair> gold_relation_pairs(const Tensor& h, const Sentence& sentence) {
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> gold;
  for (const auto& r : sentence.relations) gold[{r.head, r.tail}] = r.label;
  std::vector<Tensor> pooled;
  for (const auto& s : sentence.spans) pooled.push_back(entity_pool(h, s));
  std::vector<RelationPair> out;
  for (std::size_t i = 0; i < pooled.size(); ++i) {
    for (std::size_t j = 0; j < pooled.size(); ++j) {
      if (i == j) continue;
      auto it = gold.find({i, j});
      out.push_back({pooled[i], pooled[j], it == gold.end() ? 0 : it->second});
    }
  }
  return out;
}

std::vector<RelationInstance> predict_relations(const Tensor& h, std::span<const EntitySpan> spans,
                                                const RelationHeadParams& params) {
  NoGradGuard no_grad;
  std::vector<Tensor> pooled;
  for (const auto& s : spans) pooled.push_back(entity_pool(h, s));
  std::vector<RelationInstance> out;
  for (std::size_t i = 0; i < pooled.size(); ++i) {
    for (std::size_t j = 0; j < pooled.size(); ++j) {
      if (i == j) continue;
      const Tensor scores = relation_logits(pooled[i], pooled[j], params);
      const auto logits = scores.values();
      std::size_t best = 0;
      for (std::size_t r = 1; r < logits.size(); ++r) {
        if (logits[r] > logits[best]) best = r;
      }
      if (best != 0) out.push_back({i, j, best});
    }
  }
  return out;
}

}  // namespace medex
