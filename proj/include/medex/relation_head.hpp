#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "medex/corpus.hpp"
#include "medex/encoder.hpp"
#include "medex/tensor.hpp"

namespace medex {

// Affine scorer over [h_e1; h_e2]. Label 0 is "no-relation".
struct RelationHeadParams {
  Tensor weight;  // [2·d_model × R]
  Tensor bias;    // [R]

  std::size_t num_labels() const { return bias.numel(); }
  NamedTensors named() const;
};

RelationHeadParams init_relation_head(std::size_t d_model, std::size_t num_labels,
                                      std::uint64_t seed);

// Mean of H rows span.start..span.end as a [1 × d_model] tensor.
Tensor entity_pool(const Tensor& h, const EntitySpan& span);

// Ordered: swapping the arguments generally changes the result.
Tensor relation_logits(const Tensor& head, const Tensor& tail, const RelationHeadParams& params);

struct RelationPair {
  Tensor head;  // pooled [1 × d_model]
  Tensor tail;
  std::size_t label = 0;
};

Tensor relation_loss(std::span<const RelationPair> pairs, const RelationHeadParams& params);

// Every ordered pair of distinct spans labelled with its gold relation, or
// no-relation when the sentence lists none for that pair.
std::vector<RelationPair> gold_relation_pairs(const Tensor& h, const Sentence& sentence);

// Argmax label for every ordered pair of distinct spans, omitting no-relation.
// Head/tail index into `spans`.
std::vector<RelationInstance> predict_relations(const Tensor& h, std::span<const EntitySpan> spans,
                                                const RelationHeadParams& params);

}  // namespace medex
