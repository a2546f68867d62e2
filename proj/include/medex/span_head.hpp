#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "medex/corpus.hpp"
#include "medex/encoder.hpp"
#include "medex/tensor.hpp"

namespace medex {

// Classifies every candidate span of width ≤ max_width as null (index 0) or
// one of the C entity classes (index cls + 1).
struct SpanHeadParams {
  Tensor width_embedding;  // [max_width × d_w]
  Tensor weight;           // [(3·d_model + d_w) × (C+1)]
  Tensor bias;             // [C+1]

  std::size_t max_width() const { return width_embedding.rows(); }
  std::size_t num_outputs() const { return bias.numel(); }
  NamedTensors named() const;
};

SpanHeadParams init_span_head(std::size_t d_model, std::size_t num_classes,
                              std::size_t max_width, std::size_t width_dim, std::uint64_t seed);

struct ScoredSpan {
  std::size_t start = 0;
  std::size_t end = 0;
  std::vector<double> logits;  // [C+1]
};

// Candidate spans in (width, start) order with their logits as one tensor so
// the loss can backpropagate through them.
struct SpanCandidates {
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  Tensor logits;  // [candidates × (C+1)]

  std::vector<ScoredSpan> scored() const;
};

std::size_t span_candidate_count(std::size_t n, std::size_t max_width);

// Representation concat(H[i], H[j], mean H[i..j], width_embedding[j-i]).
SpanCandidates score_all_spans(const Tensor& h, const SpanHeadParams& params);

// Mean cross-entropy over positives plus at most neg_ratio·max(1, positives)
// seeded null candidates. Gold spans wider than max_width are skipped.
Tensor span_loss(const SpanCandidates& candidates, std::span<const EntitySpan> gold,
                 double neg_ratio, std::uint64_t seed);

// Greedy highest-logit-first non-overlapping selection, sorted by start.
std::vector<EntitySpan> decode_spans(std::span<const ScoredSpan> candidates);

}  // namespace medex
