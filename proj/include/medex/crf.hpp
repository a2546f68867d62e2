#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "medex/corpus.hpp"
#include "medex/encoder.hpp"
#include "medex/tensor.hpp"

namespace medex {

// Linear-chain CRF over K tags. transitions[a][b] scores tag b following tag a;
// start and stop score the first and last tag.
struct CrfParams {
  Tensor emit_weight;  // [d_model × K]
  Tensor emit_bias;    // [K]
  Tensor transitions;  // [K × K]
  Tensor start;        // [K]
  Tensor stop;         // [K]

  std::size_t num_tags() const { return transitions.rows(); }
  NamedTensors named() const;
};

CrfParams init_crf(std::size_t d_model, std::size_t num_tags, std::uint64_t seed);

// E = H·W + b, one row of tag scores per token.
Tensor emissions(const Tensor& h, const CrfParams& params);

// start[y₀] + Σ E[i][yᵢ] + Σ T[yᵢ₋₁][yᵢ] + stop[yₙ₋₁].
Tensor sequence_score(const Tensor& e, const Tensor& transitions, const Tensor& start,
                      const Tensor& stop, std::span<const TagIndex> tags);

// log Σ_Y exp(score(Y)) by the forward recursion; gradients are the
// forward-backward marginals.
Tensor log_partition(const Tensor& e, const Tensor& transitions, const Tensor& start,
                     const Tensor& stop);

Tensor crf_nll(const Tensor& e, const Tensor& transitions, const Tensor& start,
               const Tensor& stop, std::span<const TagIndex> tags);
Tensor crf_nll(const Tensor& e, const CrfParams& params, std::span<const TagIndex> tags);

struct Decoded {
  std::vector<TagIndex> tags;
  double score = 0.0;
};

// Among equal-scoring paths the result has the smallest tag at the last
// position, then at the one before, and so on.
Decoded viterbi(const Tensor& e, const Tensor& transitions, const Tensor& start,
                const Tensor& stop);
Decoded viterbi(const Tensor& e, const CrfParams& params);

struct OracleResult {
  double log_partition = 0.0;
  std::vector<TagIndex> best;
  double best_score = 0.0;
};

// Exhaustive enumeration of all Kⁿ sequences (Kⁿ ≤ 100000) with the same
// tie-break as viterbi.
OracleResult brute_force_oracle(const Tensor& e, const Tensor& transitions, const Tensor& start,
                                const Tensor& stop);

}  // namespace medex
