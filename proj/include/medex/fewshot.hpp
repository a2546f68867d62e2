#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "medex/corpus.hpp"
#include "medex/training.hpp"

namespace medex {

struct Episode {
  std::vector<std::size_t> support;  // corpus sentence ids, in pick order
  std::size_t k = 0;
  std::uint64_t seed = 0;
  std::vector<std::size_t> coverage;  // crediting sentences per class
  bool feasible = true;               // false when some class stayed below k
};

// Greedy support-set construction. Each pick serves the class with the fewest
// crediting sentences so far (lowest class index on ties) and draws a uniform
// random unused training sentence containing it; the pick credits every class
// it contains. The pick sequence does not depend on k, so a smaller k yields a
// prefix of a larger k's support.
Episode sample_k_shot(const Corpus& corpus, std::size_t k, std::uint64_t seed);

struct CurveConfig {
  std::vector<std::size_t> k_values{1, 5, 10, 20, 50, 100};
  std::size_t seeds = 5;  // run seeds are base.seed, base.seed + 1, ...
  TrainConfig base;
  std::size_t threads = 0;  // 0 picks the hardware concurrency

  void validate() const;
};

struct CurveRow {
  std::size_t k = 0;
  std::uint64_t seed = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct CurveSummary {
  std::size_t k = 0;
  double median_f1 = 0.0;
  double min_f1 = 0.0;
  double max_f1 = 0.0;
};

struct CurveTable {
  std::vector<CurveRow> rows;  // ordered by (k, seed)
  std::vector<CurveSummary> summary;
};

// Fine-tunes `pretrained` on each sampled support set and scores entity F1 on
// the test split.
CurveTable run_curve(const Corpus& corpus, const Checkpoint& pretrained,
                     const CurveConfig& config);

double median(std::vector<double> values);

std::string format_curve_rows(const CurveTable& table);     // k,seed,precision,recall,f1
std::string format_curve_summary(const CurveTable& table);  // k,median_f1,min_f1,max_f1

}  // namespace medex
