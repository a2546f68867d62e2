#pragma once

#include <compare>
#include <nlohmann/json.hpp>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "medex/corpus.hpp"

namespace medex {

// 2pr/(p+r), or 0 when p+r = 0. Both inputs must lie in [0, 1].
double f1_from_pr(double precision, double recall);

struct PrfCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  double precision() const;
  double recall() const;
  double f1() const { return f1_from_pr(precision(), recall()); }
  PrfCounts& operator+=(const PrfCounts& o);
};

struct EvalReport {
  std::vector<std::pair<std::string, PrfCounts>> per_class;
  PrfCounts micro;
  std::optional<double> token_accuracy;
  std::optional<double> invalid_transition_rate;

  double macro_f1() const;
};

// Exact (start, end, cls) matching, micro-averaged. Duplicate predictions
// within a sentence count once.
EvalReport entity_prf(std::span<const std::vector<EntitySpan>> gold,
                      std::span<const std::vector<EntitySpan>> pred,
                      std::span<const std::string> class_names);

struct RelationMention {
  EntitySpan head;
  EntitySpan tail;
  std::size_t label = 0;
  auto operator<=>(const RelationMention&) const = default;
};

// Resolves span indices; no-relation instances are dropped.
std::vector<RelationMention> relation_mentions(std::span<const EntitySpan> spans,
                                               std::span<const RelationInstance> relations);

// Exact (head span, tail span, label) matching; label 0 (no-relation) is
// never scored.
EvalReport relation_prf(std::span<const std::vector<RelationMention>> gold,
                        std::span<const std::vector<RelationMention>> pred,
                        std::span<const std::string> label_names);

nlohmann::ordered_json report_json(const EvalReport& report);

// "| Method | Precision | Recall | F1-Score |" with percentages to one decimal.
std::string markdown_table(std::span<const std::pair<std::string, EvalReport>> rows);

}  // namespace medex
