#include "medex/eval.hpp"

#include <fmt/format.h>

#include <set>

#include "medex/errors.hpp"

namespace medex {

namespace {

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

template <typename Item, typename ClassOf>
EvalReport score_sets(std::span<const std::vector<Item>> gold, std::span<const std::vector<Item>> pred,
                      std::span<const std::string> class_names, ClassOf class_of,
                      std::size_t first_class) {
  if (gold.size() != pred.size()) {
    throw ContractError("evaluation: " + std::to_string(gold.size()) + " gold sentences but " +
                        std::to_string(pred.size()) + " predicted");
  }
  std::vector<PrfCounts> counts(class_names.size());
  for (std::size_t s = 0; s < gold.size(); ++s) {
    const std::set<Item> g(gold[s].begin(), gold[s].end());
    const std::set<Item> p(pred[s].begin(), pred[s].end());
    for (const auto& item : p) {
      (g.count(item) ? counts.at(class_of(item)).tp : counts.at(class_of(item)).fp)++;
    }
    for (const auto& item : g) {
      if (!p.count(item)) counts.at(class_of(item)).fn++;
    }
  }
  EvalReport report;
  for (std::size_t c = first_class; c < class_names.size(); ++c) {
    report.per_class.emplace_back(class_names[c], counts[c]);
    report.micro += counts[c];
  }
  return report;
}

std::string percent(double v) { return fmt::format("{:.1f}%", 100.0 * v); }

}  // namespace

double f1_from_pr(double precision, double recall) {
  if (!(precision >= 0.0 && precision <= 1.0) || !(recall >= 0.0 && recall <= 1.0)) {
    throw ContractError(fmt::format("f1_from_pr: precision {} / recall {} outside [0, 1]",
                                    precision, recall));
  }
  const double denom = precision + recall;
  return denom == 0.0 ? 0.0 : 2.0 * precision * recall / denom;
}

double PrfCounts::precision() const { return ratio(tp, tp + fp); }
double PrfCounts::recall() const { return ratio(tp, tp + fn); }

PrfCounts& PrfCounts::operator+=(const PrfCounts& o) {
  tp += o.tp;
  fp += o.fp;
  fn += o.fn;
  return *this;
}

double EvalReport::macro_f1() const {
  if (per_class.empty()) return 0.0;
  double total = 0.0;
  for (const auto& [name, c] : per_class) total += c.f1();
  return total / static_cast<double>(per_class.size());
}

EvalReport entity_prf(std::span<const std::vector<EntitySpan>> gold,
                      std::span<const std::vector<EntitySpan>> pred,
                      std::span<const std::string> class_names) {
  return score_sets(gold, pred, class_names, [](const EntitySpan& s) { return s.cls; }, 0);
}

std::vector<RelationMention> relation_mentions(std::span<const EntitySpan> spans,
                                               std::span<const RelationInstance> relations) {
  std::vector<RelationMention> out;
  for (const auto& r : relations) {
    if (r.label == 0) continue;
    out.push_back({spans[r.head], spans[r.tail], r.label});
  }
  return out;
}

EvalReport relation_prf(std::span<const std::vector<RelationMention>> gold,
                        std::span<const std::vector<RelationMention>> pred,
                        std::span<const std::string> label_names) {
  auto drop_none = [](std::span<const std::vector<RelationMention>> sets) {
    std::vector<std::vector<RelationMention>> out;
    for (const auto& s : sets) {
      auto& kept = out.emplace_back();
      for (const auto& m : s)
        if (m.label != 0) kept.push_back(m);
    }
    return out;
  };
  const auto g = drop_none(gold);
  const auto p = drop_none(pred);
  return score_sets<RelationMention>(g, p, label_names,
                                     [](const RelationMention& m) { return m.label; }, 1);
}

nlohmann::ordered_json report_json(const EvalReport& report) {
  auto counts_json = [](const PrfCounts& c) {
    return nlohmann::ordered_json{{"tp", c.tp},
                                  {"fp", c.fp},
                                  {"fn", c.fn},
                                  {"precision", c.precision()},
                                  {"recall", c.recall()},
                                  {"f1", c.f1()}};
  };
  nlohmann::ordered_json out;
  out["micro"] = counts_json(report.micro);
  out["macro_f1"] = report.macro_f1();
  out["per_class"] = nlohmann::ordered_json::object();
  for (const auto& [name, c] : report.per_class) out["per_class"][name] = counts_json(c);
  if (report.token_accuracy) out["token_accuracy"] = *report.token_accuracy;
  if (report.invalid_transition_rate) {
    out["invalid_transition_rate"] = *report.invalid_transition_rate;
  }
  return out;
}

std::string markdown_table(std::span<const std::pair<std::string, EvalReport>> rows) {
  std::string out = "| Method | Precision | Recall | F1-Score |\n|---|---|---|---|\n";
  for (const auto& [name, report] : rows) {
    out += fmt::format("| {} | {} | {} | {} |\n", name, percent(report.micro.precision()),
                       percent(report.micro.recall()), percent(report.micro.f1()));
  }
  return out;
}

}  // namespace medex
