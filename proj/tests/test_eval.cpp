#include <gtest/gtest.h>

#include <cmath>

#include "medex/errors.hpp"
#include "medex/eval.hpp"
#include "medex/random.hpp"

using namespace medex;

namespace {

using Spans = std::vector<std::vector<EntitySpan>>;
const std::vector<std::string> kClasses{"A", "B", "C"};

Spans random_spans(std::size_t sentences, Rng& rng) {
  Spans out(sentences);
  for (auto& s : out) {
    const std::size_t count = rng.index(4);
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t start = rng.index(6);
      s.push_back({start, start + rng.index(2), rng.index(kClasses.size())});
    }
  }
  return out;
}

void expect_counts_consistent(const EvalReport& r) {
  PrfCounts total;
  for (const auto& [name, c] : r.per_class) total += c;
  EXPECT_EQ(total.tp, r.micro.tp);
  EXPECT_EQ(total.fp, r.micro.fp);
  EXPECT_EQ(total.fn, r.micro.fn);
  for (double v : {r.micro.precision(), r.micro.recall(), r.micro.f1()}) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

}  // namespace

TEST(F1FromPr, Examples) {
  EXPECT_NEAR(f1_from_pr(0.897, 0.879), 0.888, 0.0005);
  EXPECT_NEAR(f1_from_pr(0.894, 0.878), 0.886, 0.0005);
  EXPECT_EQ(f1_from_pr(1.0, 1.0), 1.0);
  EXPECT_EQ(f1_from_pr(0.0, 0.7), 0.0);
  EXPECT_EQ(f1_from_pr(0.0, 0.0), 0.0);
  EXPECT_THROW(f1_from_pr(1.2, 0.5), ContractError);
  EXPECT_THROW(f1_from_pr(0.5, -0.1), ContractError);
  EXPECT_THROW(f1_from_pr(std::nan(""), 0.5), ContractError);
}

TEST(F1FromPr, IsHarmonicMeanBetweenMinAndMax) {
  Rng rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    const double p = rng.uniform(0.001, 1.0), r = rng.uniform(0.001, 1.0);
    const double f = f1_from_pr(p, r);
    EXPECT_NEAR(1.0 / f, 0.5 * (1.0 / p + 1.0 / r), 1e-9 / f);
    EXPECT_LE(f, std::max(p, r) + 1e-15);
    EXPECT_GE(f, std::min(p, r) - 1e-15);
  }
}

TEST(EntityPrf, PerfectPrediction) {
  const Spans gold{{{0, 1, 0}}, {{2, 2, 1}, {4, 5, 2}}};
  const auto r = entity_prf(gold, gold, kClasses);
  EXPECT_EQ(r.micro.precision(), 1.0);
  EXPECT_EQ(r.micro.recall(), 1.0);
  EXPECT_EQ(r.micro.f1(), 1.0);
}

TEST(EntityPrf, HandCountedExample) {
  const Spans gold{{{1, 2, 0}}}, pred{{{1, 2, 0}, {4, 4, 0}}};
  const auto r = entity_prf(gold, pred, kClasses);
  EXPECT_EQ(r.micro.tp, 1u);
  EXPECT_EQ(r.micro.fp, 1u);
  EXPECT_EQ(r.micro.fn, 0u);
  EXPECT_EQ(r.micro.precision(), 0.5);
  EXPECT_EQ(r.micro.recall(), 1.0);
  EXPECT_NEAR(r.micro.f1(), 2.0 / 3.0, 1e-15);
}

TEST(EntityPrf, EmptyPredictionScoresZero) {
  const Spans gold{{{1, 2, 0}}}, pred{{}};
  const auto r = entity_prf(gold, pred, kClasses);
  EXPECT_EQ(r.micro.precision(), 0.0);
  EXPECT_EQ(r.micro.recall(), 0.0);
  EXPECT_EQ(r.micro.f1(), 0.0);
}

TEST(EntityPrf, BoundaryOrClassMismatchIsNotAMatch) {
  const Spans gold{{{1, 2, 0}}};
  for (EntitySpan wrong : {EntitySpan{1, 3, 0}, EntitySpan{0, 2, 0}, EntitySpan{1, 2, 1}}) {
    const Spans pred{{wrong}};
    EXPECT_EQ(entity_prf(gold, pred, kClasses).micro.tp, 0u);
  }
}

TEST(EntityPrf, DuplicatesCountOnce) {
  const Spans gold{{{1, 2, 0}}}, pred{{{1, 2, 0}, {1, 2, 0}, {1, 2, 0}}};
  const auto r = entity_prf(gold, pred, kClasses);
  EXPECT_EQ(r.micro.tp, 1u);
  EXPECT_EQ(r.micro.precision(), 1.0);
}

TEST(EntityPrf, MisalignedCountsAreContractError) {
  const Spans gold{{}, {}}, pred{{}};
  EXPECT_THROW(entity_prf(gold, pred, kClasses), ContractError);
}

TEST(EntityPrf, SwapSymmetryAndCountSums) {
  Rng rng(2);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + rng.index(5);
    auto gold = random_spans(n, rng), pred = random_spans(n, rng);
    // Dedup so swapping is exact on both sides.
    for (auto* side : {&gold, &pred})
      for (auto& s : *side) {
        std::sort(s.begin(), s.end());
        s.erase(std::unique(s.begin(), s.end()), s.end());
      }
    const auto a = entity_prf(gold, pred, kClasses), b = entity_prf(pred, gold, kClasses);
    EXPECT_EQ(a.micro.precision(), b.micro.recall());
    EXPECT_EQ(a.micro.recall(), b.micro.precision());
    EXPECT_EQ(a.micro.f1(), b.micro.f1());
    expect_counts_consistent(a);
    expect_counts_consistent(b);
  }
}

TEST(RelationPrf, Examples) {
  const EntitySpan x{0, 0, 0}, y{2, 3, 1}, z{5, 5, 2};
  using Rels = std::vector<std::vector<RelationMention>>;
  const std::vector<std::string> labels{"no-relation", "treats", "causes"};
  const Rels gold{{{x, y, 1}}};
  const auto same = relation_prf(gold, gold, labels);
  EXPECT_EQ(same.micro.f1(), 1.0);

  const Rels wrong{{{x, y, 2}}};
  const auto w = relation_prf(gold, wrong, labels);
  EXPECT_EQ(w.micro.precision(), 0.0);
  EXPECT_EQ(w.micro.recall(), 0.0);
  EXPECT_EQ(w.micro.f1(), 0.0);

  const Rels gold2{{{x, y, 1}, {y, z, 2}}}, pred2{{{x, y, 1}, {z, x, 1}}};
  const auto r = relation_prf(gold2, pred2, labels);
  EXPECT_EQ(r.micro.precision(), 0.5);
  EXPECT_EQ(r.micro.recall(), 0.5);
  EXPECT_EQ(r.micro.f1(), 0.5);
  expect_counts_consistent(r);
  EXPECT_EQ(r.per_class.size(), 2u);  // no-relation is not scored
}

TEST(RelationPrf, DirectionMatters) {
  const EntitySpan x{0, 0, 0}, y{2, 3, 1};
  const std::vector<std::string> labels{"no-relation", "treats"};
  const std::vector<std::vector<RelationMention>> gold{{{x, y, 1}}}, pred{{{y, x, 1}}};
  EXPECT_EQ(relation_prf(gold, pred, labels).micro.tp, 0u);
}

TEST(RelationMentions, ResolveIndicesAndDropNoRelation) {
  const std::vector<EntitySpan> spans{{0, 0, 0}, {2, 3, 1}};
  const std::vector<RelationInstance> rels{{0, 1, 1}, {1, 0, 0}};
  const auto m = relation_mentions(spans, rels);
  ASSERT_EQ(m.size(), 1u);
  EXPECT_EQ(m[0].head, spans[0]);
  EXPECT_EQ(m[0].tail, spans[1]);
}

TEST(Report, JsonAndMarkdown) {
  const std::vector<std::vector<EntitySpan>> gold{{{1, 2, 0}}}, pred{{{1, 2, 0}, {4, 4, 0}}};
  const auto r = entity_prf(gold, pred, kClasses);
  const auto j = report_json(r);
  EXPECT_EQ(j["micro"]["tp"], 1);
  EXPECT_EQ(j["micro"]["precision"], 0.5);
  const std::vector<std::pair<std::string, EvalReport>> rows{{"Encoder + CRF", r}};
  const std::string md = markdown_table(rows);
  EXPECT_EQ(md,
            "| Method | Precision | Recall | F1-Score |\n"
            "|---|---|---|---|\n"
            "| Encoder + CRF | 50.0% | 100.0% | 66.7% |\n");
}

TEST(Report, MacroIsMeanOfClassF1) {
  const std::vector<std::vector<EntitySpan>> gold{{{0, 0, 0}, {2, 2, 1}}}, pred{{{0, 0, 0}}};
  const auto r = entity_prf(gold, pred, std::vector<std::string>{"A", "B"});
  EXPECT_NEAR(r.macro_f1(), 0.5, 1e-15);
}
