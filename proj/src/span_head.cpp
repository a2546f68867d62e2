#include "medex/span_head.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <tuple>

#include "medex/errors.hpp"

namespace medex {

NamedTensors SpanHeadParams::named() const {
  return {{"span.width_embedding", width_embedding}, {"span.weight", weight}, {"span.bias", bias}};
}

SpanHeadParams init_span_head(std::size_t d_model, std::size_t num_classes,
                              std::size_t max_width, std::size_t width_dim, std::uint64_t seed) {
  if (max_width == 0) throw ContractError("span head: max_width must be at least 1");
  Rng rng(seed);
  SpanHeadParams p;
  p.width_embedding = glorot_uniform(max_width, width_dim, rng);
  p.weight = glorot_uniform(3 * d_model + width_dim, num_classes + 1, rng);
  p.bias = Tensor({num_classes + 1}, true);
  return p;
}

std::vector<ScoredSpan> SpanCandidates::scored() const {
  std::vector<ScoredSpan> out;
  out.reserve(spans.size());
  const std::size_t c = logits.cols();
  auto lv = logits.values();
  for (std::size_t i = 0; i < spans.size(); ++i) {
    out.push_back({spans[i].first, spans[i].second,
                   std::vector<double>(lv.begin() + static_cast<std::ptrdiff_t>(i * c),
                                       lv.begin() + static_cast<std::ptrdiff_t>((i + 1) * c))});
  }
  return out;
}

std::size_t span_candidate_count(std::size_t n, std::size_t max_width) {
  std::size_t total = 0;
  for (std::size_t w = 1; w <= max_width && w <= n; ++w) total += n - w + 1;
  return total;
}

SpanCandidates score_all_spans(const Tensor& h, const SpanHeadParams& params) {
  const std::size_t n = h.rows();
  const std::size_t d = h.cols();
  if (params.weight.rows() != 3 * d + params.width_embedding.cols()) {
    throw ShapeError("score_all_spans: classifier " + shape_string(params.weight.shape()) +
                     " does not fit representations of width " + std::to_string(d));
  }
  SpanCandidates out;
  std::vector<std::size_t> starts, ends, widths;
  for (std::size_t w = 1; w <= params.max_width() && w <= n; ++w) {
    for (std::size_t i = 0; i + w <= n; ++i) {
      out.spans.emplace_back(i, i + w - 1);
      starts.push_back(i);
      ends.push_back(i + w - 1);
      widths.push_back(w - 1);
    }
  }
  const std::size_t m = out.spans.size();
  // Averaging matrix: row r holds 1/width over the span's tokens.
  std::vector<double> pool(m * n, 0.0);
  for (std::size_t r = 0; r < m; ++r) {
    const auto [i, j] = out.spans[r];
    const double inv = 1.0 / static_cast<double>(j - i + 1);
    for (std::size_t t = i; t <= j; ++t) pool[r * n + t] = inv;
  }
  const Tensor parts[] = {gather_rows(h, starts), gather_rows(h, ends),
                          matmul(Tensor({m, n}, std::move(pool)), h),
                          gather_rows(params.width_embedding, widths)};
  out.logits = add_row(matmul(concat_cols(parts), params.weight), params.bias);
  return out;
}

Tensor span_loss(const SpanCandidates& candidates, std::span<const EntitySpan> gold,
                 double neg_ratio, std::uint64_t seed) {
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> gold_label;
  std::size_t max_width = 0;
  for (const auto& [i, j] : candidates.spans) max_width = std::max(max_width, j - i + 1);
  for (const auto& g : gold) {
    if (g.width() > max_width) {
      std::clog << "warning: gold span (" << g.start << "," << g.end
                << ") exceeds the span head's max width and is ignored\n";
      continue;
    }
    gold_label[{g.start, g.end}] = g.cls + 1;
  }
  std::vector<std::size_t> positives, negatives;
  for (std::size_t r = 0; r < candidates.spans.size(); ++r) {
    (gold_label.count(candidates.spans[r]) ? positives : negatives).push_back(r);
  }
  const auto limit = static_cast<std::size_t>(
      std::floor(neg_ratio * static_cast<double>(std::max<std::size_t>(positives.size(), 1))));
  if (negatives.size() > limit) {
    Rng rng(seed);
    for (std::size_t i = 0; i < limit; ++i) {
      std::swap(negatives[i], negatives[i + rng.index(negatives.size() - i)]);
    }
    negatives.resize(limit);
  }
  std::vector<std::size_t> retained = positives;
  retained.insert(retained.end(), negatives.begin(), negatives.end());
  std::sort(retained.begin(), retained.end());
  if (retained.empty()) throw ContractError("span_loss: no candidates retained");
  std::vector<std::size_t> targets;
  for (auto r : retained) {
    auto it = gold_label.find(candidates.spans[r]);
    targets.push_back(it == gold_label.end() ? 0 : it->second);
  }
  return cross_entropy(gather_rows(candidates.logits, retained), targets);
}

std::vector<EntitySpan> decode_spans(std::span<const ScoredSpan> candidates) {
  struct Pick {
    double logit;
    EntitySpan span;
  };
  std::vector<Pick> picks;
  for (const auto& c : candidates) {
    if (c.logits.empty()) continue;
    std::size_t best = 0;
    for (std::size_t k = 1; k < c.logits.size(); ++k) {
      if (c.logits[k] > c.logits[best]) best = k;
    }
    if (best == 0) continue;
    picks.push_back({c.logits[best], {c.start, c.end, best - 1}});
  }
  std::sort(picks.begin(), picks.end(), [](const Pick& a, const Pick& b) {
    return std::tie(b.logit, a.span.start, a.span.end) < std::tie(a.logit, b.span.start, b.span.end);
  });
  std::vector<EntitySpan> accepted;
  for (const auto& p : picks) {
    const bool clash = std::any_of(accepted.begin(), accepted.end(),
                                   [&](const EntitySpan& s) { return s.overlaps(p.span); });
    if (!clash) accepted.push_back(p.span);
  }
  std::sort(accepted.begin(), accepted.end());
  return accepted;
}

}  // namespace medex
