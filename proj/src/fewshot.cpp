#include "medex/fewshot.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <exception>
#include <thread>

#include "medex/errors.hpp"

namespace medex {

Episode sample_k_shot(const Corpus& corpus, std::size_t k, std::uint64_t seed) {
  const std::size_t classes = corpus.scheme.num_classes();
  Episode ep;
  ep.k = k;
  ep.seed = seed;
  ep.coverage.assign(classes, 0);
  if (k == 0) return ep;

  // Per-class candidate lists in ascending id order.
  std::vector<std::vector<std::size_t>> candidates(classes);
  std::vector<std::vector<std::size_t>> classes_in(corpus.size());
  for (std::size_t id : corpus.indices(Split::train)) {
    auto& present = classes_in[id];
    for (const auto& s : corpus.sentences[id].spans) {
      if (std::find(present.begin(), present.end(), s.cls) == present.end()) present.push_back(s.cls);
    }
    for (std::size_t c : present) candidates[c].push_back(id);
  }

  Rng rng(seed);
  std::vector<bool> used(corpus.size(), false);
  while (true) {
    std::size_t target = classes;
    std::vector<std::size_t> open;
    for (std::size_t c = 0; c < classes; ++c) {
      if (ep.coverage[c] >= k) continue;
      std::vector<std::size_t> unused;
      for (std::size_t id : candidates[c])
        if (!used[id]) unused.push_back(id);
      if (unused.empty()) continue;
      if (target == classes || ep.coverage[c] < ep.coverage[target]) {
        target = c;
        open = std::move(unused);
      }
    }
    if (target == classes) break;
    const std::size_t pick = open[rng.index(open.size())];
    used[pick] = true;
    ep.support.push_back(pick);
    for (std::size_t c : classes_in[pick]) ++ep.coverage[c];
  }
  ep.feasible = std::all_of(ep.coverage.begin(), ep.coverage.end(),
                            [k](std::size_t c) { return c >= k; });
  return ep;
}

void CurveConfig::validate() const {
  if (k_values.empty()) throw ValidationError("curve.k_values must not be empty");
  for (std::size_t i = 0; i < k_values.size(); ++i) {
    if (k_values[i] == 0) throw ValidationError("curve.k_values must be positive");
    if (i > 0 && k_values[i] <= k_values[i - 1]) {
      throw ValidationError("curve.k_values must be strictly ascending");
    }
  }
  if (seeds == 0) throw ValidationError("curve.seeds must be positive");
  base.validate();
}

double median(std::vector<double> values) {
  if (values.empty()) throw ContractError("median of an empty list");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

CurveTable run_curve(const Corpus& corpus, const Checkpoint& pretrained,
                     const CurveConfig& config) {
  config.validate();
  CurveTable table;
  for (std::size_t k : config.k_values) {
    for (std::size_t s = 0; s < config.seeds; ++s) {
      table.rows.push_back({.k = k, .seed = config.base.seed + s});
    }
  }

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  auto worker = [&] {
    for (std::size_t i = next++; i < table.rows.size() && !failed; i = next++) {
      CurveRow& row = table.rows[i];
      try {
        const Episode ep = sample_k_shot(corpus, row.k, row.seed);
        const Corpus support = corpus.subset(ep.support, Split::train);
        TrainConfig cfg = config.base;
        cfg.seed = row.seed;
        const Checkpoint tuned = train(support, pretrained, cfg);
        const auto report = evaluate(tuned.model, corpus, Split::test).entities;
        row.precision = report.micro.precision();
        row.recall = report.micro.recall();
        row.f1 = report.micro.f1();
      } catch (...) {
        if (!failed.exchange(true)) failure = std::current_exception();
      }
    }
  };
  std::size_t threads = config.threads ? config.threads : std::thread::hardware_concurrency();
  threads = std::clamp<std::size_t>(threads, 1, table.rows.size());
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
  }
  if (failure) std::rethrow_exception(failure);

  for (std::size_t k : config.k_values) {
    std::vector<double> f1s;
    for (const auto& r : table.rows)
      if (r.k == k) f1s.push_back(r.f1);
    table.summary.push_back({.k = k,
                             .median_f1 = median(f1s),
                             .min_f1 = *std::min_element(f1s.begin(), f1s.end()),
                             .max_f1 = *std::max_element(f1s.begin(), f1s.end())});
  }
  return table;
}

std::string format_curve_rows(const CurveTable& table) {
  std::string out = "k,seed,precision,recall,f1\n";
  for (const auto& r : table.rows) {
    out += fmt::format("{},{},{:.6f},{:.6f},{:.6f}\n", r.k, r.seed, r.precision, r.recall, r.f1);
  }
  return out;
}

std::string format_curve_summary(const CurveTable& table) {
  std::string out = "k,median_f1,min_f1,max_f1\n";
  for (const auto& s : table.summary) {
    out += fmt::format("{},{:.6f},{:.6f},{:.6f}\n", s.k, s.median_f1, s.min_f1, s.max_f1);
  }
  return out;
}

}  // namespace medex
