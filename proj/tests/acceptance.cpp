// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero when any criterion fails.
#include <fmt/format.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <map>
#include <regex>
#include <sstream>

#include "fixtures.hpp"
#include "medex/crf.hpp"
#include "medex/errors.hpp"
#include "medex/eval.hpp"
#include "medex/fewshot.hpp"
#include "medex/relation_head.hpp"
#include "medex/seq2seq_head.hpp"
#include "medex/span_head.hpp"
#include "medex/training.hpp"

using namespace medex;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, std::string_view name, const std::function<Outcome()>& check) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!o.pass) ++failures;
  fmt::print("{} [{}] {}: {} ({:.1f} s)\n", o.pass ? "PASS" : "FAIL", id, name, o.detail, secs);
  std::fflush(stdout);
}

double elapsed_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Tensor random_tensor(Shape shape, Rng& rng, double scale = 2.0) {
  Tensor t(shape);
  for (auto& v : t.mutable_values()) v = rng.uniform(-scale, scale);
  return t;
}

struct CrfCase {
  Tensor e, t, start, stop;
};

std::vector<CrfCase> oracle_cases() {
  std::vector<CrfCase> cases;
  Rng rng(20240101);
  for (int i = 0; i < 120; ++i) {
    const std::size_t n = 1 + rng.index(6), k = 1 + rng.index(4);
    cases.push_back({random_tensor({n, k}, rng), random_tensor({k, k}, rng),
                     random_tensor({k}, rng), random_tensor({k}, rng)});
  }
  return cases;
}

// 1. Forward-algorithm partition and Viterbi against exhaustive enumeration.
Outcome crf_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto cases = oracle_cases();
  double worst = 0.0;
  std::size_t argmax_mismatch = 0;
  for (const auto& c : cases) {
    const auto brute = brute_force_oracle(c.e, c.t, c.start, c.stop);
    worst = std::max(worst, std::abs(log_partition(c.e, c.t, c.start, c.stop).item() -
                                     brute.log_partition));
    if (viterbi(c.e, c.t, c.start, c.stop).tags != brute.best) ++argmax_mismatch;
  }
  const double secs = elapsed_since(t0);
  return {worst <= 1e-10 && argmax_mismatch == 0 && secs < 10.0,
          fmt::format("{} instances, max |logZ diff| {:.2e} (tol 1e-10), argmax mismatches {}, "
                      "{:.2f} s (limit 10 s)",
                      cases.size(), worst, argmax_mismatch, secs)};
}

// 2. Finite differences for the four losses through a d_model=8, L=1 encoder.
Outcome gradient_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  auto data = fixture::tokenized_corpus(40, 11);
  const Sentence& s = fixture::find_sentence(data.corpus, 2, 14);
  std::vector<std::string> parts;
  bool ok = true;
  auto check = [&](const char* label, HeadKind head, const std::function<Tensor(const Model&)>& loss) {
    Model m = fixture::tiny_model(data, head, 5, 8, 1);
    auto params = m.parameters();
    const double err = finite_diff_check([&] { return loss(m); }, params, 1e-5);
    ok = ok && err < 1e-4;
    parts.push_back(fmt::format("{} {:.2e}", label, err));
  };
  auto h = [&](const Model& m) { return encode_tokens(s, m.encoder, m.encoder_config, false); };
  check("crf", HeadKind::crf, [&](const Model& m) { return crf_nll(emissions(h(m), m.crf), m.crf, s.tags); });
  check("span", HeadKind::span, [&](const Model& m) {
    return span_loss(score_all_spans(h(m), m.span), s.spans, m.head_config.span_neg_ratio, 3);
  });
  check("seq2seq", HeadKind::seq2seq,
        [&](const Model& m) { return teacher_forced_loss(h(m), s.tags, m.seq2seq); });
  check("relation", HeadKind::none,
        [&](const Model& m) { return relation_loss(gold_relation_pairs(h(m), s), m.relation); });
  const double secs = elapsed_since(t0);
  return {ok && secs < 30.0,
          fmt::format("max rel err {} (tol 1e-4), {} tokens, {:.2f} s (limit 30 s)",
                      fmt::join(parts, ", "), s.size(), secs)};
}

// 3. F1 recomputed from every published precision/recall pair.
Outcome published_arithmetic() {
  std::ifstream in(MEDEX_PUBLISHED_RESULTS);
  if (!in) return {false, "cannot read " MEDEX_PUBLISHED_RESULTS};
  const std::regex row(R"(^([^\t]+)\t([0-9.]+)%\t([0-9.]+)%\t([0-9.]+)%\s*$)");
  std::string line;
  std::vector<std::string> parts;
  double worst = 0.0;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    std::smatch m;
    if (!std::regex_match(line, m, row)) continue;
    const double p = std::stod(m[2]) / 100, r = std::stod(m[3]) / 100, f = std::stod(m[4]) / 100;
    const double diff = std::abs(f1_from_pr(p, r) - f);
    worst = std::max(worst, diff);
    parts.push_back(fmt::format("{} {:.4f}->{:.4f}", m[1].str(), f1_from_pr(p, r), f));
    ++rows;
  }
  return {rows == 7 && worst <= 0.0005,
          fmt::format("{} rows (expected 7), max |diff| {:.5f} (tol 0.0005): {}", rows, worst,
                      fmt::join(parts, "; "))};
}

// 4. BIO encode/decode identity and repair of an orphan inside tag.
Outcome bio_algebra() {
  const TagScheme scheme = TagScheme::disease_default();
  Rng rng(4);
  std::size_t failures_seen = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    const std::size_t n = 1 + rng.index(20);
    std::vector<EntitySpan> spans;
    for (std::size_t i = 0; i < n;) {
      if (rng.uniform() < 0.35) {
        const std::size_t w = 1 + rng.index(std::min<std::size_t>(5, n - i));
        spans.push_back({i, i + w - 1, rng.index(scheme.num_classes())});
        i += w;
      } else {
        ++i;
      }
    }
    if (tags_to_spans(spans_to_tags(spans, n, scheme), scheme, BioMode::strict) != spans) {
      ++failures_seen;
    }
  }
  const std::vector<TagIndex> orphan{TagScheme::outside(), scheme.inside_tag(0)};
  const bool repair_ok = tags_to_spans(orphan, scheme, BioMode::repair) ==
                         std::vector<EntitySpan>{{1, 1, 0}};
  bool strict_rejects = false;
  try {
    tags_to_spans(orphan, scheme, BioMode::strict);
  } catch (const ValidationError&) {
    strict_rejects = true;
  }
  return {failures_seen == 0 && repair_ok && strict_rejects,
          fmt::format("10000 random span sets, {} round-trip failures; [O, I-D] repair -> (1,1,D) {}; "
                      "strict rejects {}",
                      failures_seen, repair_ok ? "yes" : "no", strict_rejects ? "yes" : "no")};
}

Corpus all_train(const Corpus& c) {
  std::vector<std::size_t> ids(c.size());
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
  return c.subset(ids, Split::train);
}

// 5. The CRF head memorizes a 10-sentence corpus.
Outcome overfit() {
  const Corpus corpus = all_train(generate_synthetic_corpus(10, 5));
  Checkpoint init;
  init.model = make_model(build_vocab(corpus, 1), EncoderConfig{}, HeadKind::crf, HeadConfig{},
                          corpus.scheme, corpus.relation_labels, 1);
  TrainConfig cfg;
  cfg.steps = 1000;
  cfg.seed = 2;
  const Checkpoint out = train(corpus, init, cfg);
  const auto f1 = evaluate(out.model, corpus, Split::train).entities.micro.f1();
  return {f1 == 1.0, fmt::format("10 sentences, 1000 steps, training-set entity F1 {:.4f} (need 1.0)", f1)};
}

struct TableRun {
  double pretrained_f1 = 0.0;
  double random_f1 = 0.0;
};

Corpus bundled_corpus() { return generate_synthetic_corpus(1000, 0); }

Vocab bundled_vocab(const Corpus& corpus) {
  return build_vocab(corpus.subset(corpus.indices(Split::train), Split::train), 2);
}

Checkpoint pretrained_encoder(const Corpus& corpus, const Vocab& vocab, std::uint64_t seed) {
  Checkpoint init;
  init.model = make_model(vocab, EncoderConfig{}, HeadKind::none, HeadConfig{}, corpus.scheme,
                          corpus.relation_labels, seed);
  PretrainConfig pc;
  pc.steps = 1000;
  pc.seed = seed;
  return pretrain(corpus, init, pc);
}

// 6. Fine-tuning from the MLM-pretrained encoder beats random init.
Outcome pretraining_helps() {
  const Corpus corpus = bundled_corpus();
  const Vocab vocab = bundled_vocab(corpus);
  std::vector<std::future<TableRun>> runs;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    runs.push_back(std::async(std::launch::async, [&, seed] {
      Checkpoint random_init;
      random_init.model = make_model(vocab, EncoderConfig{}, HeadKind::none, HeadConfig{},
                                     corpus.scheme, corpus.relation_labels, seed);
      const Checkpoint pretrained = pretrained_encoder(corpus, vocab, seed);
      TrainConfig tc;
      tc.steps = 300;
      tc.seed = seed;
      TableRun r;
      r.pretrained_f1 = evaluate(train(corpus, pretrained, tc).model, corpus, Split::test).entities.micro.f1();
      r.random_f1 = evaluate(train(corpus, random_init, tc).model, corpus, Split::test).entities.micro.f1();
      return r;
    }));
  }
  int wins = 0;
  std::vector<std::string> parts;
  for (std::size_t s = 0; s < runs.size(); ++s) {
    const TableRun r = runs[s].get();
    wins += r.pretrained_f1 >= r.random_f1;
    parts.push_back(fmt::format("seed {} {:.3f} vs {:.3f}", s, r.pretrained_f1, r.random_f1));
  }
  return {wins >= 4, fmt::format("pretrained >= random-init test F1 in {}/5 seeds (need 4): {}", wins,
                                 fmt::join(parts, "; "))};
}

// 7. Few-shot curve medians rise with k.
Outcome curve_shape() {
  const Corpus corpus = bundled_corpus();
  const Vocab vocab = bundled_vocab(corpus);
  const Checkpoint pretrained = pretrained_encoder(corpus, vocab, 0);
  CurveConfig cc;
  cc.k_values = {1, 10, 50};
  cc.seeds = 5;
  cc.base.steps = 300;
  const CurveTable table = run_curve(corpus, pretrained, cc);
  std::map<std::size_t, double> med;
  for (const auto& s : table.summary) med[s.k] = s.median_f1;
  return {med[50] >= med[10] && med[10] >= med[1],
          fmt::format("median F1 k=1 {:.3f}, k=10 {:.3f}, k=50 {:.3f} (need non-decreasing)", med[1],
                      med[10], med[50])};
}

std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    std::ifstream in(entry.path(), std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    out[fs::relative(entry.path(), root).string()] = buf.str();
  }
  return out;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(MEDEX_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  return std::system(cmd.c_str());
}

// 8. Every subcommand reproduces its outputs byte for byte.
Outcome cli_determinism() {
  const fs::path root = fs::temp_directory_path() / "medex_acceptance_cli";
  const std::string r = root.string();
  const std::string corpus = r + "/gen/corpus";
  const std::string common = "--set encoder.d_model=16 --set encoder.d_ff=32 --set encoder.layers=1";
  const std::vector<std::pair<std::string, std::string>> steps{
      {"gen-corpus", "gen-corpus --size 150 --seed 3 --out " + r + "/gen"},
      {"pretrain", "pretrain --corpus " + corpus + " --steps 20 " + common + " --out " + r + "/pre"},
      {"train", "train --corpus " + corpus + " --init " + r + "/pre/pretrained.ckpt.json --steps 20 --out " +
                    r + "/train"},
      {"eval", "eval --corpus " + corpus + " --checkpoint " + r + "/train/model.ckpt.json --split test --out " +
                   r + "/eval"},
      {"fewshot-curve", "fewshot-curve --corpus " + corpus + " --init " + r +
                            "/pre/pretrained.ckpt.json --steps 5 --set curve.k_values=1,2 "
                            "--set curve.seeds=2 --out " + r + "/curve"},
      {"compare-heads", "compare-heads --corpus " + corpus + " --init " + r +
                            "/pre/pretrained.ckpt.json --steps 10 --out " + r + "/compare"},
      {"predict", "predict --checkpoint " + r + "/train/model.ckpt.json --input " + r +
                      "/text.txt --output " + r + "/predict/out.jsonl"},
  };
  auto run_all = [&](std::vector<std::string>& errors) {
    fs::remove_all(root);
    fs::create_directories(root / "predict");
    std::ofstream(root / "text.txt") << "lung cancer was treated with aspirin .\n"
                                        "the patient has chronic influenza\n";
    for (const auto& [name, args] : steps) {
      if (const int code = run_cli(args); code != 0) errors.push_back(fmt::format("{} exit {}", name, code));
    }
    return snapshot(root);
  };
  std::vector<std::string> errors;
  const auto first = run_all(errors);
  const auto second = run_all(errors);
  std::vector<std::string> differing;
  for (const auto& [path, bytes] : first) {
    auto it = second.find(path);
    if (it == second.end() || it->second != bytes) differing.push_back(path);
  }
  if (first.size() != second.size()) differing.push_back("(file sets differ)");
  const bool ok = errors.empty() && differing.empty() && first.size() >= 7;
  return {ok, fmt::format("{} subcommands, {} output files compared, {} differ{}{}", steps.size(),
                          first.size(), differing.size(),
                          differing.empty() ? "" : " (" + fmt::format("{}", fmt::join(differing, ", ")) + ")",
                          errors.empty() ? "" : "; failures: " + fmt::format("{}", fmt::join(errors, ", ")))};
}

// 9. Brute-force sequence probabilities sum to one.
Outcome normalization() {
  double worst = 0.0;
  for (const auto& c : oracle_cases()) {
    const std::size_t n = c.e.rows(), k = c.t.rows();
    const double log_z = brute_force_oracle(c.e, c.t, c.start, c.stop).log_partition;
    std::vector<TagIndex> y(n, 0);
    long double total = 0;
    while (true) {
      total += std::exp(static_cast<long double>(sequence_score(c.e, c.t, c.start, c.stop, y).item() - log_z));
      std::size_t i = 0;
      while (i < n && ++y[i] == k) y[i++] = 0;
      if (i == n) break;
    }
    worst = std::max(worst, std::abs(static_cast<double>(total) - 1.0));
  }
  return {worst <= 1e-10, fmt::format("max |sum p - 1| {:.2e} over all oracle instances (tol 1e-10)", worst)};
}

}  // namespace

int main() {
  report(1, "CRF oracle equivalence", crf_oracle);
  report(2, "gradient suite", gradient_suite);
  report(3, "published F1 arithmetic", published_arithmetic);
  report(4, "BIO algebra", bio_algebra);
  report(5, "overfit contract", overfit);
  report(6, "pretrained encoder beats random init", pretraining_helps);
  report(7, "few-shot curve shape", curve_shape);
  report(8, "CLI determinism", cli_determinism);
  report(9, "normalization identity", normalization);
  fmt::print("{} of 9 criteria passed\n", 9 - failures);
  return failures == 0 ? 0 : 1;
}
