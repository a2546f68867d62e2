// Experiment driver: corpus generation, pretraining, fine-tuning, evaluation
// and few-shot curves. Every output is a pure function of the resolved config.

#include <fmt/format.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "CLI11.hpp"
#include "medex/config.hpp"
#include "medex/errors.hpp"
#include "medex/fewshot.hpp"
#include "medex/model.hpp"
#include "medex/training.hpp"

namespace fs = std::filesystem;
using namespace medex;

namespace {

struct Options {
  std::string config_file;
  std::vector<std::string> overrides;  // key=value
  std::string corpus;
  std::string out;
  std::string head;
  std::string init;
  std::string checkpoint;
  std::string split = "test";
  std::string input = "-";
  std::string output;
  long long size = -1;
  long long seed = -1;
  long long steps = -1;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// File first, then the named flags, then --set overrides.
ExperimentConfig resolve(const Options& o, const std::string& command) {
  ExperimentConfig cfg;
  if (!o.config_file.empty()) {
    if (!fs::exists(o.config_file)) throw IoError("missing config file " + o.config_file);
    cfg = load_config(o.config_file);
  }
  if (!o.corpus.empty()) cfg.set("corpus.path", o.corpus);
  if (!o.out.empty()) cfg.set("output.dir", o.out);
  if (!o.head.empty()) cfg.set("head", o.head);
  if (o.size >= 0) cfg.set("corpus.size", std::to_string(o.size));
  if (o.seed >= 0) {
    const std::string s = std::to_string(o.seed);
    if (command == "gen-corpus") cfg.set("corpus.seed", s);
    else if (command == "pretrain") cfg.set("pretrain.seed", s);
    else cfg.set("train.seed", s);
  }
  if (o.steps >= 0) {
    cfg.set(command == "pretrain" ? "pretrain.steps" : "train.steps", std::to_string(o.steps));
  }
  for (const auto& kv : o.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ValidationError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

fs::path prepare_output(const ExperimentConfig& cfg) {
  fs::create_directories(cfg.output_dir);
  write_text(cfg.output_dir / "resolved_config.txt", cfg.resolved());
  return cfg.output_dir;
}

Corpus load_corpus(const ExperimentConfig& cfg) {
  if (cfg.corpus_path) {
    if (!fs::is_directory(*cfg.corpus_path)) {
      throw IoError("corpus.path: no such directory " + cfg.corpus_path->string());
    }
    return load_corpus_dir(*cfg.corpus_path, TagScheme::disease_default());
  }
  return generate_synthetic_corpus(cfg.corpus_size, cfg.corpus_seed);
}

Checkpoint fresh_model(const Corpus& corpus, const ExperimentConfig& cfg, HeadKind head) {
  const auto train_ids = corpus.indices(Split::train);
  const Vocab vocab = build_vocab(corpus.subset(train_ids, Split::train), cfg.vocab_min_freq);
  Checkpoint ckpt;
  ckpt.model = make_model(vocab, cfg.encoder, head, cfg.head, corpus.scheme,
                          corpus.relation_labels, cfg.model_seed);
  ckpt.seed_lineage = {cfg.model_seed};
  return ckpt;
}

Checkpoint load_init(const Options& o, const Corpus& corpus, const ExperimentConfig& cfg) {
  if (o.init.empty()) return fresh_model(corpus, cfg, HeadKind::none);
  if (!fs::exists(o.init)) throw IoError("missing checkpoint " + o.init);
  return load_checkpoint(o.init);
}

// Pretrained encoder from --init, or pretrained here when none is given.
Checkpoint pretrained_encoder(const Options& o, const Corpus& corpus, const ExperimentConfig& cfg,
                              const fs::path& out) {
  if (!o.init.empty()) return load_init(o, corpus, cfg);
  std::vector<LossRow> log;
  Checkpoint ckpt = pretrain(corpus, fresh_model(corpus, cfg, HeadKind::none), cfg.pretrain, &log);
  save_checkpoint(ckpt, out / "pretrained.ckpt.json");
  write_text(out / "pretrain_loss.csv", format_loss_log(log));
  return ckpt;
}

std::string report_text(const Evaluation& ev) {
  nlohmann::ordered_json j;
  j["entities"] = report_json(ev.entities);
  j["relations"] = report_json(ev.relations);
  j["relations_gold_spans"] = report_json(ev.relations_gold);
  return j.dump(2) + "\n";
}

int cmd_gen_corpus(const Options& o) {
  const auto cfg = resolve(o, "gen-corpus");
  const auto out = prepare_output(cfg);
  const Corpus corpus = generate_synthetic_corpus(cfg.corpus_size, cfg.corpus_seed);
  save_corpus_dir(corpus, out / "corpus");
  write_text(out / "lexicon.json", format_lexicon(synthetic_lexicon()));
  return 0;
}

int cmd_pretrain(const Options& o) {
  const auto cfg = resolve(o, "pretrain");
  const auto out = prepare_output(cfg);
  const Corpus corpus = load_corpus(cfg);
  std::vector<LossRow> log;
  const Checkpoint ckpt = pretrain(corpus, load_init(o, corpus, cfg), cfg.pretrain, &log);
  save_checkpoint(ckpt, out / "pretrained.ckpt.json");
  write_text(out / "pretrain_loss.csv", format_loss_log(log));
  return 0;
}

int cmd_train(const Options& o) {
  const auto cfg = resolve(o, "train");
  const auto out = prepare_output(cfg);
  const Corpus corpus = load_corpus(cfg);
  Checkpoint init = load_init(o, corpus, cfg);
  if (init.model.head == HeadKind::none) {
    init.model = with_head(init.model, cfg.train.head, cfg.head, cfg.model_seed);
  }
  std::vector<LossRow> log;
  const Checkpoint ckpt = train(corpus, init, cfg.train, &log);
  save_checkpoint(ckpt, out / "model.ckpt.json");
  write_text(out / "train_loss.csv", format_loss_log(log));
  write_text(out / "eval_validation.json",
             report_text(evaluate(ckpt.model, corpus, Split::validation)));
  return 0;
}

int cmd_eval(const Options& o) {
  const auto cfg = resolve(o, "eval");
  if (o.checkpoint.empty()) throw ValidationError("eval: --checkpoint is required");
  if (!fs::exists(o.checkpoint)) throw IoError("missing checkpoint " + o.checkpoint);
  const auto split = parse_split(o.split);
  if (!split) throw ValidationError("--split must be train, validation or test");
  const auto out = prepare_output(cfg);
  const Corpus corpus = load_corpus(cfg);
  const Checkpoint ckpt = load_checkpoint(o.checkpoint);
  const Evaluation ev = evaluate(ckpt.model, corpus, *split);
  const std::string name = std::string(split_name(*split));
  write_text(out / ("eval_" + name + ".json"), report_text(ev));
  const std::pair<std::string, EvalReport> row{std::string(head_name(ckpt.model.head)),
                                               ev.entities};
  write_text(out / ("eval_" + name + ".md"), markdown_table({&row, 1}));
  return 0;
}

int cmd_fewshot(const Options& o) {
  const auto cfg = resolve(o, "fewshot-curve");
  const auto out = prepare_output(cfg);
  const Corpus corpus = load_corpus(cfg);
  Checkpoint base = pretrained_encoder(o, corpus, cfg, out);
  if (base.model.head == HeadKind::none) {
    base.model = with_head(base.model, cfg.train.head, cfg.head, cfg.model_seed);
  }
  CurveConfig curve = cfg.curve;
  curve.base = cfg.train;
  const CurveTable table = run_curve(corpus, base, curve);
  write_text(out / "curve.csv", format_curve_rows(table));
  write_text(out / "curve_summary.csv", format_curve_summary(table));
  return 0;
}

int cmd_compare_heads(const Options& o) {
  const auto cfg = resolve(o, "compare-heads");
  const auto out = prepare_output(cfg);
  const Corpus corpus = load_corpus(cfg);
  const Checkpoint base = pretrained_encoder(o, corpus, cfg, out);
  std::vector<std::pair<std::string, EvalReport>> rows;
  nlohmann::ordered_json all;
  const std::pair<HeadKind, const char*> heads[] = {
      {HeadKind::crf, "Encoder + CRF"},
      {HeadKind::span, "Encoder + Span"},
      {HeadKind::seq2seq, "Encoder + Seq2Seq"}};
  for (const auto& [head, label] : heads) {
    Checkpoint init = base;
    init.model = with_head(base.model, head, cfg.head, cfg.model_seed);
    TrainConfig tc = cfg.train;
    tc.head = head;
    std::vector<LossRow> log;
    const Checkpoint tuned = train(corpus, init, tc, &log);
    const std::string name(head_name(head));
    write_text(out / ("train_loss_" + name + ".csv"), format_loss_log(log));
    const Evaluation ev = evaluate(tuned.model, corpus, Split::test);
    rows.emplace_back(label, ev.entities);
    all[name] = nlohmann::ordered_json::parse(report_text(ev));
  }
  write_text(out / "compare_heads.md", markdown_table(rows));
  write_text(out / "compare_heads.json", all.dump(2) + "\n");
  return 0;
}

int cmd_predict(const Options& o) {
  if (o.checkpoint.empty()) throw ValidationError("predict: --checkpoint is required");
  if (!fs::exists(o.checkpoint)) throw IoError("missing checkpoint " + o.checkpoint);
  std::string text;
  if (o.input == "-") {
    std::ostringstream buf;
    buf << std::cin.rdbuf();
    text = buf.str();
  } else {
    if (!fs::exists(o.input)) throw IoError("missing input " + o.input);
    text = read_text(o.input);
  }
  const Checkpoint ckpt = load_checkpoint(o.checkpoint);
  const Model& model = ckpt.model;
  std::string lines;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    Sentence s;
    for (auto& w : split_whitespace(line)) s.tokens.push_back({std::move(w), {}});
    tokenize(s, model.vocab);
    const Prediction p = predict(model, s);
    nlohmann::ordered_json j;
    j["tokens"] = nlohmann::ordered_json::array();
    for (const auto& t : s.tokens) j["tokens"].push_back(t.surface);
    j["spans"] = nlohmann::ordered_json::array();
    for (const auto& sp : p.spans) {
      std::string surface;
      for (std::size_t i = sp.start; i <= sp.end; ++i) {
        if (i > sp.start) surface += ' ';
        surface += s.tokens[i].surface;
      }
      j["spans"].push_back({{"start", sp.start},
                            {"end", sp.end},
                            {"cls", model.scheme.classes()[sp.cls]},
                            {"text", surface}});
    }
    j["relations"] = nlohmann::ordered_json::array();
    for (const auto& r : p.relations) {
      j["relations"].push_back(
          {{"head", r.head}, {"tail", r.tail}, {"label", model.relation_labels[r.label]}});
    }
    lines += j.dump() + "\n";
  }
  if (o.output.empty()) {
    std::cout << lines;
  } else {
    write_text(o.output, lines);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"medex: medical entity and relation extraction experiments"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config_file, "Flat key = value experiment config");
    sub->add_option("--set", o.overrides, "Override one config key (key=value), repeatable");
    sub->add_option("--out", o.out, "Output directory (output.dir)");
  };
  auto corpus_opts = [&](CLI::App* sub) {
    sub->add_option("--corpus", o.corpus, "Corpus directory written by gen-corpus (corpus.path)");
    sub->add_option("--size", o.size, "Synthetic corpus size (corpus.size)");
  };

  auto* gen = app.add_subcommand("gen-corpus", "Write a synthetic corpus");
  common(gen);
  gen->add_option("--size", o.size, "Number of sentences (corpus.size)");
  gen->add_option("--seed", o.seed, "Generator seed (corpus.seed)");

  auto* pre = app.add_subcommand("pretrain", "MLM-pretrain an encoder");
  common(pre);
  corpus_opts(pre);
  pre->add_option("--init", o.init, "Continue from this checkpoint");
  pre->add_option("--seed", o.seed, "pretrain.seed");
  pre->add_option("--steps", o.steps, "pretrain.steps");

  auto* tr = app.add_subcommand("train", "Fine-tune an NER head with the relation head");
  common(tr);
  corpus_opts(tr);
  tr->add_option("--init", o.init, "Pretrained (or previously trained) checkpoint");
  tr->add_option("--head", o.head, "crf, span or seq2seq");
  tr->add_option("--seed", o.seed, "train.seed");
  tr->add_option("--steps", o.steps, "train.steps");

  auto* ev = app.add_subcommand("eval", "Score a checkpoint on a split");
  common(ev);
  corpus_opts(ev);
  ev->add_option("--checkpoint", o.checkpoint, "Checkpoint to evaluate")->required();
  ev->add_option("--split", o.split, "train, validation or test");

  auto* fs_cmd = app.add_subcommand("fewshot-curve", "k-shot learning curve");
  common(fs_cmd);
  corpus_opts(fs_cmd);
  fs_cmd->add_option("--init", o.init, "Pretrained encoder checkpoint (pretrains when absent)");
  fs_cmd->add_option("--head", o.head, "crf, span or seq2seq");
  fs_cmd->add_option("--seed", o.seed, "train.seed (first run seed)");
  fs_cmd->add_option("--steps", o.steps, "train.steps");

  auto* cmp = app.add_subcommand("compare-heads", "Train all three heads from one encoder");
  common(cmp);
  corpus_opts(cmp);
  cmp->add_option("--init", o.init, "Pretrained encoder checkpoint (pretrains when absent)");
  cmp->add_option("--seed", o.seed, "train.seed");
  cmp->add_option("--steps", o.steps, "train.steps");

  auto* pred = app.add_subcommand("predict", "Tag whitespace-tokenized text, one sentence per line");
  pred->add_option("--checkpoint", o.checkpoint, "Trained checkpoint")->required();
  pred->add_option("--input", o.input, "Text file, or - for stdin");
  pred->add_option("--output", o.output, "JSON-lines output file (stdout when absent)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) return cmd_gen_corpus(o);
    if (pre->parsed()) return cmd_pretrain(o);
    if (tr->parsed()) return cmd_train(o);
    if (ev->parsed()) return cmd_eval(o);
    if (fs_cmd->parsed()) return cmd_fewshot(o);
    if (cmp->parsed()) return cmd_compare_heads(o);
    if (pred->parsed()) return cmd_predict(o);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const CheckpointError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
