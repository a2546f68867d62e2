#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "medex/corpus.hpp"
#include "medex/crf.hpp"
#include "medex/encoder.hpp"
#include "medex/eval.hpp"
#include "medex/relation_head.hpp"
#include "medex/seq2seq_head.hpp"
#include "medex/span_head.hpp"

namespace medex {

enum class HeadKind { none, crf, span, seq2seq };

std::string_view head_name(HeadKind head);
std::optional<HeadKind> parse_head(std::string_view name);

struct HeadConfig {
  std::size_t span_max_width = 8;
  std::size_t span_width_dim = 8;
  double span_neg_ratio = 3.0;
  std::size_t tag_dim = 8;

  void validate() const;
  bool operator==(const HeadConfig&) const = default;
};

// Encoder plus at most one NER head and the relation head. `none` is an
// encoder-only (pretraining) model.
struct Model {
  EncoderConfig encoder_config;
  EncoderParams encoder;
  Vocab vocab;
  TagScheme scheme = TagScheme::disease_default();
  std::vector<std::string> relation_labels = default_relation_labels();
  HeadKind head = HeadKind::none;
  HeadConfig head_config;
  CrfParams crf;
  SpanHeadParams span;
  Seq2SeqParams seq2seq;
  RelationHeadParams relation;

  // Encoder, then the active head, then the relation head.
  NamedTensors named() const;
  std::vector<Tensor> parameters() const;
};

// vocab_size is taken from `vocab`.
Model make_model(const Vocab& vocab, EncoderConfig encoder_config, HeadKind head,
                 const HeadConfig& head_config, const TagScheme& scheme,
                 std::vector<std::string> relation_labels, std::uint64_t seed);

// Copies the encoder of `base` and attaches freshly initialized heads.
Model with_head(const Model& base, HeadKind head, const HeadConfig& head_config,
                std::uint64_t seed);

// Independent copy: no parameter storage is shared with `model`.
Model clone_model(const Model& model);

struct Prediction {
  std::vector<TagIndex> tags;
  std::vector<EntitySpan> spans;
  std::vector<RelationInstance> relations;  // indices into spans
};

// `sentence` must already be tokenized with model.vocab. Tag-based heads
// are converted to spans in repair mode.
Prediction predict(const Model& model, const Sentence& sentence);

struct Evaluation {
  EvalReport entities;
  EvalReport relations;       // pipeline: predicted spans feed the relation head
  EvalReport relations_gold;  // relation head applied to the gold spans
};

// Sentences are re-tokenized with model.vocab before prediction.
Evaluation evaluate(const Model& model, const Corpus& corpus, Split split);
Evaluation evaluate(const Model& model, const Corpus& corpus, std::span<const std::size_t> ids);

// ---- checkpoints ----

struct OptimizerState {
  std::size_t step = 0;
  std::map<std::string, std::vector<double>> first_moment;
  std::map<std::string, std::vector<double>> second_moment;
  bool operator==(const OptimizerState&) const = default;
};

struct Checkpoint {
  static constexpr int kVersion = 1;
  Model model;
  std::optional<OptimizerState> optimizer;
  std::size_t step = 0;
  std::vector<std::uint64_t> seed_lineage;
};

std::string serialize_checkpoint(const Checkpoint& checkpoint);
// Throws CheckpointError naming the failing key.
Checkpoint parse_checkpoint(std::string_view text);
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace medex
