#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "medex/corpus.hpp"
#include "medex/model.hpp"

namespace medex {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adam with bias correction. Moments are keyed by parameter name.
class Adam {
 public:
  Adam(NamedTensors params, AdamConfig config, std::optional<OptimizerState> state = {});

  void step();
  const OptimizerState& state() const { return state_; }

 private:
  NamedTensors params_;
  AdamConfig config_;
  OptimizerState state_;
};

// Rescales all gradients so their joint L2 norm is at most max_norm.
// Returns the norm before clipping.
double clip_grad_norm(std::span<Tensor> params, double max_norm);

// ner + λ·re. When λ is 0 the relation term is left out of the graph.
Tensor joint_loss(const Tensor& ner_loss, const Tensor& re_loss, double lambda_re);

enum class AugmentKind { none, synonym, entity_mask };

std::string_view augment_name(AugmentKind kind);
std::optional<AugmentKind> parse_augment(std::string_view name);

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t steps = 300;
  std::size_t batch_size = 8;
  double lambda_re = 1.0;
  std::uint64_t seed = 0;
  HeadKind head = HeadKind::crf;
  bool class_balanced = true;
  double clip_norm = 1.0;
  // Each sampled sentence is replaced by an augmented copy with probability
  // augment_prob.
  AugmentKind augment = AugmentKind::none;
  double augment_prob = 0.5;

  void validate() const;
};

struct LossRow {
  std::size_t step = 0;
  double loss = 0.0;
  double ner_loss = 0.0;
  double re_loss = 0.0;
};

std::string format_loss_log(std::span<const LossRow> rows);

// Fine-tunes `init` (whose head must match config.head) on the training split.
// Sentences are re-tokenized with the model vocabulary. The input model is
// not modified.
Checkpoint train(const Corpus& corpus, const Checkpoint& init, const TrainConfig& config,
                 std::vector<LossRow>* log = nullptr);

// Per-sentence NER loss of the active head on already encoded representations.
Tensor ner_loss(const Model& model, const Tensor& h, const Sentence& sentence,
                std::uint64_t seed);

struct PretrainConfig {
  double learning_rate = 1e-3;
  std::size_t steps = 300;
  std::size_t batch_size = 16;
  double mask_prob = 0.15;
  std::uint64_t seed = 0;
  double clip_norm = 1.0;

  void validate() const;
};

// MLM pretraining of the encoder on the training split text.
Checkpoint pretrain(const Corpus& corpus, const Checkpoint& init, const PretrainConfig& config,
                    std::vector<LossRow>* log = nullptr);

}  // namespace medex
