#include "medex/training.hpp"

#include <fmt/format.h>

#include <cmath>

#include "medex/errors.hpp"

namespace medex {

// ---- optimizer ----

Adam::Adam(NamedTensors params, AdamConfig config, std::optional<OptimizerState> state)
    : params_(std::move(params)), config_(config) {
  if (state) state_ = std::move(*state);
  for (const auto& [name, t] : params_) {
    auto& m = state_.first_moment[name];
    auto& v = state_.second_moment[name];
    if (m.size() != t.numel() || v.size() != t.numel()) {
      m.assign(t.numel(), 0.0);
      v.assign(t.numel(), 0.0);
    }
  }
}

void Adam::step() {
  const auto& c = config_;
  ++state_.step;
  const double t = static_cast<double>(state_.step);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);
  for (auto& [name, param] : params_) {
    auto& m = state_.first_moment[name];
    auto& v = state_.second_moment[name];
    auto g = param.grad();
    auto w = param.mutable_values();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      w[i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
      if (!std::isfinite(w[i])) {
        throw NumericError(fmt::format("adam: parameter {} became non-finite at update {}", name,
                                       state_.step));
      }
    }
  }
}

double clip_grad_norm(std::span<Tensor> params, double max_norm) {
  double total = 0.0;
  for (const auto& p : params) {
    if (!p.has_grad()) continue;
    for (double g : p.grad()) total += g * g;
  }
  const double norm = std::sqrt(total);
  if (norm > max_norm && norm > 0.0) {
    const double factor = max_norm / norm;
    for (auto& p : params) {
      if (!p.has_grad()) continue;
      for (double& g : p.mutable_grad()) g *= factor;
    }
  }
  return norm;
}

Tensor joint_loss(const Tensor& ner_loss, const Tensor& re_loss, double lambda_re) {
  if (!std::isfinite(ner_loss.item()) || !std::isfinite(re_loss.item())) {
    throw NumericError("joint_loss: non-finite input");
  }
  if (lambda_re == 0.0) return ner_loss;
  return add(ner_loss, scale(re_loss, lambda_re));
}

// ---- configuration ----

std::string_view augment_name(AugmentKind kind) {
  switch (kind) {
    case AugmentKind::none: return "none";
    case AugmentKind::synonym: return "synonym";
    case AugmentKind::entity_mask: return "entity_mask";
  }
  return "none";
}

std::optional<AugmentKind> parse_augment(std::string_view name) {
  for (auto k : {AugmentKind::none, AugmentKind::synonym, AugmentKind::entity_mask}) {
    if (augment_name(k) == name) return k;
  }
  return std::nullopt;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ValidationError("train.learning_rate must be > 0");
  if (batch_size == 0) throw ValidationError("train.batch_size must be positive");
  if (!(lambda_re >= 0.0)) throw ValidationError("train.lambda_re must be >= 0");
  if (!(clip_norm > 0.0)) throw ValidationError("train.clip_norm must be > 0");
  if (head == HeadKind::none) throw ValidationError("train.head must be crf, span or seq2seq");
  if (!(augment_prob >= 0.0 && augment_prob <= 1.0)) {
    throw ValidationError("train.augment_prob must lie in [0, 1]");
  }
}

void PretrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ValidationError("pretrain.learning_rate must be > 0");
  if (batch_size == 0) throw ValidationError("pretrain.batch_size must be positive");
  if (!(mask_prob > 0.0 && mask_prob <= 1.0)) {
    throw ValidationError("pretrain.mask_prob must lie in (0, 1]");
  }
  if (!(clip_norm > 0.0)) throw ValidationError("pretrain.clip_norm must be > 0");
}

std::string format_loss_log(std::span<const LossRow> rows) {
  std::string out = "step,loss,ner_loss,re_loss\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{},{},{}\n", r.step, r.loss, r.ner_loss, r.re_loss);
  }
  return out;
}

// ---- fine-tuning ----

Tensor ner_loss(const Model& model, const Tensor& h, const Sentence& sentence,
                std::uint64_t seed) {
  switch (model.head) {
    case HeadKind::crf:
      return crf_nll(emissions(h, model.crf), model.crf, sentence.tags);
    case HeadKind::span:
      return span_loss(score_all_spans(h, model.span), sentence.spans,
                       model.head_config.span_neg_ratio, seed);
    case HeadKind::seq2seq:
      return teacher_forced_loss(h, sentence.tags, model.seq2seq);
    case HeadKind::none:
      break;
  }
  throw ContractError("ner_loss: model has no NER head");
}

namespace {

// Draws training sentences either from per-epoch shuffles or class-balanced.
class Sampler {
 public:
  Sampler(const std::vector<Sentence>& sentences, std::size_t num_classes, bool balanced,
          std::uint64_t seed)
      : rng_(seed), order_(sentences.size()) {
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
    if (balanced) {
      buckets_.resize(num_classes);
      for (std::size_t i = 0; i < sentences.size(); ++i) {
        std::vector<bool> seen(num_classes, false);
        for (const auto& s : sentences[i].spans) {
          if (!seen[s.cls]) buckets_[s.cls].push_back(i);
          seen[s.cls] = true;
        }
      }
      std::erase_if(buckets_, [](const auto& b) { return b.empty(); });
    }
    cursor_ = order_.size();
  }

  std::size_t next() {
    if (!buckets_.empty()) {
      const auto& bucket = buckets_[rng_.index(buckets_.size())];
      return bucket[rng_.index(bucket.size())];
    }
    if (cursor_ == order_.size()) {
      rng_.shuffle(std::span<std::size_t>(order_));
      cursor_ = 0;
    }
    return order_[cursor_++];
  }

 private:
  Rng rng_;
  std::vector<std::size_t> order_;
  std::vector<std::vector<std::size_t>> buckets_;
  std::size_t cursor_ = 0;
};

std::vector<Tensor> with_prefix(const NamedTensors& named, std::string_view prefix,
                                NamedTensors* selected = nullptr) {
  std::vector<Tensor> out;
  for (const auto& [name, t] : named) {
    if (name.starts_with(prefix)) {
      out.push_back(t);
      if (selected) selected->emplace_back(name, t);
    }
  }
  return out;
}

Tensor mean_of(const std::vector<Tensor>& terms) {
  Tensor total = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) total = add(total, terms[i]);
  return scale(total, 1.0 / static_cast<double>(terms.size()));
}

}  // namespace

Checkpoint train(const Corpus& corpus, const Checkpoint& init, const TrainConfig& config,
                 std::vector<LossRow>* log) {
  config.validate();
  Model model = init.model.head == HeadKind::none
                    ? with_head(init.model, config.head, init.model.head_config,
                                derive_seed(config.seed, 7))
                    : clone_model(init.model);
  if (model.head != config.head) {
    throw ValidationError(fmt::format("train: checkpoint head {} does not match train.head {}",
                                      head_name(model.head), head_name(config.head)));
  }
  if (!(model.scheme == corpus.scheme) || model.relation_labels != corpus.relation_labels) {
    throw ValidationError("train: corpus classes or relation labels differ from the model's");
  }

  std::vector<Sentence> sentences;
  for (std::size_t id : corpus.indices(Split::train)) {
    Sentence s = corpus.sentences[id];
    if (s.size() == 0) continue;
    tokenize(s, model.vocab);
    if (flatten_subwords(s).size() > model.encoder_config.max_len) {
      throw ValidationError(fmt::format("train: sentence {} exceeds encoder.max_len subwords", id));
    }
    sentences.push_back(std::move(s));
  }

  Checkpoint out;
  out.step = init.step;
  out.seed_lineage = init.seed_lineage;
  out.seed_lineage.push_back(config.seed);
  if (config.steps > 0 && sentences.empty()) {
    throw ValidationError("train: corpus has no non-empty training sentences");
  }

  const auto named = model.named();
  std::vector<Tensor> params = model.parameters();
  const bool resume = init.optimizer && init.model.head == config.head;
  Adam adam(named, {.learning_rate = config.learning_rate},
            resume ? init.optimizer : std::nullopt);

  Sampler sampler(sentences, model.scheme.num_classes(), config.class_balanced,
                  derive_seed(config.seed, 100));
  Rng augment_rng(derive_seed(config.seed, 103));
  const SynonymLexicon lexicon = synthetic_lexicon();
  const std::uint64_t dropout_base = derive_seed(config.seed, 101);
  const std::uint64_t negative_base = derive_seed(config.seed, 102);

  for (std::size_t step = 0; step < config.steps; ++step) {
    LossRow row{.step = out.step + step};
    try {
      zero_grad(params);
      std::vector<Tensor> ner_terms, re_terms;
      for (std::size_t b = 0; b < config.batch_size; ++b) {
        const std::uint64_t stream = step * config.batch_size + b;
        const Sentence* s = &sentences[sampler.next()];
        Sentence augmented;
        if (config.augment != AugmentKind::none && augment_rng.uniform() < config.augment_prob) {
          const auto mode = config.augment == AugmentKind::synonym ? AugmentMode::synonym
                                                                   : AugmentMode::entity_mask;
          augmented = medex::augment(*s, mode, lexicon, augment_rng.next(), model.scheme);
          if (mode == AugmentMode::synonym) tokenize(augmented, model.vocab);
          if (flatten_subwords(augmented).size() <= model.encoder_config.max_len) s = &augmented;
        }
        Tensor h = encode_tokens(*s, model.encoder, model.encoder_config, true,
                                 derive_seed(dropout_base, stream));
        ner_terms.push_back(ner_loss(model, h, *s, derive_seed(negative_base, stream)));
        if (config.lambda_re > 0.0 && s->spans.size() >= 2) {
          const auto pairs = gold_relation_pairs(h, *s);
          re_terms.push_back(relation_loss(pairs, model.relation));
        }
      }
      const Tensor ner = mean_of(ner_terms);
      const Tensor re = re_terms.empty() ? Tensor::scalar(0.0) : mean_of(re_terms);
      const Tensor loss = joint_loss(ner, re, config.lambda_re);
      row.loss = loss.item();
      row.ner_loss = ner.item();
      row.re_loss = re.item();
      backward(loss);
      clip_grad_norm(params, config.clip_norm);
      adam.step();
    } catch (const NumericError& e) {
      throw NumericError(fmt::format("non-finite loss at step {}: {}", row.step, e.what()));
    }
    if (log) log->push_back(row);
  }
  out.step += config.steps;
  out.model = std::move(model);
  out.optimizer = adam.state();
  return out;
}

// ---- pretraining ----

Checkpoint pretrain(const Corpus& corpus, const Checkpoint& init, const PretrainConfig& config,
                    std::vector<LossRow>* log) {
  config.validate();
  Model model = clone_model(init.model);
  std::vector<std::vector<TokenId>> texts;
  for (std::size_t id : corpus.indices(Split::train)) {
    Sentence s = corpus.sentences[id];
    tokenize(s, model.vocab);
    auto ids = flatten_subwords(s);
    if (ids.empty()) continue;
    if (ids.size() > model.encoder_config.max_len) ids.resize(model.encoder_config.max_len);
    texts.push_back(std::move(ids));
  }
  Checkpoint out;
  out.step = init.step;
  out.seed_lineage = init.seed_lineage;
  out.seed_lineage.push_back(config.seed);
  if (config.steps > 0 && texts.empty()) {
    throw ValidationError("pretrain: corpus has no non-empty training sentences");
  }

  NamedTensors encoder_named;
  std::vector<Tensor> params = with_prefix(model.named(), "encoder.", &encoder_named);
  const bool resume = init.optimizer && init.model.head == HeadKind::none;
  Adam adam(encoder_named, {.learning_rate = config.learning_rate},
            resume ? init.optimizer : std::nullopt);
  Rng rng(derive_seed(config.seed, 200));

  for (std::size_t step = 0; step < config.steps; ++step) {
    LossRow row{.step = out.step + step};
    std::vector<std::vector<TokenId>> batch;
    for (std::size_t b = 0; b < config.batch_size; ++b) batch.push_back(texts[rng.index(texts.size())]);
    try {
      zero_grad(params);
      const Tensor loss = mlm_step(batch, model.encoder, model.encoder_config, config.mask_prob,
                                   derive_seed(config.seed, 300 + step));
      row.loss = loss.item();
      row.ner_loss = 0.0;
      row.re_loss = 0.0;
      backward(loss);
      clip_grad_norm(params, config.clip_norm);
      adam.step();
    } catch (const NumericError& e) {
      throw NumericError(fmt::format("non-finite loss at step {}: {}", row.step, e.what()));
    }
    if (log) log->push_back(row);
  }
  out.step += config.steps;
  out.model = std::move(model);
  if (init.model.head == HeadKind::none) out.optimizer = adam.state();
  return out;
}

}  // namespace medex
