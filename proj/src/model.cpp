#include "medex/model.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "medex/errors.hpp"

namespace medex {

namespace {

using json = nlohmann::ordered_json;

struct Slot {
  std::string name;
  Tensor* tensor;
};

std::vector<Slot> slots(Model& m) {
  std::vector<Slot> out;
  auto add = [&](std::string name, Tensor& t) { out.push_back({std::move(name), &t}); };
  add("encoder.token_embedding", m.encoder.token_embedding);
  add("encoder.position_embedding", m.encoder.position_embedding);
  for (std::size_t l = 0; l < m.encoder.layers.size(); ++l) {
    auto& L = m.encoder.layers[l];
    const std::string p = fmt::format("encoder.layer{}.", l);
    add(p + "wq", L.wq);
    add(p + "wk", L.wk);
    add(p + "wv", L.wv);
    add(p + "wo", L.wo);
    add(p + "ff1_w", L.ff1_w);
    add(p + "ff1_b", L.ff1_b);
    add(p + "ff2_w", L.ff2_w);
    add(p + "ff2_b", L.ff2_b);
    add(p + "ln1_gain", L.ln1_gain);
    add(p + "ln1_bias", L.ln1_bias);
    add(p + "ln2_gain", L.ln2_gain);
    add(p + "ln2_bias", L.ln2_bias);
  }
  add("encoder.mlm_projection", m.encoder.mlm_projection);
  switch (m.head) {
    case HeadKind::crf:
      add("crf.emit_weight", m.crf.emit_weight);
      add("crf.emit_bias", m.crf.emit_bias);
      add("crf.transitions", m.crf.transitions);
      add("crf.start", m.crf.start);
      add("crf.stop", m.crf.stop);
      break;
    case HeadKind::span:
      add("span.width_embedding", m.span.width_embedding);
      add("span.weight", m.span.weight);
      add("span.bias", m.span.bias);
      break;
    case HeadKind::seq2seq:
      add("seq2seq.tag_embedding", m.seq2seq.tag_embedding);
      add("seq2seq.weight", m.seq2seq.weight);
      add("seq2seq.bias", m.seq2seq.bias);
      break;
    case HeadKind::none:
      break;
  }
  add("relation.weight", m.relation.weight);
  add("relation.bias", m.relation.bias);
  return out;
}

void init_heads(Model& m, std::uint64_t seed) {
  const std::size_t d = m.encoder_config.d_model;
  const auto& hc = m.head_config;
  m.crf = {};
  m.span = {};
  m.seq2seq = {};
  switch (m.head) {
    case HeadKind::crf:
      m.crf = init_crf(d, m.scheme.num_tags(), derive_seed(seed, 1));
      break;
    case HeadKind::span:
      m.span = init_span_head(d, m.scheme.num_classes(), hc.span_max_width, hc.span_width_dim,
                              derive_seed(seed, 1));
      break;
    case HeadKind::seq2seq:
      m.seq2seq = init_seq2seq(d, m.scheme.num_tags(), hc.tag_dim, derive_seed(seed, 1));
      break;
    case HeadKind::none:
      break;
  }
  m.relation = init_relation_head(d, m.relation_labels.size(), derive_seed(seed, 2));
}

std::vector<EntitySpan> tags_for_eval(const std::vector<TagIndex>& tags, const TagScheme& scheme) {
  return tags_to_spans(tags, scheme, BioMode::repair);
}

}  // namespace

std::string_view head_name(HeadKind head) {
  switch (head) {
    case HeadKind::none: return "none";
    case HeadKind::crf: return "crf";
    case HeadKind::span: return "span";
    case HeadKind::seq2seq: return "seq2seq";
  }
  return "none";
}

std::optional<HeadKind> parse_head(std::string_view name) {
  for (auto h : {HeadKind::none, HeadKind::crf, HeadKind::span, HeadKind::seq2seq}) {
    if (head_name(h) == name) return h;
  }
  return std::nullopt;
}

void HeadConfig::validate() const {
  if (span_max_width == 0) throw ValidationError("head.span_max_width must be positive");
  if (span_width_dim == 0) throw ValidationError("head.span_width_dim must be positive");
  if (!(span_neg_ratio >= 0.0)) throw ValidationError("head.span_neg_ratio must be >= 0");
  if (tag_dim == 0) throw ValidationError("head.tag_dim must be positive");
}

NamedTensors Model::named() const {
  NamedTensors out;
  for (const auto& s : slots(const_cast<Model&>(*this))) out.emplace_back(s.name, *s.tensor);
  return out;
}

std::vector<Tensor> Model::parameters() const {
  std::vector<Tensor> out;
  for (const auto& s : slots(const_cast<Model&>(*this))) out.push_back(*s.tensor);
  return out;
}

Model make_model(const Vocab& vocab, EncoderConfig encoder_config, HeadKind head,
                 const HeadConfig& head_config, const TagScheme& scheme,
                 std::vector<std::string> relation_labels, std::uint64_t seed) {
  encoder_config.vocab_size = vocab.size();
  encoder_config.validate();
  head_config.validate();
  Model m;
  m.encoder_config = encoder_config;
  m.encoder = init_encoder(encoder_config, derive_seed(seed, 0));
  m.vocab = vocab;
  m.scheme = scheme;
  m.relation_labels = std::move(relation_labels);
  m.head = head;
  m.head_config = head_config;
  init_heads(m, seed);
  return m;
}

Model clone_model(const Model& model) {
  Model copy = model;
  for (auto& s : slots(copy)) *s.tensor = s.tensor->clone();
  return copy;
}

Model with_head(const Model& base, HeadKind head, const HeadConfig& head_config,
                std::uint64_t seed) {
  head_config.validate();
  Model m = clone_model(base);
  m.head = head;
  m.head_config = head_config;
  init_heads(m, seed);
  return m;
}

namespace {

Prediction predict_encoded(const Model& model, const Tensor& h, std::size_t n) {
  Prediction out;
  switch (model.head) {
    case HeadKind::crf:
      out.tags = viterbi(emissions(h, model.crf), model.crf).tags;
      out.spans = tags_for_eval(out.tags, model.scheme);
      break;
    case HeadKind::seq2seq:
      out.tags = greedy_decode(h, model.seq2seq);
      out.spans = tags_for_eval(out.tags, model.scheme);
      break;
    case HeadKind::span:
      out.spans = decode_spans(score_all_spans(h, model.span).scored());
      out.tags = spans_to_tags(out.spans, n, model.scheme);
      break;
    case HeadKind::none:
      throw ContractError("predict: model has no NER head");
  }
  out.relations = predict_relations(h, out.spans, model.relation);
  return out;
}

}  // namespace

Prediction predict(const Model& model, const Sentence& sentence) {
  NoGradGuard no_grad;
  if (model.head == HeadKind::none) throw ContractError("predict: model has no NER head");
  if (sentence.size() == 0) return {};
  const Tensor h = encode_tokens(sentence, model.encoder, model.encoder_config, false);
  return predict_encoded(model, h, sentence.size());
}

Evaluation evaluate(const Model& model, const Corpus& corpus, Split split) {
  const auto ids = corpus.indices(split);
  return evaluate(model, corpus, ids);
}

Evaluation evaluate(const Model& model, const Corpus& corpus, std::span<const std::size_t> ids) {
  std::vector<std::vector<EntitySpan>> gold_spans, pred_spans;
  std::vector<std::vector<RelationMention>> gold_rel, pred_rel, gold_span_rel;
  std::vector<std::vector<TagIndex>> decoded;
  std::size_t tokens = 0, correct = 0;
  for (std::size_t id : ids) {
    Sentence s = corpus.sentences.at(id);
    tokenize(s, model.vocab);
    NoGradGuard no_grad;
    Prediction p;
    if (s.size() > 0) {
      const Tensor h = encode_tokens(s, model.encoder, model.encoder_config, false);
      p = predict_encoded(model, h, s.size());
      gold_span_rel.push_back(
          relation_mentions(s.spans, predict_relations(h, s.spans, model.relation)));
    } else {
      gold_span_rel.emplace_back();
    }
    gold_spans.push_back(s.spans);
    gold_rel.push_back(relation_mentions(s.spans, s.relations));
    pred_rel.push_back(relation_mentions(p.spans, p.relations));
    for (std::size_t i = 0; i < s.size(); ++i) correct += p.tags[i] == s.tags[i];
    tokens += s.size();
    pred_spans.push_back(std::move(p.spans));
    decoded.push_back(std::move(p.tags));
  }
  Evaluation out;
  out.entities = entity_prf(gold_spans, pred_spans, model.scheme.classes());
  out.entities.token_accuracy =
      tokens ? static_cast<double>(correct) / static_cast<double>(tokens) : 0.0;
  if (model.head == HeadKind::seq2seq && !decoded.empty()) {
    out.entities.invalid_transition_rate = invalid_transition_rate(decoded, model.scheme);
  }
  out.relations = relation_prf(gold_rel, pred_rel, model.relation_labels);
  out.relations_gold = relation_prf(gold_rel, gold_span_rel, model.relation_labels);
  return out;
}

// ---- checkpoints ----

namespace {

json encoder_config_json(const EncoderConfig& c) {
  return json{{"vocab_size", c.vocab_size}, {"d_model", c.d_model},   {"heads", c.heads},
              {"layers", c.layers},         {"d_ff", c.d_ff},         {"max_len", c.max_len},
              {"dropout_rate", c.dropout_rate}};
}

json head_config_json(const HeadConfig& c) {
  return json{{"span_max_width", c.span_max_width},
              {"span_width_dim", c.span_width_dim},
              {"span_neg_ratio", c.span_neg_ratio},
              {"tag_dim", c.tag_dim}};
}

// Reads obj[key] as T, reporting the dotted key path on failure.
template <typename T>
T field(const json& obj, const std::string& path, const std::string& key) {
  const std::string full = path.empty() ? key : path + "." + key;
  if (!obj.is_object() || !obj.contains(key)) {
    throw CheckpointError("checkpoint: missing key " + full);
  }
  try {
    return obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw CheckpointError("checkpoint: wrong type for key " + full);
  }
}

const json& child(const json& obj, const std::string& path, const std::string& key) {
  if (!obj.is_object() || !obj.contains(key)) {
    throw CheckpointError("checkpoint: missing key " + (path.empty() ? key : path + "." + key));
  }
  return obj.at(key);
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  const Model& m = ckpt.model;
  json j;
  j["format"] = "medex-checkpoint";
  j["version"] = Checkpoint::kVersion;
  j["step"] = ckpt.step;
  j["seed_lineage"] = ckpt.seed_lineage;
  j["encoder_config"] = encoder_config_json(m.encoder_config);
  j["head"] = head_name(m.head);
  j["head_config"] = head_config_json(m.head_config);
  j["classes"] = m.scheme.classes();
  j["relation_labels"] = m.relation_labels;
  j["vocab"] = m.vocab.entries();
  json params = json::object();
  for (const auto& [name, t] : m.named()) {
    params[name] = json{{"shape", t.shape()},
                        {"values", std::vector<double>(t.values().begin(), t.values().end())}};
  }
  j["params"] = std::move(params);
  if (ckpt.optimizer) {
    const auto& o = *ckpt.optimizer;
    j["optimizer"] = json{{"step", o.step},
                          {"first_moment", o.first_moment},
                          {"second_moment", o.second_moment}};
  }
  return j.dump(1) + "\n";
}

Checkpoint parse_checkpoint(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw CheckpointError(std::string("checkpoint: corrupt or truncated file (") + e.what() + ")");
  }
  if (field<std::string>(j, "", "format") != "medex-checkpoint") {
    throw CheckpointError("checkpoint: key format is not medex-checkpoint");
  }
  const int version = field<int>(j, "", "version");
  if (version != Checkpoint::kVersion) {
    throw CheckpointError(fmt::format("checkpoint: unsupported version {} (expected {})", version,
                                      Checkpoint::kVersion));
  }

  const json& ec = child(j, "", "encoder_config");
  EncoderConfig enc;
  enc.vocab_size = field<std::size_t>(ec, "encoder_config", "vocab_size");
  enc.d_model = field<std::size_t>(ec, "encoder_config", "d_model");
  enc.heads = field<std::size_t>(ec, "encoder_config", "heads");
  enc.layers = field<std::size_t>(ec, "encoder_config", "layers");
  enc.d_ff = field<std::size_t>(ec, "encoder_config", "d_ff");
  enc.max_len = field<std::size_t>(ec, "encoder_config", "max_len");
  enc.dropout_rate = field<double>(ec, "encoder_config", "dropout_rate");

  const json& hc = child(j, "", "head_config");
  HeadConfig head_config;
  head_config.span_max_width = field<std::size_t>(hc, "head_config", "span_max_width");
  head_config.span_width_dim = field<std::size_t>(hc, "head_config", "span_width_dim");
  head_config.span_neg_ratio = field<double>(hc, "head_config", "span_neg_ratio");
  head_config.tag_dim = field<std::size_t>(hc, "head_config", "tag_dim");

  const auto head = parse_head(field<std::string>(j, "", "head"));
  if (!head) throw CheckpointError("checkpoint: unknown value for key head");
  Vocab vocab(field<std::vector<std::string>>(j, "", "vocab"));
  if (vocab.size() != enc.vocab_size) {
    throw CheckpointError(fmt::format("checkpoint: key vocab has {} entries but "
                                      "encoder_config.vocab_size is {}",
                                      vocab.size(), enc.vocab_size));
  }
  TagScheme scheme(field<std::vector<std::string>>(j, "", "classes"));

  Checkpoint ckpt;
  try {
    ckpt.model = make_model(vocab, enc, *head, head_config, scheme,
                            field<std::vector<std::string>>(j, "", "relation_labels"), 0);
  } catch (const ValidationError& e) {
    throw CheckpointError(std::string("checkpoint: invalid configuration: ") + e.what());
  } catch (const ContractError& e) {
    throw CheckpointError(std::string("checkpoint: invalid configuration: ") + e.what());
  }
  ckpt.step = field<std::size_t>(j, "", "step");
  ckpt.seed_lineage = field<std::vector<std::uint64_t>>(j, "", "seed_lineage");

  const json& params = child(j, "", "params");
  std::size_t expected_count = 0;
  for (auto& s : slots(ckpt.model)) {
    ++expected_count;
    const std::string key = "params." + s.name;
    const json& entry = child(params, "params", s.name);
    const auto shape = field<Shape>(entry, key, "shape");
    if (shape != s.tensor->shape()) {
      throw CheckpointError(fmt::format("checkpoint: shape mismatch for key {}: stored {} but the "
                                        "configuration requires {}",
                                        key, shape_string(shape), shape_string(s.tensor->shape())));
    }
    auto values = field<std::vector<double>>(entry, key, "values");
    if (values.size() != s.tensor->numel()) {
      throw CheckpointError(fmt::format("checkpoint: key {}.values has {} entries, expected {}",
                                        key, values.size(), s.tensor->numel()));
    }
    *s.tensor = Tensor(shape, std::move(values), true);
  }
  if (params.size() != expected_count) {
    for (const auto& [name, _] : params.items()) {
      bool known = false;
      for (auto& s : slots(ckpt.model)) known = known || s.name == name;
      if (!known) throw CheckpointError("checkpoint: unexpected key params." + name);
    }
  }

  if (j.contains("optimizer")) {
    const json& o = j.at("optimizer");
    OptimizerState state;
    state.step = field<std::size_t>(o, "optimizer", "step");
    using Moments = std::map<std::string, std::vector<double>>;
    state.first_moment = field<Moments>(o, "optimizer", "first_moment");
    state.second_moment = field<Moments>(o, "optimizer", "second_moment");
    const auto named = ckpt.model.named();
    for (const auto* moments : {&state.first_moment, &state.second_moment}) {
      for (const auto& [name, values] : *moments) {
        auto it = std::find_if(named.begin(), named.end(),
                               [&](const auto& p) { return p.first == name; });
        if (it == named.end() || values.size() != it->second.numel()) {
          throw CheckpointError("checkpoint: optimizer moments do not match key params." + name);
        }
      }
    }
    ckpt.optimizer = std::move(state);
  }
  return ckpt;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out << serialize_checkpoint(checkpoint);
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_checkpoint(buf.str());
}

}  // namespace medex
