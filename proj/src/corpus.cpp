#include "medex/corpus.hpp"

#include <algorithm>

#include "medex/errors.hpp"

namespace medex {

TagScheme::TagScheme(std::vector<std::string> classes) : classes_(std::move(classes)) {
  for (std::size_t i = 0; i < classes_.size(); ++i) {
    if (classes_[i].empty()) throw ContractError("empty entity class name");
    for (std::size_t j = 0; j < i; ++j) {
      if (classes_[i] == classes_[j]) {
        throw ContractError("duplicate entity class '" + classes_[i] + "'");
      }
    }
  }
}

TagScheme TagScheme::disease_default() {
  return TagScheme({"Specific", "Composite", "Modifier", "Undetermined"});
}

std::string TagScheme::tag_name(TagIndex t) const {
  if (t >= num_tags()) throw ContractError("tag index " + std::to_string(t) + " out of range");
  if (t == outside()) return "O";
  return (is_begin(t) ? "B-" : "I-") + classes_[class_of(t)];
}

std::optional<TagIndex> TagScheme::tag_index(std::string_view name) const {
  if (name == "O") return outside();
  if (name.size() < 3 || name[1] != '-') return std::nullopt;
  const auto cls = class_index(name.substr(2));
  if (!cls) return std::nullopt;
  if (name[0] == 'B') return begin_tag(*cls);
  if (name[0] == 'I') return inside_tag(*cls);
  return std::nullopt;
}

std::optional<std::size_t> TagScheme::class_index(std::string_view name) const {
  for (std::size_t i = 0; i < classes_.size(); ++i) {
    if (classes_[i] == name) return i;
  }
  return std::nullopt;
}

std::string_view split_name(Split s) {
  switch (s) {
    case Split::train:
      return "train";
    case Split::validation:
      return "validation";
    case Split::test:
      return "test";
  }
  return "train";
}

std::optional<Split> parse_split(std::string_view name) {
  if (name == "train") return Split::train;
  if (name == "validation") return Split::validation;
  if (name == "test") return Split::test;
  return std::nullopt;
}

std::vector<std::string> default_relation_labels() { return {"no-relation", "treats", "causes"}; }

std::vector<std::size_t> Corpus::indices(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < splits.size(); ++i) {
    if (splits[i] == s) out.push_back(i);
  }
  return out;
}

Corpus Corpus::subset(std::span<const std::size_t> ids, Split as) const {
  Corpus out;
  out.scheme = scheme;
  out.relation_labels = relation_labels;
  for (auto id : ids) {
    out.sentences.push_back(sentences.at(id));
    out.splits.push_back(as);
  }
  return out;
}

std::optional<std::size_t> Corpus::relation_index(std::string_view label) const {
  for (std::size_t i = 0; i < relation_labels.size(); ++i) {
    if (relation_labels[i] == label) return i;
  }
  return std::nullopt;
}

std::vector<EntitySpan> tags_to_spans(std::span<const TagIndex> tags, const TagScheme& scheme,
                                      BioMode mode) {
  std::vector<EntitySpan> spans;
  std::optional<EntitySpan> open;
  auto close = [&] {
    if (open) spans.push_back(*open);
    open.reset();
  };
  for (std::size_t i = 0; i < tags.size(); ++i) {
    const TagIndex t = tags[i];
    if (t >= scheme.num_tags()) {
      throw ContractError("tag index " + std::to_string(t) + " out of range at position " +
                          std::to_string(i));
    }
    if (t == TagScheme::outside()) {
      close();
    } else if (scheme.is_begin(t)) {
      close();
      open = EntitySpan{i, i, scheme.class_of(t)};
    } else if (open && open->cls == scheme.class_of(t)) {
      open->end = i;
    } else {
      if (mode == BioMode::strict) {
        throw ValidationError("invalid BIO: " + scheme.tag_name(t) + " at index " +
                              std::to_string(i) + " does not continue an entity of that class");
      }
      close();
      open = EntitySpan{i, i, scheme.class_of(t)};
    }
  }
  close();
  return spans;
}

std::vector<TagIndex> spans_to_tags(std::span<const EntitySpan> spans, std::size_t n,
                                    const TagScheme& scheme) {
  std::vector<TagIndex> tags(n, TagScheme::outside());
  std::vector<bool> covered(n, false);
  for (const auto& s : spans) {
    if (s.start > s.end || s.end >= n) {
      throw ContractError("span (" + std::to_string(s.start) + "," + std::to_string(s.end) +
                          ") outside sentence of length " + std::to_string(n));
    }
    if (s.cls >= scheme.num_classes()) {
      throw ContractError("span class " + std::to_string(s.cls) + " out of range");
    }
    for (std::size_t i = s.start; i <= s.end; ++i) {
      if (covered[i]) {
        throw ContractError("overlapping spans at token " + std::to_string(i));
      }
      covered[i] = true;
      tags[i] = i == s.start ? scheme.begin_tag(s.cls) : scheme.inside_tag(s.cls);
    }
  }
  return tags;
}

void validate_sentence(const Sentence& sentence, const TagScheme& scheme,
                       std::size_t num_relation_labels) {
  if (sentence.tags.size() != sentence.tokens.size()) {
    throw ValidationError("sentence has " + std::to_string(sentence.tokens.size()) +
                          " tokens but " + std::to_string(sentence.tags.size()) + " tags");
  }
  for (const auto& tok : sentence.tokens) {
    if (tok.surface.empty()) throw ValidationError("empty token surface");
  }
  auto derived = tags_to_spans(sentence.tags, scheme, BioMode::strict);
  if (derived != sentence.spans) {
    throw ValidationError("entity spans disagree with BIO tags");
  }
  for (const auto& r : sentence.relations) {
    if (r.head >= sentence.spans.size() || r.tail >= sentence.spans.size()) {
      throw ValidationError("relation refers to a missing span");
    }
    if (r.head == r.tail) throw ValidationError("relation head equals tail");
    if (r.label >= num_relation_labels) throw ValidationError("relation label out of range");
  }
}

}  // namespace medex
