#include <algorithm>
#include <array>
#include <cmath>

#include "medex/corpus.hpp"
#include "medex/errors.hpp"
#include "medex/random.hpp"

namespace medex {

namespace {

enum ClassId : std::size_t { kSpecific = 0, kComposite = 1, kModifier = 2, kUndetermined = 3 };
enum RelationId : std::size_t { kNone = 0, kTreats = 1, kCauses = 2 };

const std::array<std::vector<std::string>, 4>& entity_lexicon() {
  static const std::array<std::vector<std::string>, 4> lex = {{
      {"asthma", "influenza", "tuberculosis", "breast cancer", "lung cancer", "type 2 diabetes",
       "hepatitis b", "multiple sclerosis", "rheumatoid arthritis", "parkinson disease",
       "cystic fibrosis", "sickle cell anemia", "acute myeloid leukemia", "crohn disease",
       "migraine", "glaucoma", "psoriasis", "huntington disease"},
      {"breast and ovarian cancer", "colon and rectal cancer", "kidney and liver disease",
       "heart and lung failure", "head and neck cancer", "cleft lip and palate",
       "alpha and beta thalassemia", "renal or hepatic failure", "skin and bone tumors",
       "liver or kidney cysts", "hip and knee arthritis", "eye and ear defects"},
      {"diabetic", "asthmatic", "epileptic", "leukemic", "anemic", "arthritic", "autistic",
       "hemophilic", "psoriatic", "obese", "hypertensive", "septic"},
      {"hereditary disease", "rare disorder", "genetic syndrome", "inherited condition",
       "metabolic disorder", "neurological disease", "autoimmune disorder", "congenital anomaly",
       "chronic illness", "developmental disorder", "degenerative disease",
       "inflammatory condition"},
  }};
  return lex;
}

// A template is a token list; "{E}" is a non-modifier entity slot and "{M}" a
// modifier slot. Relations refer to slot order.
struct Template {
  std::vector<std::string> tokens;
  std::vector<std::array<std::size_t, 3>> relations;  // head slot, tail slot, label
};

const std::vector<Template>& templates() {
  static const std::vector<Template> t = {
      {{"patients", "with", "{E}", "frequently", "develop", "{E}", "."}, {{0, 1, kCauses}}},
      {{"{E}", "is", "a", "major", "risk", "factor", "for", "{E}", "."}, {{0, 1, kCauses}}},
      {{"{E}", "may", "lead", "to", "{E}", "in", "{M}", "patients", "."}, {{0, 1, kCauses}}},
      {{"treatment", "of", "{E}", "also", "improved", "{E}", "."}, {{0, 1, kTreats}}},
      {{"therapy", "targeting", "{E}", "relieved", "{E}", "among", "{M}", "children", "."},
       {{0, 1, kTreats}}},
      {{"{E}", "and", "{E}", "were", "both", "observed", "in", "the", "cohort", "."}, {}},
      {{"we", "studied", "{E}", "in", "#", "families", "."}, {}},
      {{"the", "prevalence", "of", "{E}", "was", "higher", "in", "{M}", "subjects", "."}, {}},
      {{"mutations", "in", "this", "gene", "cause", "{E}", "."}, {}},
      {{"{M}", "patients", "showed", "reduced", "response", "to", "the", "drug", "."}, {}},
      {{"a", "case", "of", "{E}", "is", "reported", "."}, {}},
      {{"the", "{M}", "mice", "developed", "{E}", "after", "exposure", "."}, {{0, 1, kCauses}}},
      {{"clinical", "features", "of", "{E}", "overlap", "with", "{E}", "."}, {}},
      {{"{E}", "was", "prevented", "by", "early", "management", "of", "{E}", "."},
       {{1, 0, kTreats}}},
      {{"#", "{M}", "carriers", "were", "enrolled", "in", "the", "trial", "."}, {}},
      {{"in", "{M}", "patients", ",", "{E}", "progressed", "rapidly", "."}, {}},
  };
  return t;
}

Sentence instantiate(const Template& tpl, Rng& rng, const TagScheme& scheme) {
  static const std::array<std::size_t, 3> generic = {kSpecific, kComposite, kUndetermined};
  Sentence sent;
  std::vector<std::size_t> slot_span;
  for (const auto& piece : tpl.tokens) {
    if (piece == "{E}" || piece == "{M}") {
      const std::size_t cls = piece == "{M}" ? kModifier : generic[rng.index(generic.size())];
      const auto& choices = entity_lexicon()[cls];
      const auto words = split_whitespace(choices[rng.index(choices.size())]);
      EntitySpan span{sent.tokens.size(), sent.tokens.size() + words.size() - 1, cls};
      for (const auto& w : words) sent.tokens.push_back({w, {}});
      slot_span.push_back(sent.spans.size());
      sent.spans.push_back(span);
    } else if (piece == "#") {
      sent.tokens.push_back({std::to_string(2 + rng.index(98)), {}});
    } else {
      sent.tokens.push_back({piece, {}});
    }
  }
  sent.tags = spans_to_tags(sent.spans, sent.tokens.size(), scheme);
  for (const auto& [head, tail, label] : tpl.relations) {
    sent.relations.push_back({slot_span[head], slot_span[tail], label});
  }
  return sent;
}

}  // namespace

Corpus generate_synthetic_corpus(std::size_t size, std::uint64_t seed) {
  Corpus corpus;
  Rng rng(derive_seed(seed, 0));
  const auto& tpls = templates();
  corpus.sentences.reserve(size);
  for (std::size_t i = 0; i < size; ++i) {
    corpus.sentences.push_back(instantiate(tpls[rng.index(tpls.size())], rng, corpus.scheme));
  }

  // 72/11/17 split over a seeded permutation.
  std::vector<std::size_t> order(size);
  for (std::size_t i = 0; i < size; ++i) order[i] = i;
  Rng split_rng(derive_seed(seed, 1));
  split_rng.shuffle(std::span<std::size_t>(order));
  const auto n_train = static_cast<std::size_t>(std::llround(0.72 * static_cast<double>(size)));
  const auto n_val = static_cast<std::size_t>(std::llround(0.11 * static_cast<double>(size)));
  corpus.splits.assign(size, Split::test);
  for (std::size_t k = 0; k < size; ++k) {
    corpus.splits[order[k]] =
        k < n_train ? Split::train : (k < n_train + n_val ? Split::validation : Split::test);
  }
  return corpus;
}

SynonymLexicon synthetic_lexicon() {
  return {
      {"lung cancer", {"pulmonary carcinoma", "lung carcinoma"}},
      {"breast cancer", {"mammary carcinoma"}},
      {"influenza", {"flu", "grippe"}},
      {"type 2 diabetes", {"adult onset diabetes", "diabetes mellitus"}},
      {"tuberculosis", {"phthisis"}},
      {"migraine", {"hemicrania"}},
      {"parkinson disease", {"paralysis agitans"}},
      {"heart and lung failure", {"cardiopulmonary failure"}},
      {"kidney and liver disease", {"hepatorenal disease"}},
      {"rare disorder", {"orphan disease"}},
      {"chronic illness", {"chronic disease", "long term illness"}},
      {"obese", {"overweight"}},
  };
}

Sentence augment(const Sentence& sentence, AugmentMode mode, const SynonymLexicon& lexicon,
                 std::uint64_t seed, const TagScheme& scheme) {
  if (mode == AugmentMode::entity_mask) {
    Sentence out = sentence;
    for (const auto& span : out.spans) {
      for (std::size_t i = span.start; i <= span.end; ++i) {
        out.tokens[i] = Token{std::string(kEntityMaskSurface), {Vocab::entity_mask}};
      }
    }
    return out;
  }

  Sentence out;
  out.relations = sentence.relations;
  Rng rng(seed);
  std::size_t cursor = 0;
  for (std::size_t s = 0; s < sentence.spans.size(); ++s) {
    const auto& span = sentence.spans[s];
    for (; cursor < span.start; ++cursor) out.tokens.push_back(sentence.tokens[cursor]);
    std::string surface;
    for (std::size_t i = span.start; i <= span.end; ++i) {
      if (i > span.start) surface += ' ';
      surface += sentence.tokens[i].surface;
    }
    EntitySpan replaced = span;
    replaced.start = out.tokens.size();
    auto it = lexicon.find(surface);
    if (it != lexicon.end() && !it->second.empty()) {
      const auto words = split_whitespace(it->second[rng.index(it->second.size())]);
      if (words.empty()) throw ContractError("empty synonym for '" + surface + "'");
      for (const auto& w : words) out.tokens.push_back({w, {}});
    } else {
      for (std::size_t i = span.start; i <= span.end; ++i) out.tokens.push_back(sentence.tokens[i]);
    }
    replaced.end = out.tokens.size() - 1;
    out.spans.push_back(replaced);
    cursor = span.end + 1;
  }
  for (; cursor < sentence.tokens.size(); ++cursor) out.tokens.push_back(sentence.tokens[cursor]);
  out.tags = spans_to_tags(out.spans, out.tokens.size(), scheme);
  return out;
}

}  // namespace medex
