#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace medex {

using TagIndex = std::size_t;
using TokenId = std::size_t;

// {O} ∪ {B-c, I-c}: "O" is 0, B-c is 1 + 2c, I-c is 2 + 2c.
class TagScheme {
 public:
  explicit TagScheme(std::vector<std::string> classes);

  // Specific, Composite, Modifier, Undetermined.
  static TagScheme disease_default();

  const std::vector<std::string>& classes() const { return classes_; }
  std::size_t num_classes() const { return classes_.size(); }
  std::size_t num_tags() const { return 2 * classes_.size() + 1; }

  static constexpr TagIndex outside() { return 0; }
  TagIndex begin_tag(std::size_t cls) const { return 1 + 2 * cls; }
  TagIndex inside_tag(std::size_t cls) const { return 2 + 2 * cls; }
  bool is_begin(TagIndex t) const { return t != 0 && t % 2 == 1; }
  bool is_inside(TagIndex t) const { return t != 0 && t % 2 == 0; }
  std::size_t class_of(TagIndex t) const { return (t - 1) / 2; }

  std::string tag_name(TagIndex t) const;
  std::optional<TagIndex> tag_index(std::string_view name) const;
  std::optional<std::size_t> class_index(std::string_view name) const;

  bool operator==(const TagScheme&) const = default;

 private:
  std::vector<std::string> classes_;
};

struct EntitySpan {
  std::size_t start = 0;  // inclusive
  std::size_t end = 0;    // inclusive
  std::size_t cls = 0;

  std::size_t width() const { return end - start + 1; }
  bool overlaps(const EntitySpan& o) const { return start <= o.end && o.start <= end; }
  auto operator<=>(const EntitySpan&) const = default;
};

struct RelationInstance {
  std::size_t head = 0;  // index into Sentence::spans
  std::size_t tail = 0;
  std::size_t label = 0;  // index into the relation label set; 0 is "no-relation"
  auto operator<=>(const RelationInstance&) const = default;
};

struct Token {
  std::string surface;
  std::vector<TokenId> subword_ids;
  bool operator==(const Token&) const = default;
};

struct Sentence {
  std::vector<Token> tokens;
  std::vector<TagIndex> tags;
  std::vector<EntitySpan> spans;
  std::vector<RelationInstance> relations;

  std::size_t size() const { return tokens.size(); }
  bool operator==(const Sentence&) const = default;
};

enum class Split : std::uint8_t { train, validation, test };

std::string_view split_name(Split s);
std::optional<Split> parse_split(std::string_view name);

std::vector<std::string> default_relation_labels();

struct Corpus {
  TagScheme scheme = TagScheme::disease_default();
  std::vector<std::string> relation_labels = default_relation_labels();
  std::vector<Sentence> sentences;
  std::vector<Split> splits;  // parallel to sentences

  std::size_t size() const { return sentences.size(); }
  std::vector<std::size_t> indices(Split s) const;
  // Copy holding only the listed sentences, each assigned to `as`.
  Corpus subset(std::span<const std::size_t> ids, Split as) const;
  std::optional<std::size_t> relation_index(std::string_view label) const;
};

// ---- BIO algebra ----

enum class BioMode { strict, repair };

std::vector<EntitySpan> tags_to_spans(std::span<const TagIndex> tags, const TagScheme& scheme,
                                      BioMode mode);
std::vector<TagIndex> spans_to_tags(std::span<const EntitySpan> spans, std::size_t n,
                                    const TagScheme& scheme);

// Checks tag/span agreement, span bounds and overlap, and relation indices.
void validate_sentence(const Sentence& sentence, const TagScheme& scheme,
                       std::size_t num_relation_labels);

// ---- file formats ----

// "token<TAB>tag" lines, blank line between sentences. Relations are not part
// of this format; spans are rebuilt from the tags in strict mode.
Corpus load_conll(const std::filesystem::path& path, const TagScheme& scheme);
Corpus parse_conll(std::string_view text, const TagScheme& scheme);
std::string format_conll(std::span<const Sentence> sentences, const TagScheme& scheme);
void save_conll(std::span<const Sentence> sentences, const TagScheme& scheme,
                const std::filesystem::path& path);

// JSON-lines: {"spans":[{"start","end","cls"}],"relations":[{"head","tail","label"}]}
// per sentence, in tag-file order. Replaces spans/relations after checking
// that the spans agree with the loaded tags.
void apply_annotations(std::string_view jsonl, Corpus& corpus, std::size_t first = 0);
std::string format_annotations(std::span<const Sentence> sentences, const TagScheme& scheme,
                               std::span<const std::string> relation_labels);

// A corpus directory holds <split>.tsv and <split>.jsonl for each split.
Corpus load_corpus_dir(const std::filesystem::path& dir, const TagScheme& scheme);
void save_corpus_dir(const Corpus& corpus, const std::filesystem::path& dir);

// ---- vocabulary and subword tokenization ----

class Vocab {
 public:
  static constexpr TokenId pad = 0;
  static constexpr TokenId unk = 1;
  static constexpr TokenId mask = 2;
  static constexpr TokenId entity_mask = 3;
  static constexpr std::size_t num_reserved = 4;

  Vocab();
  explicit Vocab(std::vector<std::string> entries);

  std::size_t size() const { return entries_.size(); }
  const std::vector<std::string>& entries() const { return entries_; }
  const std::string& entry(TokenId id) const { return entries_.at(id); }
  std::optional<TokenId> find(std::string_view piece) const;
  std::size_t longest_entry() const { return longest_; }

  bool operator==(const Vocab& o) const { return entries_ == o.entries_; }

 private:
  std::vector<std::string> entries_;
  std::unordered_map<std::string, TokenId> index_;
  std::size_t longest_ = 0;
};

inline constexpr std::string_view kEntityMaskSurface = "[ENT-MASK]";

Vocab build_vocab(const Corpus& corpus, std::size_t min_freq);
// Greedy longest match over UTF-8 code points; unknown characters become [UNK].
std::vector<TokenId> tokenize_subword(std::string_view surface, const Vocab& vocab);
void tokenize(Sentence& sentence, const Vocab& vocab);
void tokenize(Corpus& corpus, const Vocab& vocab);
std::vector<std::string> split_whitespace(std::string_view text);

// ---- synthetic data ----

// Deterministic template-grammar corpus with entities from all four default
// classes and {treats, causes} relations; splits 72/11/17.
Corpus generate_synthetic_corpus(std::size_t size, std::uint64_t seed);

// ---- augmentation ----

using SynonymLexicon = std::map<std::string, std::vector<std::string>>;

SynonymLexicon synthetic_lexicon();
SynonymLexicon parse_lexicon(std::string_view json);
std::string format_lexicon(const SynonymLexicon& lexicon);

enum class AugmentMode { synonym, entity_mask };

// New tokens carry no subword ids; re-run tokenize() before encoding.
Sentence augment(const Sentence& sentence, AugmentMode mode, const SynonymLexicon& lexicon,
                 std::uint64_t seed, const TagScheme& scheme);

}  // namespace medex
