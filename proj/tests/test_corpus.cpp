#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "medex/corpus.hpp"
#include "medex/errors.hpp"
#include "medex/random.hpp"

using namespace medex;

namespace {

const TagScheme kScheme = TagScheme::disease_default();
constexpr std::size_t D = 0;  // "Specific"

Sentence plain_sentence(const std::vector<std::string>& words) {
  Sentence s;
  for (const auto& w : words) s.tokens.push_back({w, {}});
  s.tags.assign(words.size(), TagScheme::outside());
  return s;
}

Sentence with_spans(const std::vector<std::string>& words, std::vector<EntitySpan> spans) {
  Sentence s = plain_sentence(words);
  s.spans = std::move(spans);
  s.tags = spans_to_tags(s.spans, s.size(), kScheme);
  return s;
}

// Random non-overlapping spans within [0, n).
std::vector<EntitySpan> random_spans(std::size_t n, Rng& rng) {
  std::vector<EntitySpan> out;
  std::size_t i = 0;
  while (i < n) {
    if (rng.uniform() < 0.4) {
      const std::size_t w = 1 + rng.index(std::min<std::size_t>(4, n - i));
      out.push_back({i, i + w - 1, rng.index(kScheme.num_classes())});
      i += w;
    } else {
      ++i;
    }
  }
  return out;
}

std::filesystem::path temp_file(const std::string& name, const std::string& contents) {
  const auto path = std::filesystem::temp_directory_path() / ("medex_test_" + name);
  std::ofstream(path, std::ios::binary) << contents;
  return path;
}

}  // namespace

TEST(TagScheme, IndexingIsABijection) {
  EXPECT_EQ(kScheme.num_tags(), 9u);
  EXPECT_EQ(kScheme.tag_name(0), "O");
  std::set<std::string> names;
  for (TagIndex t = 0; t < kScheme.num_tags(); ++t) {
    names.insert(kScheme.tag_name(t));
    EXPECT_EQ(kScheme.tag_index(kScheme.tag_name(t)), t);
  }
  EXPECT_EQ(names.size(), kScheme.num_tags());
  EXPECT_FALSE(kScheme.tag_index("B-Bogus").has_value());
}

TEST(LoadConll, EmptyFileGivesEmptyCorpus) {
  EXPECT_EQ(load_conll(temp_file("empty.tsv", ""), kScheme).size(), 0u);
}

TEST(LoadConll, SingleEntitySentence) {
  const Corpus c = load_conll(temp_file("one.tsv", "flu\tB-Specific\n\n"), kScheme);
  ASSERT_EQ(c.size(), 1u);
  ASSERT_EQ(c.sentences[0].spans.size(), 1u);
  EXPECT_EQ(c.sentences[0].spans[0], (EntitySpan{0, 0, D}));
}

TEST(LoadConll, UnknownTagNamesTheTag) {
  try {
    parse_conll("flu\tB-Bogus\n", kScheme);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("B-Bogus"), std::string::npos);
    EXPECT_EQ(e.line(), 1u);
  }
}

TEST(LoadConll, ArityMismatchIsParseError) {
  EXPECT_THROW(parse_conll("a\tO\nb c\n", kScheme), ParseError);
}

TEST(LoadConll, InvalidBioListsPosition) {
  try {
    parse_conll("a\tO\nb\tI-Specific\n", kScheme);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("index 1"), std::string::npos) << e.what();
  }
}

TEST(LoadConll, MissingFileIsIoError) {
  EXPECT_THROW(load_conll("/nonexistent/medex.tsv", kScheme), IoError);
}

TEST(Bio, AllOutsideHasNoSpans) {
  const std::vector<TagIndex> tags{0, 0, 0};
  EXPECT_TRUE(tags_to_spans(tags, kScheme, BioMode::strict).empty());
}

TEST(Bio, HandTracedDecode) {
  const std::vector<TagIndex> tags{kScheme.begin_tag(D), kScheme.inside_tag(D), 0,
                                   kScheme.begin_tag(D)};
  EXPECT_EQ(tags_to_spans(tags, kScheme, BioMode::strict),
            (std::vector<EntitySpan>{{0, 1, D}, {3, 3, D}}));
}

TEST(Bio, OrphanInsideRepairVersusStrict) {
  const std::vector<TagIndex> tags{0, kScheme.inside_tag(D)};
  EXPECT_EQ(tags_to_spans(tags, kScheme, BioMode::repair), (std::vector<EntitySpan>{{1, 1, D}}));
  try {
    tags_to_spans(tags, kScheme, BioMode::strict);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("index 1"), std::string::npos);
  }
}

TEST(Bio, InsideOfOtherClassStartsNewSpanInRepair) {
  const std::vector<TagIndex> tags{kScheme.begin_tag(0), kScheme.inside_tag(1)};
  EXPECT_EQ(tags_to_spans(tags, kScheme, BioMode::repair),
            (std::vector<EntitySpan>{{0, 0, 0}, {1, 1, 1}}));
  EXPECT_THROW(tags_to_spans(tags, kScheme, BioMode::strict), ValidationError);
}

TEST(Bio, EncodeExamples) {
  EXPECT_EQ(spans_to_tags({}, 3, kScheme), (std::vector<TagIndex>{0, 0, 0}));
  const std::vector<EntitySpan> spans{{0, 1, D}};
  EXPECT_EQ(spans_to_tags(spans, 3, kScheme),
            (std::vector<TagIndex>{kScheme.begin_tag(D), kScheme.inside_tag(D), 0}));
}

TEST(Bio, OverlapIsContractError) {
  const std::vector<EntitySpan> spans{{0, 2, 0}, {2, 3, 1}};
  EXPECT_THROW(spans_to_tags(spans, 5, kScheme), ContractError);
}

TEST(Bio, RoundTripOnRandomSpanSets) {
  Rng rng(11);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t n = 1 + rng.index(15);
    const auto spans = random_spans(n, rng);
    EXPECT_EQ(tags_to_spans(spans_to_tags(spans, n, kScheme), kScheme, BioMode::strict), spans);
  }
}

TEST(Bio, RepairOutputAlwaysReencodesStrictly) {
  Rng rng(12);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<TagIndex> tags(1 + rng.index(10));
    for (auto& t : tags) t = rng.index(kScheme.num_tags());
    const auto spans = tags_to_spans(tags, kScheme, BioMode::repair);
    const auto tags2 = spans_to_tags(spans, tags.size(), kScheme);
    EXPECT_EQ(tags_to_spans(tags2, kScheme, BioMode::strict), spans);
  }
}

TEST(Vocab, EmptyCorpusHasReservedOnly) {
  const Vocab v = build_vocab(Corpus{}, 1);
  EXPECT_EQ(v.size(), Vocab::num_reserved);
  EXPECT_EQ(v.entry(Vocab::pad), "[PAD]");
  EXPECT_EQ(v.entry(Vocab::unk), "[UNK]");
  EXPECT_EQ(v.entry(Vocab::mask), "[MASK]");
  EXPECT_EQ(v.entry(Vocab::entity_mask), "[ENT-MASK]");
}

TEST(Vocab, FrequencyThresholdKeepsOnlyFrequentWholeTokens) {
  Corpus c;
  c.sentences.push_back(plain_sentence({"flu", "flu", "cough"}));
  c.splits.push_back(Split::train);
  const Vocab v = build_vocab(c, 2);
  EXPECT_TRUE(v.find("flu").has_value());
  EXPECT_FALSE(v.find("cough").has_value());
  for (const char* ch : {"c", "o", "u", "g", "h"}) EXPECT_TRUE(v.find(ch).has_value()) << ch;
  EXPECT_EQ(tokenize_subword("cough", v).size(), 5u);
}

TEST(Vocab, DeterministicAndDuplicateFree) {
  const Corpus c = generate_synthetic_corpus(200, 3);
  const Vocab a = build_vocab(c, 2), b = build_vocab(c, 2);
  EXPECT_EQ(a, b);
  std::set<std::string> unique(a.entries().begin(), a.entries().end());
  EXPECT_EQ(unique.size(), a.size());
}

namespace {

Vocab with_reserved(std::vector<std::string> pieces) {
  std::vector<std::string> entries = Vocab().entries();
  entries.insert(entries.end(), pieces.begin(), pieces.end());
  return Vocab(std::move(entries));
}

}  // namespace

TEST(Tokenize, WholeEntryIsSingleId) {
  const Vocab v = with_reserved({"flu", "c", "o", "u", "g", "h"});
  EXPECT_EQ(tokenize_subword("flu", v), (std::vector<TokenId>{*v.find("flu")}));
}

TEST(Tokenize, GreedyLongestMatch) {
  const Vocab v = with_reserved({"flu", "c", "o", "u", "g", "h"});
  std::vector<TokenId> want;
  for (const char* p : {"flu", "c", "o", "u", "g", "h"}) want.push_back(*v.find(p));
  EXPECT_EQ(tokenize_subword("flucough", v), want);
}

TEST(Tokenize, UnknownCharacterFallsBack) {
  const Vocab v = with_reserved({"a"});
  EXPECT_EQ(tokenize_subword("ß", v), (std::vector<TokenId>{Vocab::unk}));
}

TEST(Tokenize, PiecesReconstructSurface) {
  const Corpus c = generate_synthetic_corpus(150, 4);
  const Vocab v = build_vocab(c, 3);
  for (const auto& s : c.sentences) {
    for (const auto& tok : s.tokens) {
      const auto ids = tokenize_subword(tok.surface, v);
      ASSERT_FALSE(ids.empty());
      if (std::find(ids.begin(), ids.end(), Vocab::unk) != ids.end()) continue;
      std::string joined;
      for (auto id : ids) joined += v.entry(id);
      EXPECT_EQ(joined, tok.surface);
    }
  }
}

TEST(Synthetic, ZeroSizeIsEmpty) { EXPECT_EQ(generate_synthetic_corpus(0, 1).size(), 0u); }

TEST(Synthetic, SameSeedIsByteIdentical) {
  const Corpus a = generate_synthetic_corpus(300, 9), b = generate_synthetic_corpus(300, 9);
  EXPECT_EQ(format_conll(a.sentences, a.scheme), format_conll(b.sentences, b.scheme));
  EXPECT_EQ(format_annotations(a.sentences, a.scheme, a.relation_labels),
            format_annotations(b.sentences, b.scheme, b.relation_labels));
  EXPECT_EQ(a.splits, b.splits);
}

TEST(Synthetic, ClassCountsAtSize1000) {
  const Corpus c = generate_synthetic_corpus(1000, 7);
  std::vector<std::size_t> counts(c.scheme.num_classes(), 0);
  std::size_t total = 0;
  for (const auto& s : c.sentences) {
    validate_sentence(s, c.scheme, c.relation_labels.size());
    for (const auto& sp : s.spans) ++counts[sp.cls], ++total;
  }
  for (std::size_t k = 0; k < counts.size(); ++k) {
    EXPECT_GE(counts[k], 150u) << c.scheme.classes()[k];
    EXPECT_GE(static_cast<double>(counts[k]), 0.15 * static_cast<double>(total));
  }
}

TEST(Synthetic, SplitsArePartitionNearRatio) {
  const Corpus c = generate_synthetic_corpus(1000, 7);
  const auto train = c.indices(Split::train), val = c.indices(Split::validation),
             test = c.indices(Split::test);
  EXPECT_EQ(train.size() + val.size() + test.size(), c.size());
  EXPECT_NEAR(static_cast<double>(train.size()), 720.0, 2.0);
  EXPECT_NEAR(static_cast<double>(val.size()), 110.0, 2.0);
  std::set<std::size_t> all(train.begin(), train.end());
  all.insert(val.begin(), val.end());
  all.insert(test.begin(), test.end());
  EXPECT_EQ(all.size(), c.size());
}

TEST(Synthetic, MultiEntitySentencesCarryRelations) {
  const Corpus c = generate_synthetic_corpus(300, 2);
  std::size_t with_relations = 0;
  for (const auto& s : c.sentences) {
    if (s.spans.size() < 2) EXPECT_TRUE(s.relations.empty());
    if (!s.relations.empty()) ++with_relations;
  }
  EXPECT_GT(with_relations, 0u);
}

TEST(Augment, EmptyLexiconIsIdentity) {
  const Sentence s = with_spans({"lung", "cancer", "is", "bad"}, {{0, 1, D}});
  EXPECT_EQ(augment(s, AugmentMode::synonym, {}, 1, kScheme), s);
}

TEST(Augment, SynonymReplacesEntityTokens) {
  const Sentence s = with_spans({"the", "lung", "cancer", "spread"}, {{1, 2, D}});
  const SynonymLexicon lex{{"lung cancer", {"pulmonary carcinoma"}}};
  const Sentence out = augment(s, AugmentMode::synonym, lex, 5, kScheme);
  ASSERT_EQ(out.size(), 4u);
  EXPECT_EQ(out.tokens[0].surface, "the");
  EXPECT_EQ(out.tokens[1].surface, "pulmonary");
  EXPECT_EQ(out.tokens[2].surface, "carcinoma");
  EXPECT_EQ(out.tokens[3].surface, "spread");
  EXPECT_EQ(out.spans, s.spans);
  EXPECT_EQ(out.tags, s.tags);
}

TEST(Augment, EntityMaskKeepsTags) {
  const Sentence s = with_spans({"a", "lung", "cancer", "b"}, {{1, 2, D}});
  const Sentence out = augment(s, AugmentMode::entity_mask, {}, 0, kScheme);
  EXPECT_EQ(out.tokens[0], s.tokens[0]);
  EXPECT_EQ(out.tokens[1].surface, kEntityMaskSurface);
  EXPECT_EQ(out.tokens[2].surface, kEntityMaskSurface);
  EXPECT_EQ(out.tokens[3], s.tokens[3]);
  EXPECT_EQ(out.tags, s.tags);
}

TEST(Augment, PreservesSpanCountClassesAndNonEntityTokens) {
  const Corpus c = generate_synthetic_corpus(200, 13);
  const auto lex = synthetic_lexicon();
  for (std::size_t i = 0; i < c.size(); ++i) {
    const Sentence& s = c.sentences[i];
    for (auto mode : {AugmentMode::synonym, AugmentMode::entity_mask}) {
      const Sentence out = augment(s, mode, lex, i, c.scheme);
      ASSERT_EQ(out.spans.size(), s.spans.size());
      for (std::size_t k = 0; k < s.spans.size(); ++k) EXPECT_EQ(out.spans[k].cls, s.spans[k].cls);
      validate_sentence(out, c.scheme, c.relation_labels.size());
      // Tokens outside spans appear unchanged and in order.
      std::vector<std::string> before, after;
      auto outside = [](const Sentence& x, std::vector<std::string>& into) {
        const auto tags = x.tags;
        for (std::size_t t = 0; t < x.size(); ++t)
          if (tags[t] == TagScheme::outside()) into.push_back(x.tokens[t].surface);
      };
      outside(s, before);
      outside(out, after);
      EXPECT_EQ(before, after);
    }
  }
}

TEST(ConllIo, CanonicalFileRoundTripsByteIdentically) {
  const Corpus c = generate_synthetic_corpus(50, 21);
  const std::string text = format_conll(c.sentences, c.scheme);
  const Corpus back = parse_conll(text, c.scheme);
  EXPECT_EQ(format_conll(back.sentences, back.scheme), text);
  const auto path = temp_file("rt.tsv", "");
  save_conll(c.sentences, c.scheme, path);
  const Corpus loaded = load_conll(path, c.scheme);
  EXPECT_EQ(format_conll(loaded.sentences, loaded.scheme), text);
}

TEST(ConllIo, CorpusDirRoundTripKeepsRelations) {
  const Corpus c = generate_synthetic_corpus(80, 22);
  const auto dir = std::filesystem::temp_directory_path() / "medex_test_corpus_dir";
  std::filesystem::remove_all(dir);
  save_corpus_dir(c, dir);
  const Corpus back = load_corpus_dir(dir, c.scheme);
  ASSERT_EQ(back.size(), c.size());
  // Sentences come back grouped by split; compare per split in order.
  for (Split s : {Split::train, Split::validation, Split::test}) {
    const auto a = c.indices(s), b = back.indices(s);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t k = 0; k < a.size(); ++k) {
      EXPECT_EQ(back.sentences[b[k]].spans, c.sentences[a[k]].spans);
      EXPECT_EQ(back.sentences[b[k]].relations, c.sentences[a[k]].relations);
    }
  }
}

TEST(Lexicon, JsonRoundTripAndValidation) {
  const auto lex = synthetic_lexicon();
  EXPECT_EQ(parse_lexicon(format_lexicon(lex)), lex);
  EXPECT_THROW(parse_lexicon(R"({"flu": []})"), ValidationError);
  EXPECT_THROW(parse_lexicon("[1,2]"), ValidationError);
}
