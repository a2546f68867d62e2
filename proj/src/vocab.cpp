#include <algorithm>
#include <cctype>
#include <map>

#include "medex/corpus.hpp"
#include "medex/errors.hpp"

namespace medex {

namespace {

const std::vector<std::string>& reserved_entries() {
  static const std::vector<std::string> entries = {"[PAD]", "[UNK]", "[MASK]",
                                                   std::string(kEntityMaskSurface)};
  return entries;
}

std::size_t code_point_length(unsigned char lead) {
  if (lead < 0x80) return 1;
  if ((lead >> 5) == 0x6) return 2;
  if ((lead >> 4) == 0xE) return 3;
  if ((lead >> 3) == 0x1E) return 4;
  return 1;  // stray continuation byte
}

bool is_reserved(std::string_view s) {
  const auto& r = reserved_entries();
  return std::find(r.begin(), r.end(), s) != r.end();
}

std::vector<std::string> by_frequency(const std::map<std::string, std::size_t>& counts,
                                      std::size_t min_freq) {
  std::vector<std::pair<std::string, std::size_t>> items;
  for (const auto& [piece, count] : counts) {
    if (count >= min_freq) items.emplace_back(piece, count);
  }
  // map iteration is lexicographic, so a stable sort on count keeps that tiebreak.
  std::stable_sort(items.begin(), items.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> out;
  out.reserve(items.size());
  for (auto& [piece, count] : items) out.push_back(std::move(piece));
  return out;
}

}  // namespace

Vocab::Vocab() : Vocab(reserved_entries()) {}

Vocab::Vocab(std::vector<std::string> entries) : entries_(std::move(entries)) {
  const auto& reserved = reserved_entries();
  if (entries_.size() < reserved.size() ||
      !std::equal(reserved.begin(), reserved.end(), entries_.begin())) {
    throw ContractError("vocabulary must start with the reserved entries");
  }
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].empty()) throw ContractError("empty vocabulary entry");
    if (!index_.emplace(entries_[i], i).second) {
      throw ContractError("duplicate vocabulary entry '" + entries_[i] + "'");
    }
    longest_ = std::max(longest_, entries_[i].size());
  }
}

std::optional<TokenId> Vocab::find(std::string_view piece) const {
  auto it = index_.find(std::string(piece));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

Vocab build_vocab(const Corpus& corpus, std::size_t min_freq) {
  if (min_freq < 1) throw ContractError("build_vocab: min_freq must be at least 1");
  std::map<std::string, std::size_t> words, chars;
  for (const auto& sent : corpus.sentences) {
    for (const auto& tok : sent.tokens) {
      if (is_reserved(tok.surface)) continue;
      ++words[tok.surface];
      for (std::size_t p = 0; p < tok.surface.size();) {
        const auto len = std::min(code_point_length(static_cast<unsigned char>(tok.surface[p])),
                                  tok.surface.size() - p);
        ++chars[tok.surface.substr(p, len)];
        p += len;
      }
    }
  }
  std::vector<std::string> entries = reserved_entries();
  std::map<std::string, bool> seen;
  for (const auto& e : entries) seen[e] = true;
  for (auto& w : by_frequency(words, min_freq)) {
    seen[w] = true;
    entries.push_back(std::move(w));
  }
  for (auto& c : by_frequency(chars, 1)) {
    if (seen.count(c)) continue;
    entries.push_back(std::move(c));
  }
  return Vocab(std::move(entries));
}

std::vector<TokenId> tokenize_subword(std::string_view surface, const Vocab& vocab) {
  std::vector<TokenId> ids;
  std::size_t p = 0;
  while (p < surface.size()) {
    const std::size_t max_len = std::min(vocab.longest_entry(), surface.size() - p);
    bool matched = false;
    for (std::size_t len = max_len; len > 0; --len) {
      if (auto id = vocab.find(surface.substr(p, len))) {
        ids.push_back(*id);
        p += len;
        matched = true;
        break;
      }
    }
    if (!matched) {
      ids.push_back(Vocab::unk);
      p += std::min(code_point_length(static_cast<unsigned char>(surface[p])), surface.size() - p);
    }
  }
  if (ids.empty()) ids.push_back(Vocab::unk);
  return ids;
}

void tokenize(Sentence& sentence, const Vocab& vocab) {
  for (auto& tok : sentence.tokens) tok.subword_ids = tokenize_subword(tok.surface, vocab);
}

void tokenize(Corpus& corpus, const Vocab& vocab) {
  for (auto& sent : corpus.sentences) tokenize(sent, vocab);
}

std::vector<std::string> split_whitespace(std::string_view text) {
  std::vector<std::string> out;
  std::size_t p = 0;
  while (p < text.size()) {
    while (p < text.size() && std::isspace(static_cast<unsigned char>(text[p]))) ++p;
    std::size_t q = p;
    while (q < text.size() && !std::isspace(static_cast<unsigned char>(text[q]))) ++q;
    if (q > p) out.emplace_back(text.substr(p, q - p));
    p = q;
  }
  return out;
}

}  // namespace medex
