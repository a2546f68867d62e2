#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "medex/corpus.hpp"
#include "medex/errors.hpp"

namespace medex {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

bool is_blank(std::string_view line) {
  return line.find_first_not_of(" \t") == std::string_view::npos;
}

}  // namespace

Corpus parse_conll(std::string_view text, const TagScheme& scheme) {
  Corpus corpus;
  corpus.scheme = scheme;
  Sentence current;
  std::size_t sentence_line = 0;

  auto finish = [&] {
    if (current.tokens.empty()) return;
    try {
      current.spans = tags_to_spans(current.tags, scheme, BioMode::strict);
    } catch (const ValidationError& e) {
      throw ValidationError("sentence starting at line " + std::to_string(sentence_line) + ": " +
                            e.what());
    }
    corpus.sentences.push_back(std::move(current));
    corpus.splits.push_back(Split::train);
    current = Sentence{};
  };

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? nl : nl - pos);
    pos = nl == std::string_view::npos ? text.size() : nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (is_blank(line)) {
      finish();
      continue;
    }
    const auto tab = line.find('\t');
    if (tab == std::string_view::npos || line.find('\t', tab + 1) != std::string_view::npos ||
        tab == 0 || tab + 1 == line.size()) {
      throw ParseError("expected 'token<TAB>tag', got '" + std::string(line) + "'", line_no);
    }
    const auto tag_name = line.substr(tab + 1);
    const auto tag = scheme.tag_index(tag_name);
    if (!tag) throw ParseError("unknown tag '" + std::string(tag_name) + "'", line_no);
    if (current.tokens.empty()) sentence_line = line_no;
    current.tokens.push_back(Token{std::string(line.substr(0, tab)), {}});
    current.tags.push_back(*tag);
  }
  finish();
  return corpus;
}

Corpus load_conll(const std::filesystem::path& path, const TagScheme& scheme) {
  return parse_conll(read_file(path), scheme);
}

std::string format_conll(std::span<const Sentence> sentences, const TagScheme& scheme) {
  std::string out;
  for (std::size_t s = 0; s < sentences.size(); ++s) {
    if (s) out += '\n';
    const auto& sent = sentences[s];
    for (std::size_t i = 0; i < sent.tokens.size(); ++i) {
      out += sent.tokens[i].surface;
      out += '\t';
      out += scheme.tag_name(sent.tags.at(i));
      out += '\n';
    }
  }
  return out;
}

void save_conll(std::span<const Sentence> sentences, const TagScheme& scheme,
                const std::filesystem::path& path) {
  write_file(path, format_conll(sentences, scheme));
}

std::string format_annotations(std::span<const Sentence> sentences, const TagScheme& scheme,
                               std::span<const std::string> relation_labels) {
  std::string out;
  for (const auto& sent : sentences) {
    ordered_json obj;
    obj["spans"] = ordered_json::array();
    for (const auto& sp : sent.spans) {
      obj["spans"].push_back(
          {{"start", sp.start}, {"end", sp.end}, {"cls", scheme.classes().at(sp.cls)}});
    }
    obj["relations"] = ordered_json::array();
    for (const auto& r : sent.relations) {
      obj["relations"].push_back(
          {{"head", r.head}, {"tail", r.tail}, {"label", relation_labels[r.label]}});
    }
    out += obj.dump();
    out += '\n';
  }
  return out;
}

void apply_annotations(std::string_view jsonl, Corpus& corpus, std::size_t first) {
  std::size_t line_no = 0;
  std::size_t index = first;
  std::size_t pos = 0;
  while (pos < jsonl.size()) {
    auto nl = jsonl.find('\n', pos);
    std::string_view line = jsonl.substr(pos, nl == std::string_view::npos ? nl : nl - pos);
    pos = nl == std::string_view::npos ? jsonl.size() : nl + 1;
    ++line_no;
    if (is_blank(line)) continue;
    if (index >= corpus.sentences.size()) {
      throw ParseError("more annotation lines than sentences", line_no);
    }
    Sentence& sent = corpus.sentences[index++];
    try {
      const auto obj = nlohmann::json::parse(line);
      std::vector<EntitySpan> spans;
      for (const auto& js : obj.at("spans")) {
        const auto cls_name = js.at("cls").get<std::string>();
        const auto cls = corpus.scheme.class_index(cls_name);
        if (!cls) throw ParseError("unknown entity class '" + cls_name + "'", line_no);
        spans.push_back({js.at("start").get<std::size_t>(), js.at("end").get<std::size_t>(), *cls});
      }
      std::vector<RelationInstance> relations;
      for (const auto& jr : obj.at("relations")) {
        const auto label_name = jr.at("label").get<std::string>();
        const auto label = corpus.relation_index(label_name);
        if (!label) throw ParseError("unknown relation label '" + label_name + "'", line_no);
        relations.push_back({jr.at("head").get<std::size_t>(), jr.at("tail").get<std::size_t>(),
                             *label});
      }
      sent.spans = std::move(spans);
      sent.relations = std::move(relations);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("malformed annotation: ") + e.what(), line_no);
    }
    try {
      validate_sentence(sent, corpus.scheme, corpus.relation_labels.size());
    } catch (const ValidationError& e) {
      throw ValidationError("annotation line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (index != corpus.sentences.size()) {
    throw ValidationError("annotation file covers " + std::to_string(index - first) +
                          " sentences, tag file has " +
                          std::to_string(corpus.sentences.size() - first));
  }
}

Corpus load_corpus_dir(const std::filesystem::path& dir, const TagScheme& scheme) {
  Corpus corpus;
  corpus.scheme = scheme;
  for (Split s : {Split::train, Split::validation, Split::test}) {
    const auto tsv = dir / (std::string(split_name(s)) + ".tsv");
    const auto jsonl = dir / (std::string(split_name(s)) + ".jsonl");
    if (!std::filesystem::exists(tsv)) throw IoError("missing " + tsv.string());
    Corpus part = load_conll(tsv, scheme);
    const std::size_t first = corpus.sentences.size();
    for (auto& sent : part.sentences) {
      corpus.sentences.push_back(std::move(sent));
      corpus.splits.push_back(s);
    }
    if (std::filesystem::exists(jsonl)) {
      apply_annotations(read_file(jsonl), corpus, first);
    }
  }
  return corpus;
}

void save_corpus_dir(const Corpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (Split s : {Split::train, Split::validation, Split::test}) {
    std::vector<Sentence> part;
    for (auto i : corpus.indices(s)) part.push_back(corpus.sentences[i]);
    write_file(dir / (std::string(split_name(s)) + ".tsv"), format_conll(part, corpus.scheme));
    write_file(dir / (std::string(split_name(s)) + ".jsonl"),
               format_annotations(part, corpus.scheme, corpus.relation_labels));
  }
}

SynonymLexicon parse_lexicon(std::string_view json) {
  SynonymLexicon lexicon;
  nlohmann::json obj;
  try {
    obj = nlohmann::json::parse(json);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed lexicon: ") + e.what());
  }
  if (!obj.is_object()) throw ValidationError("lexicon must be a JSON object");
  for (const auto& [key, alts] : obj.items()) {
    if (!alts.is_array() || alts.empty()) {
      throw ValidationError("lexicon entry '" + key + "' needs a nonempty array of alternates");
    }
    auto& out = lexicon[key];
    for (const auto& a : alts) out.push_back(a.get<std::string>());
  }
  return lexicon;
}

std::string format_lexicon(const SynonymLexicon& lexicon) {
  ordered_json obj = ordered_json::object();
  for (const auto& [key, alts] : lexicon) obj[key] = alts;
  return obj.dump(2) + "\n";
}

}  // namespace medex
