#include "medex/config.hpp"

#include <fmt/format.h>

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "medex/errors.hpp"

namespace medex {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void bad(std::string_view key, std::string_view value, std::string_view expected) {
  throw ValidationError(fmt::format("{}: invalid value '{}' (expected {})", key, value, expected));
}

template <typename T>
T parse_number(std::string_view key, std::string_view value) {
  T out{};
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc{} || ptr != end || value.empty()) {
    bad(key, value, std::is_integral_v<T> ? "a non-negative integer" : "a number");
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "true") return true;
  if (value == "false") return false;
  bad(key, value, "true or false");
}

std::vector<std::size_t> parse_list(std::string_view key, std::string_view value) {
  std::vector<std::size_t> out;
  while (!value.empty()) {
    const auto comma = value.find(',');
    out.push_back(parse_number<std::size_t>(key, trim(value.substr(0, comma))));
    if (comma == std::string_view::npos) break;
    value.remove_prefix(comma + 1);
  }
  return out;
}

struct Field {
  std::string key;
  std::function<void(ExperimentConfig&, std::string_view)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

// Builds a field for a numeric member reached through `access`.
template <typename T, typename Access>
Field numeric(std::string key, Access access) {
  return {key,
          [key, access](ExperimentConfig& c, std::string_view v) {
            access(c) = parse_number<T>(key, v);
          },
          [access](const ExperimentConfig& c) {
            return fmt::format("{}", access(const_cast<ExperimentConfig&>(c)));
          }};
}

template <typename Access>
Field boolean(std::string key, Access access) {
  return {key,
          [key, access](ExperimentConfig& c, std::string_view v) { access(c) = parse_bool(key, v); },
          [access](const ExperimentConfig& c) {
            return std::string(access(const_cast<ExperimentConfig&>(c)) ? "true" : "false");
          }};
}

const std::vector<Field>& fields() {
  using C = ExperimentConfig;
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back({"corpus.path",
                 [](C& c, std::string_view v) {
                   if (v.empty()) c.corpus_path.reset();
                   else c.corpus_path = std::filesystem::path(std::string(v));
                 },
                 [](const C& c) { return c.corpus_path ? c.corpus_path->string() : std::string(); }});
    f.push_back(numeric<std::size_t>("corpus.size", [](C& c) -> auto& { return c.corpus_size; }));
    f.push_back(numeric<std::uint64_t>("corpus.seed", [](C& c) -> auto& { return c.corpus_seed; }));
    f.push_back(numeric<std::size_t>("vocab.min_freq", [](C& c) -> auto& { return c.vocab_min_freq; }));
    f.push_back(numeric<std::size_t>("encoder.d_model", [](C& c) -> auto& { return c.encoder.d_model; }));
    f.push_back(numeric<std::size_t>("encoder.heads", [](C& c) -> auto& { return c.encoder.heads; }));
    f.push_back(numeric<std::size_t>("encoder.layers", [](C& c) -> auto& { return c.encoder.layers; }));
    f.push_back(numeric<std::size_t>("encoder.d_ff", [](C& c) -> auto& { return c.encoder.d_ff; }));
    f.push_back(numeric<std::size_t>("encoder.max_len", [](C& c) -> auto& { return c.encoder.max_len; }));
    f.push_back(numeric<double>("encoder.dropout_rate", [](C& c) -> auto& { return c.encoder.dropout_rate; }));
    f.push_back(numeric<std::uint64_t>("model.seed", [](C& c) -> auto& { return c.model_seed; }));
    f.push_back({"head",
                 [](C& c, std::string_view v) {
                   auto h = parse_head(v);
                   if (!h || *h == HeadKind::none) bad("head", v, "crf, span or seq2seq");
                   c.train.head = *h;
                 },
                 [](const C& c) { return std::string(head_name(c.train.head)); }});
    f.push_back(numeric<std::size_t>("head.span_max_width", [](C& c) -> auto& { return c.head.span_max_width; }));
    f.push_back(numeric<std::size_t>("head.span_width_dim", [](C& c) -> auto& { return c.head.span_width_dim; }));
    f.push_back(numeric<double>("head.span_neg_ratio", [](C& c) -> auto& { return c.head.span_neg_ratio; }));
    f.push_back(numeric<std::size_t>("head.tag_dim", [](C& c) -> auto& { return c.head.tag_dim; }));
    f.push_back(numeric<double>("train.learning_rate", [](C& c) -> auto& { return c.train.learning_rate; }));
    f.push_back(numeric<std::size_t>("train.steps", [](C& c) -> auto& { return c.train.steps; }));
    f.push_back(numeric<std::size_t>("train.batch_size", [](C& c) -> auto& { return c.train.batch_size; }));
    f.push_back(numeric<double>("train.lambda_re", [](C& c) -> auto& { return c.train.lambda_re; }));
    f.push_back(numeric<std::uint64_t>("train.seed", [](C& c) -> auto& { return c.train.seed; }));
    f.push_back(boolean("train.class_balanced", [](C& c) -> auto& { return c.train.class_balanced; }));
    f.push_back(numeric<double>("train.clip_norm", [](C& c) -> auto& { return c.train.clip_norm; }));
    f.push_back({"train.augment",
                 [](C& c, std::string_view v) {
                   auto a = parse_augment(v);
                   if (!a) bad("train.augment", v, "none, synonym or entity_mask");
                   c.train.augment = *a;
                 },
                 [](const C& c) { return std::string(augment_name(c.train.augment)); }});
    f.push_back(numeric<double>("train.augment_prob", [](C& c) -> auto& { return c.train.augment_prob; }));
    f.push_back(numeric<double>("pretrain.learning_rate", [](C& c) -> auto& { return c.pretrain.learning_rate; }));
    f.push_back(numeric<std::size_t>("pretrain.steps", [](C& c) -> auto& { return c.pretrain.steps; }));
    f.push_back(numeric<std::size_t>("pretrain.batch_size", [](C& c) -> auto& { return c.pretrain.batch_size; }));
    f.push_back(numeric<double>("pretrain.mask_prob", [](C& c) -> auto& { return c.pretrain.mask_prob; }));
    f.push_back(numeric<std::uint64_t>("pretrain.seed", [](C& c) -> auto& { return c.pretrain.seed; }));
    f.push_back(numeric<double>("pretrain.clip_norm", [](C& c) -> auto& { return c.pretrain.clip_norm; }));
    f.push_back({"curve.k_values",
                 [](C& c, std::string_view v) { c.curve.k_values = parse_list("curve.k_values", v); },
                 [](const C& c) { return fmt::format("{}", fmt::join(c.curve.k_values, ",")); }});
    f.push_back(numeric<std::size_t>("curve.seeds", [](C& c) -> auto& { return c.curve.seeds; }));
    f.push_back(numeric<std::size_t>("curve.threads", [](C& c) -> auto& { return c.curve.threads; }));
    f.push_back({"output.dir",
                 [](C& c, std::string_view v) {
                   if (v.empty()) bad("output.dir", v, "a directory path");
                   c.output_dir = std::filesystem::path(std::string(v));
                 },
                 [](const C& c) { return c.output_dir.string(); }});
    return f;
  }();
  return table;
}

}  // namespace

const std::vector<std::string>& ExperimentConfig::keys() {
  static const std::vector<std::string> out = [] {
    std::vector<std::string> k;
    for (const auto& f : fields()) k.push_back(f.key);
    return k;
  }();
  return out;
}

void ExperimentConfig::set(std::string_view key, std::string_view value) {
  value = trim(value);
  for (const auto& f : fields()) {
    if (f.key == key) {
      f.set(*this, value);
      return;
    }
  }
  throw ValidationError(fmt::format("{}: unknown configuration key", key));
}

void ExperimentConfig::validate() const {
  EncoderConfig probe = encoder;
  if (probe.vocab_size == 0) probe.vocab_size = Vocab::num_reserved + 1;
  probe.validate();
  head.validate();
  train.validate();
  pretrain.validate();
  CurveConfig c = curve;
  c.base = train;
  c.validate();
  if (vocab_min_freq == 0) throw ValidationError("vocab.min_freq must be positive");
}

std::string ExperimentConfig::resolved() const {
  std::string out;
  for (const auto& f : fields()) out += f.key + " = " + f.get(*this) + "\n";
  return out;
}

ExperimentConfig parse_config(std::string_view text, ExperimentConfig base) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError("expected 'key = value'", line_no);
    const auto key = trim(line.substr(0, eq));
    try {
      base.set(key, line.substr(eq + 1));
    } catch (const ValidationError& e) {
      throw ValidationError(fmt::format("line {}: {}", line_no, e.what()));
    }
  }
  return base;
}

ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), std::move(base));
}

}  // namespace medex
