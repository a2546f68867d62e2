#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "medex/encoder.hpp"
#include "medex/fewshot.hpp"
#include "medex/model.hpp"
#include "medex/training.hpp"

namespace medex {

// Everything one experiment needs. Serialized as flat "key = value" lines;
// '#' starts a comment.
struct ExperimentConfig {
  // Corpus: a directory written by gen-corpus, or the generator.
  std::optional<std::filesystem::path> corpus_path;
  std::size_t corpus_size = 1000;
  std::uint64_t corpus_seed = 0;
  std::size_t vocab_min_freq = 2;

  EncoderConfig encoder;
  std::uint64_t model_seed = 0;
  HeadConfig head;
  TrainConfig train;
  PretrainConfig pretrain;
  CurveConfig curve;
  std::filesystem::path output_dir = "out";

  // Sets one key from its textual value; ValidationError names the key.
  void set(std::string_view key, std::string_view value);
  void validate() const;
  // Every key in a fixed order, one per line.
  std::string resolved() const;

  static const std::vector<std::string>& keys();
};

// Parses "key = value" lines, applying each on top of `base`.
ExperimentConfig parse_config(std::string_view text, ExperimentConfig base = {});
ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base = {});

}  // namespace medex
