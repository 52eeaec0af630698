#pragma once

#include <string>

#include "cvl/optimizer.hpp"

namespace cvl {

// Flat key=value run configuration. Files hold one `key = value` per line
// ('#' starts a comment); command-line flags override file values. Unknown
// keys are rejected.
struct RunConfig {
  ModelConfig model;  // vocab_size is filled from the vocabulary at run time
  TrainConfig train;
  std::size_t max_vocab = 5000;

  std::string train_data, train_features, train_keywords;
  std::string val_data, val_features, val_keywords;
  std::string data, features, keywords;  // predict/eval split
  std::string vocab;                     // lexicon file; built from data when empty
  std::string noun_lexicon, stopwords;   // keyword-extraction heuristic inputs
  std::string checkpoint, predictions, trace;

  // Parses and assigns one key. Throws std::invalid_argument on unknown keys
  // or malformed values.
  void apply(const std::string& key, const std::string& value);
};

void apply_config_file(RunConfig& config, const std::string& path);

}  // namespace cvl
