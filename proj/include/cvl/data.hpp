#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cvl/text.hpp"

namespace cvl {

struct DatasetRecord {
  std::string id;
  std::string text;
  std::optional<int> label;  // 0/1; absent for test splits
  std::string img;           // unused when features come from files
};

// One line of JSON per record: {"id": ..., "text": ..., "label": ..., "img": ...}.
std::vector<DatasetRecord> load_dataset(const std::string& path);
void save_dataset(const std::string& path, const std::vector<DatasetRecord>& records);

struct FeatureRecord {
  std::string id;
  std::size_t roi_count = 0;         // R
  std::vector<double> boxes;         // R x 4, corners (x1, y1, x2, y2) in [0,1]
  std::vector<double> roi_features;  // R x d_v
  std::vector<double> contextual;    // d_v
};

struct FeatureSet {
  std::uint32_t d_v = 0;
  std::uint32_t max_rois = 0;
  std::map<std::string, FeatureRecord> records;  // id-ordered, canonical
};

// Binary container by default (magic-sniffed); a JSONL variant with the same
// fields is accepted for hand-written fixtures. Layout in docs/FORMATS.md.
FeatureSet load_features(const std::string& path);
void save_features(const std::string& path, const FeatureSet& set);
void save_features_text(const std::string& path, const FeatureSet& set);

// One lowercase word per line, UTF-8. Blank lines skipped.
std::vector<std::string> load_lexicon_list(const std::string& path);
std::set<std::string> load_lexicon(const std::string& path);
void save_lexicon(const std::string& path, const std::vector<std::string>& words);

// One record per line: {"id": ..., "keywords": [...]}.
KeywordFile load_keywords(const std::string& path);
void save_keywords(const std::string& path, const KeywordFile& keywords);

// Synthetic two-channel benchmark. Per sample, a text bit k (keyword present)
// and a visual bit v (contextual prototype A vs B) are drawn and the label is
// k XOR v, so neither channel alone predicts the label.
struct SynthSpec {
  std::size_t n_samples = 2000;
  std::size_t filler_vocab = 40;  // number of non-keyword words
  std::size_t max_tokens = 24;
  std::size_t rois = 8;
  std::size_t d_v = 32;
  std::vector<std::string> keywords;  // K; one appears in the text iff k = 1
  std::vector<std::string> decoys;    // file-only mode stand-ins for k = 0
  std::vector<double> proto_a;        // length d_v, contextual mean for v = 1
  std::vector<double> proto_b;        // length d_v, contextual mean for v = 0
  double noise = 0.1;                 // sigma on the contextual feature
  std::uint64_t seed = 7;
  double positive_rate = 0.5;         // class-balance target
  // When true the keyword bit is carried only by the keyword file: texts get
  // a keyword (k=1) or a decoy (k=0) in a random slot, and neither group is
  // part of the emitted vocabulary, so both tokenize to UNK.
  bool keyword_channel_file_only = false;
};

struct SynthOutput {
  std::vector<DatasetRecord> dataset;
  FeatureSet features;
  KeywordFile keywords;
  std::vector<std::string> vocab_words;
};

// Prototypes are drawn from proto_seed so several splits (train/val/test)
// can share them while differing in sample seed.
SynthSpec default_synth_spec(std::size_t n_samples, std::uint64_t seed,
                             std::uint64_t proto_seed = 1234);

// Redraws proto_a/proto_b for the spec's current d_v.
void redraw_prototypes(SynthSpec& spec, std::uint64_t proto_seed);

SynthOutput synth_generate(const SynthSpec& spec);

}  // namespace cvl
