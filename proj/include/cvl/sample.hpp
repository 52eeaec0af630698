#pragma once

#include <optional>

#include "cvl/data.hpp"
#include "cvl/embedding.hpp"
#include "cvl/text.hpp"

namespace cvl {

// One <image, text> pair ready for the model.
struct MemeSample {
  std::string id;
  TokenizedText tokens;
  VisualFeatures visual;
  std::optional<int> label;
};

// Pads/truncates a feature record to max_rois rows and validates box
// geometry. d_v must match the record.
VisualFeatures to_visual_features(const FeatureRecord& rec, std::size_t max_rois,
                                  std::size_t d_v);

struct KeywordSources {
  const KeywordFile* file = nullptr;              // per-id override when present
  const std::set<std::string>* noun_lexicon = nullptr;
  const std::set<std::string>* stopwords = nullptr;
};

KeywordSet keywords_for(const std::string& id, const std::string& text,
                        const KeywordSources& sources);

std::vector<MemeSample> build_samples(const std::vector<DatasetRecord>& records,
                                      const FeatureSet& features,
                                      const KeywordSources& keyword_sources,
                                      const Vocabulary& vocab,
                                      std::size_t max_tokens, std::size_t max_rois);

}  // namespace cvl
