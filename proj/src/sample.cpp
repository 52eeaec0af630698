#include "cvl/sample.hpp"

#include <stdexcept>

namespace cvl {

VisualFeatures to_visual_features(const FeatureRecord& rec, std::size_t max_rois,
                                  std::size_t d_v) {
  if (rec.contextual.size() != d_v)
    throw std::invalid_argument("features for '" + rec.id + "': feature dim " +
                                std::to_string(rec.contextual.size()) +
                                " does not match configured " + std::to_string(d_v));
  const std::size_t r = std::min(rec.roi_count, max_rois);
  for (std::size_t i = 0; i < r; ++i) {
    const double x1 = rec.boxes[i * 4 + 0], y1 = rec.boxes[i * 4 + 1];
    const double x2 = rec.boxes[i * 4 + 2], y2 = rec.boxes[i * 4 + 3];
    if (!(0.0 <= x1 && x1 <= x2 && x2 <= 1.0 && 0.0 <= y1 && y1 <= y2 && y2 <= 1.0))
      throw std::invalid_argument("features for '" + rec.id + "': box " +
                                  std::to_string(i) +
                                  " is not normalized corner geometry");
  }

  VisualFeatures vf;
  std::vector<double> rois(max_rois * d_v, 0.0);
  std::vector<double> boxes(max_rois * 4, 0.0);
  std::copy(rec.roi_features.begin(), rec.roi_features.begin() + static_cast<std::ptrdiff_t>(r * d_v),
            rois.begin());
  std::copy(rec.boxes.begin(), rec.boxes.begin() + static_cast<std::ptrdiff_t>(r * 4),
            boxes.begin());
  vf.roi_features = Tensor::from_data({max_rois, d_v}, std::move(rois));
  vf.boxes = Tensor::from_data({max_rois, 4}, std::move(boxes));
  vf.contextual = Tensor::from_data({1, d_v}, rec.contextual);
  vf.roi_mask.assign(max_rois, 0.0);
  for (std::size_t i = 0; i < r; ++i) vf.roi_mask[i] = 1.0;
  return vf;
}

KeywordSet keywords_for(const std::string& id, const std::string& text,
                        const KeywordSources& sources) {
  if (sources.file) {
    auto it = sources.file->find(id);
    if (it != sources.file->end()) return it->second;
  }
  if (sources.noun_lexicon) {
    static const std::set<std::string> kNoStopwords;
    return extract_keywords(text, *sources.noun_lexicon,
                            sources.stopwords ? *sources.stopwords : kNoStopwords);
  }
  return {};
}

std::vector<MemeSample> build_samples(const std::vector<DatasetRecord>& records,
                                      const FeatureSet& features,
                                      const KeywordSources& keyword_sources,
                                      const Vocabulary& vocab,
                                      std::size_t max_tokens, std::size_t max_rois) {
  std::vector<MemeSample> samples;
  samples.reserve(records.size());
  for (const DatasetRecord& rec : records) {
    auto it = features.records.find(rec.id);
    if (it == features.records.end())
      throw std::invalid_argument("no features for dataset id '" + rec.id + "'");
    MemeSample s;
    s.id = rec.id;
    s.label = rec.label;
    s.tokens = tokenize(rec.text, vocab, max_tokens);
    const KeywordSet keywords = keywords_for(rec.id, rec.text, keyword_sources);
    s.tokens.symbols = assign_sembedding_symbols(s.tokens, keywords);
    s.visual = to_visual_features(it->second, max_rois, features.d_v);
    samples.push_back(std::move(s));
  }
  return samples;
}

}  // namespace cvl
