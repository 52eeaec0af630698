#pragma once

#include <optional>
#include <string>
#include <vector>

namespace cvl {

struct Prediction {
  std::string id;
  double score = 0.0;  // positive-class probability in [0, 1]
  std::optional<int> label;
};

using PredictionSet = std::vector<Prediction>;

struct MetricsReport {
  double accuracy = 0.0;
  std::optional<double> auroc;  // absent when only one class is present
  std::size_t n = 0, n_pos = 0, n_neg = 0;
};

// Threshold rule: score >= threshold predicts positive.
double accuracy(const PredictionSet& preds, double threshold = 0.5);

// Probability a random positive outranks a random negative, ties credited
// 0.5. Rank-statistic implementation with integer numerators, so it matches
// the quadratic pairwise definition bit for bit. Throws std::domain_error
// when only one class is present.
double auroc(const PredictionSet& preds);

MetricsReport compute_metrics(const PredictionSet& preds, double threshold = 0.5);
std::string format_metrics(const MetricsReport& report);

// Unweighted per-id mean of scores; all sets must cover the same ids, labels
// are carried through and must agree where present.
PredictionSet ensemble_average(const std::vector<PredictionSet>& sets);

// CSV with header "id,proba,label"; the label field is empty for unlabeled
// rows. Scores are printed with shortest round-trip formatting.
PredictionSet load_predictions(const std::string& path);
void save_predictions(const std::string& path, const PredictionSet& preds);

// Shortest decimal form that parses back to exactly the same double.
std::string format_double(double v);

}  // namespace cvl
