#include "cvl/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>

namespace cvl {

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

void require_labels(const PredictionSet& preds, const char* op) {
  for (const Prediction& p : preds)
    if (!p.label)
      throw std::invalid_argument(std::string(op) + ": sample '" + p.id +
                                  "' has no label");
}

void require_unique_ids(const PredictionSet& preds, const std::string& where) {
  std::set<std::string> seen;
  for (const Prediction& p : preds)
    if (!seen.insert(p.id).second)
      throw std::invalid_argument(where + ": duplicate id '" + p.id + "'");
}

}  // namespace

double accuracy(const PredictionSet& preds, double threshold) {
  if (preds.empty()) throw std::invalid_argument("accuracy: empty prediction set");
  require_labels(preds, "accuracy");
  std::size_t correct = 0;
  for (const Prediction& p : preds) {
    const int predicted = p.score >= threshold ? 1 : 0;
    if (predicted == *p.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(preds.size());
}

double auroc(const PredictionSet& preds) {
  require_labels(preds, "auroc");
  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return preds[a].score < preds[b].score;
  });

  // 2x midranks stay integral, so the positive rank sum is exact and equals
  // the pairwise win/tie count identity.
  std::uint64_t n_pos = 0, n_neg = 0;
  std::uint64_t doubled_rank_sum_pos = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && preds[order[j]].score == preds[order[i]].score) ++j;
    const std::uint64_t doubled_midrank = static_cast<std::uint64_t>(i + j + 1);
    for (std::size_t k = i; k < j; ++k) {
      if (*preds[order[k]].label == 1) {
        ++n_pos;
        doubled_rank_sum_pos += doubled_midrank;
      } else {
        ++n_neg;
      }
    }
    i = j;
  }
  if (n_pos == 0 || n_neg == 0)
    throw std::domain_error("auroc undefined: only one class present");
  const std::uint64_t numerator2 = doubled_rank_sum_pos - n_pos * (n_pos + 1);
  return static_cast<double>(numerator2) / static_cast<double>(2 * n_pos * n_neg);
}

MetricsReport compute_metrics(const PredictionSet& preds, double threshold) {
  MetricsReport report;
  report.n = preds.size();
  for (const Prediction& p : preds) {
    if (!p.label) continue;
    if (*p.label == 1)
      ++report.n_pos;
    else
      ++report.n_neg;
  }
  report.accuracy = accuracy(preds, threshold);
  if (report.n_pos > 0 && report.n_neg > 0) report.auroc = auroc(preds);
  return report;
}

std::string format_metrics(const MetricsReport& report) {
  std::string line = "n " + std::to_string(report.n) + " pos " +
                     std::to_string(report.n_pos) + " neg " +
                     std::to_string(report.n_neg) + " accuracy " +
                     format_double(report.accuracy) + " auroc ";
  line += report.auroc ? format_double(*report.auroc) : "undefined";
  return line;
}

PredictionSet ensemble_average(const std::vector<PredictionSet>& sets) {
  if (sets.empty()) throw std::invalid_argument("ensemble: no prediction sets");
  for (const PredictionSet& s : sets) require_unique_ids(s, "ensemble");

  const PredictionSet& first = sets.front();
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < first.size(); ++i) index.emplace(first[i].id, i);

  PredictionSet out = first;
  for (std::size_t s = 1; s < sets.size(); ++s) {
    if (sets[s].size() != first.size()) {
      std::string missing;
      std::set<std::string> ids;
      for (const Prediction& p : sets[s]) ids.insert(p.id);
      for (const Prediction& p : first)
        if (!ids.count(p.id)) missing += missing.empty() ? p.id : ", " + p.id;
      throw std::invalid_argument("ensemble: prediction sets disagree on ids (" +
                                  (missing.empty() ? std::string("extra entries present")
                                                   : "missing: " + missing) + ")");
    }
    for (const Prediction& p : sets[s]) {
      auto it = index.find(p.id);
      if (it == index.end())
        throw std::invalid_argument("ensemble: prediction sets disagree on ids ('" +
                                    p.id + "' is not in the first set)");
      out[it->second].score += p.score;
      if (p.label) {
        if (out[it->second].label && *out[it->second].label != *p.label)
          throw std::invalid_argument("ensemble: conflicting labels for id '" +
                                      p.id + "'");
        out[it->second].label = p.label;
      }
    }
  }
  const double inv = 1.0 / static_cast<double>(sets.size());
  for (Prediction& p : out) p.score *= inv;
  return out;
}

PredictionSet load_predictions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path + ": cannot open for reading");
  PredictionSet preds;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    while (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1 && line.rfind("id,", 0) == 0) continue;  // header
    const std::string where = path + ":" + std::to_string(line_no);
    const std::size_t c1 = line.find(',');
    if (c1 == std::string::npos)
      throw std::runtime_error(where + ": expected 'id,proba[,label]'");
    const std::size_t c2 = line.find(',', c1 + 1);
    Prediction p;
    p.id = line.substr(0, c1);
    const std::string proba =
        c2 == std::string::npos ? line.substr(c1 + 1) : line.substr(c1 + 1, c2 - c1 - 1);
    const auto res = std::from_chars(proba.data(), proba.data() + proba.size(), p.score);
    if (res.ec != std::errc() || res.ptr != proba.data() + proba.size())
      throw std::runtime_error(where + ": bad proba value '" + proba + "'");
    if (!std::isfinite(p.score))
      throw std::runtime_error(where + ": proba must be finite");
    if (c2 != std::string::npos && c2 + 1 < line.size()) {
      const std::string label = line.substr(c2 + 1);
      if (label != "0" && label != "1")
        throw std::runtime_error(where + ": label must be 0 or 1, got '" + label + "'");
      p.label = label == "1" ? 1 : 0;
    }
    preds.push_back(std::move(p));
  }
  require_unique_ids(preds, path);
  return preds;
}

void save_predictions(const std::string& path, const PredictionSet& preds) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out << "id,proba,label\n";
  for (const Prediction& p : preds) {
    out << p.id << ',' << format_double(p.score) << ',';
    if (p.label) out << *p.label;
    out << '\n';
  }
}

}  // namespace cvl
