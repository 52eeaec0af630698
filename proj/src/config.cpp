#include "cvl/config.hpp"

#include <charconv>
#include <fstream>
#include <stdexcept>

namespace cvl {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

std::size_t parse_size(const std::string& key, const std::string& value) {
  std::size_t out = 0;
  const auto res = std::from_chars(value.data(), value.data() + value.size(), out);
  if (res.ec != std::errc() || res.ptr != value.data() + value.size())
    throw std::invalid_argument("config: " + key + ": expected a non-negative integer, got '" +
                                value + "'");
  return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  return parse_size(key, value);
}

double parse_double(const std::string& key, const std::string& value) {
  double out = 0.0;
  const auto res = std::from_chars(value.data(), value.data() + value.size(), out);
  if (res.ec != std::errc() || res.ptr != value.data() + value.size())
    throw std::invalid_argument("config: " + key + ": expected a number, got '" +
                                value + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true" || value == "yes") return true;
  if (value == "0" || value == "false" || value == "no") return false;
  throw std::invalid_argument("config: " + key + ": expected a boolean, got '" +
                              value + "'");
}

}  // namespace

void RunConfig::apply(const std::string& key, const std::string& value) {
  // model
  if (key == "hidden") model.hidden = parse_size(key, value);
  else if (key == "heads") model.heads = parse_size(key, value);
  else if (key == "layers_single") model.layers_single = parse_size(key, value);
  else if (key == "layers_text") model.layers_text = parse_size(key, value);
  else if (key == "layers_visual") model.layers_visual = parse_size(key, value);
  else if (key == "layers_co") model.layers_co = parse_size(key, value);
  else if (key == "max_tokens") model.max_tokens = parse_size(key, value);
  else if (key == "max_rois") model.max_rois = parse_size(key, value);
  else if (key == "feature_dim") model.feature_dim = parse_size(key, value);
  else if (key == "ablation") model.ablation = ablation_from_string(value);
  else if (key == "freeze_sembedding") model.freeze_sembedding = parse_bool(key, value);
  else if (key == "max_vocab") max_vocab = parse_size(key, value);
  // training
  else if (key == "seed") train.seed = parse_u64(key, value);
  else if (key == "batch_size") train.batch_size = parse_size(key, value);
  else if (key == "lr_dual") train.lr_dual = parse_double(key, value);
  else if (key == "lr_single") train.lr_single = parse_double(key, value);
  else if (key == "warmup_steps") train.warmup_steps = parse_size(key, value);
  else if (key == "total_steps") train.total_steps = parse_size(key, value);
  else if (key == "augment_prob") train.augment_prob = parse_double(key, value);
  else if (key == "log_every") train.log_every = parse_size(key, value);
  else if (key == "eval_every") train.eval_every = parse_size(key, value);
  else if (key == "checkpoint_every") train.checkpoint_every = parse_size(key, value);
  // paths
  else if (key == "train_data") train_data = value;
  else if (key == "train_features") train_features = value;
  else if (key == "train_keywords") train_keywords = value;
  else if (key == "val_data") val_data = value;
  else if (key == "val_features") val_features = value;
  else if (key == "val_keywords") val_keywords = value;
  else if (key == "data") data = value;
  else if (key == "features") features = value;
  else if (key == "keywords") keywords = value;
  else if (key == "vocab") vocab = value;
  else if (key == "noun_lexicon") noun_lexicon = value;
  else if (key == "stopwords") stopwords = value;
  else if (key == "checkpoint") checkpoint = value;
  else if (key == "predictions") predictions = value;
  else if (key == "trace") trace = value;
  else
    throw std::invalid_argument("config: unknown key '" + key + "'");
}

void apply_config_file(RunConfig& config, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path + ": cannot open for reading");
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::string entry = trim(line);
    if (entry.empty()) continue;
    const std::size_t eq = entry.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument(path + ":" + std::to_string(line_no) +
                                  ": expected key = value");
    try {
      config.apply(trim(entry.substr(0, eq)), trim(entry.substr(eq + 1)));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

}  // namespace cvl
