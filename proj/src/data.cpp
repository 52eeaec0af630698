#include "cvl/data.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "cvl/rng.hpp"
#include "json.hpp"
#include "wire.hpp"

namespace cvl {

namespace {

using nlohmann::json;
using namespace cvl::wire;

std::ifstream open_in(const std::string& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw std::runtime_error(path + ": cannot open for reading");
  return in;
}

std::ofstream open_out(const std::string& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  return out;
}

json parse_line(const std::string& path, std::size_t line_no, const std::string& line) {
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw std::runtime_error(path + ":" + std::to_string(line_no) +
                             ": malformed record (not a JSON object)");
  return j;
}

std::string require_string(const json& j, const char* field, const std::string& where) {
  if (!j.contains(field) || !j[field].is_string())
    throw std::runtime_error(where + ": missing string field '" + field + "'");
  return j[field].get<std::string>();
}

constexpr char kFeatureMagic[8] = {'C', 'V', 'L', 'F', 'E', 'A', 'T', '1'};
constexpr std::uint32_t kFeatureVersion = 1;

void check_record_dims(const FeatureRecord& rec, std::uint32_t d_v,
                       std::uint32_t max_rois, const std::string& where) {
  if (rec.roi_count > max_rois)
    throw std::runtime_error(where + ": record '" + rec.id + "' has " +
                             std::to_string(rec.roi_count) +
                             " ROIs, container max is " + std::to_string(max_rois));
  if (rec.boxes.size() != rec.roi_count * 4)
    throw std::runtime_error(where + ": record '" + rec.id + "' box block has " +
                             std::to_string(rec.boxes.size()) + " values, expected " +
                             std::to_string(rec.roi_count * 4));
  if (rec.roi_features.size() != rec.roi_count * d_v)
    throw std::runtime_error(where + ": record '" + rec.id + "' feature block has " +
                             std::to_string(rec.roi_features.size()) +
                             " values, expected " + std::to_string(rec.roi_count * d_v));
  if (rec.contextual.size() != d_v)
    throw std::runtime_error(where + ": record '" + rec.id +
                             "' contextual feature has " +
                             std::to_string(rec.contextual.size()) +
                             " values, expected " + std::to_string(d_v));
}

FeatureSet load_features_text(const std::string& path) {
  std::ifstream in = open_in(path);
  FeatureSet set;
  std::string line;
  std::size_t line_no = 0;
  bool have_dims = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(line_no);
    json j = parse_line(path, line_no, line);
    FeatureRecord rec;
    rec.id = require_string(j, "id", where);
    rec.contextual = j.at("contextual").get<std::vector<double>>();
    for (const auto& row : j.at("boxes"))
      for (const auto& v : row) rec.boxes.push_back(v.get<double>());
    for (const auto& row : j.at("features"))
      for (const auto& v : row) rec.roi_features.push_back(v.get<double>());
    rec.roi_count = j.at("boxes").size();
    if (!have_dims) {
      set.d_v = static_cast<std::uint32_t>(rec.contextual.size());
      set.max_rois = static_cast<std::uint32_t>(rec.roi_count);
      have_dims = true;
    }
    set.max_rois = std::max(set.max_rois, static_cast<std::uint32_t>(rec.roi_count));
    check_record_dims(rec, set.d_v, set.max_rois, where);
    if (!set.records.emplace(rec.id, std::move(rec)).second)
      throw std::runtime_error(where + ": duplicate id '" + j["id"].get<std::string>() + "'");
  }
  return set;
}

}  // namespace

std::vector<DatasetRecord> load_dataset(const std::string& path) {
  std::ifstream in = open_in(path);
  std::vector<DatasetRecord> records;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(line_no);
    json j = parse_line(path, line_no, line);
    DatasetRecord rec;
    rec.id = require_string(j, "id", where);
    rec.text = require_string(j, "text", where);
    if (j.contains("img")) rec.img = j["img"].get<std::string>();
    if (j.contains("label") && !j["label"].is_null()) {
      if (!j["label"].is_number_integer())
        throw std::runtime_error(where + ": label must be 0 or 1");
      const int label = j["label"].get<int>();
      if (label != 0 && label != 1)
        throw std::runtime_error(where + ": label must be 0 or 1, got " +
                                 std::to_string(label));
      rec.label = label;
    }
    if (!seen.insert(rec.id).second)
      throw std::runtime_error(where + ": duplicate id '" + rec.id + "'");
    records.push_back(std::move(rec));
  }
  return records;
}

void save_dataset(const std::string& path, const std::vector<DatasetRecord>& records) {
  std::ofstream out = open_out(path);
  for (const DatasetRecord& rec : records) {
    json j;
    j["id"] = rec.id;
    j["text"] = rec.text;
    if (rec.label) j["label"] = *rec.label;
    if (!rec.img.empty()) j["img"] = rec.img;
    out << j.dump() << '\n';
  }
}

FeatureSet load_features(const std::string& path) {
  {
    std::ifstream probe = open_in(path, std::ios::binary);
    char magic[8] = {};
    probe.read(magic, 8);
    if (probe.gcount() < 8 || std::memcmp(magic, kFeatureMagic, 8) != 0) {
      // JSONL variant for hand-written fixtures: sniff a leading '{'.
      if (probe.gcount() > 0 && magic[0] == '{') return load_features_text(path);
      throw std::runtime_error(path + ": not a feature container (bad magic)");
    }
  }
  std::ifstream in = open_in(path, std::ios::binary);
  in.seekg(8);
  FeatureSet set;
  const std::uint32_t version = get_u32(in, path);
  if (version != kFeatureVersion)
    throw std::runtime_error(path + ": unsupported feature container version " +
                             std::to_string(version));
  set.d_v = get_u32(in, path);
  set.max_rois = get_u32(in, path);
  const std::uint64_t count = get_u64(in, path);
  for (std::uint64_t r = 0; r < count; ++r) {
    FeatureRecord rec;
    const std::uint32_t id_len = get_u32(in, path);
    rec.id.resize(id_len);
    if (!in.read(rec.id.data(), id_len))
      throw std::runtime_error(path + ": truncated file");
    rec.roi_count = get_u32(in, path);
    get_f64s(in, path, rec.boxes, rec.roi_count * 4);
    get_f64s(in, path, rec.roi_features, rec.roi_count * set.d_v);
    get_f64s(in, path, rec.contextual, set.d_v);
    check_record_dims(rec, set.d_v, set.max_rois, path);
    const std::string id = rec.id;
    if (!set.records.emplace(id, std::move(rec)).second)
      throw std::runtime_error(path + ": duplicate id '" + id + "'");
  }
  return set;
}

void save_features(const std::string& path, const FeatureSet& set) {
  for (const auto& [id, rec] : set.records)
    check_record_dims(rec, set.d_v, set.max_rois, path);
  std::ofstream out = open_out(path, std::ios::binary);
  out.write(kFeatureMagic, 8);
  put_u32(out, kFeatureVersion);
  put_u32(out, set.d_v);
  put_u32(out, set.max_rois);
  put_u64(out, set.records.size());
  for (const auto& [id, rec] : set.records) {
    put_u32(out, static_cast<std::uint32_t>(id.size()));
    out.write(id.data(), static_cast<std::streamsize>(id.size()));
    put_u32(out, static_cast<std::uint32_t>(rec.roi_count));
    put_f64s(out, rec.boxes);
    put_f64s(out, rec.roi_features);
    put_f64s(out, rec.contextual);
  }
  if (!out) throw std::runtime_error(path + ": write failed");
}

void save_features_text(const std::string& path, const FeatureSet& set) {
  std::ofstream out = open_out(path);
  for (const auto& [id, rec] : set.records) {
    json j;
    j["id"] = id;
    json boxes = json::array(), feats = json::array();
    for (std::size_t r = 0; r < rec.roi_count; ++r) {
      boxes.push_back(std::vector<double>(rec.boxes.begin() + static_cast<std::ptrdiff_t>(r * 4),
                                          rec.boxes.begin() + static_cast<std::ptrdiff_t>((r + 1) * 4)));
      feats.push_back(std::vector<double>(
          rec.roi_features.begin() + static_cast<std::ptrdiff_t>(r * set.d_v),
          rec.roi_features.begin() + static_cast<std::ptrdiff_t>((r + 1) * set.d_v)));
    }
    j["boxes"] = boxes;
    j["features"] = feats;
    j["contextual"] = rec.contextual;
    out << j.dump() << '\n';
  }
}

std::vector<std::string> load_lexicon_list(const std::string& path) {
  std::ifstream in = open_in(path);
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty()) words.push_back(line);
  }
  return words;
}

std::set<std::string> load_lexicon(const std::string& path) {
  const std::vector<std::string> words = load_lexicon_list(path);
  return {words.begin(), words.end()};
}

void save_lexicon(const std::string& path, const std::vector<std::string>& words) {
  std::ofstream out = open_out(path);
  for (const std::string& w : words) out << w << '\n';
}

KeywordFile load_keywords(const std::string& path) {
  std::ifstream in = open_in(path);
  KeywordFile file;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(line_no);
    json j = parse_line(path, line_no, line);
    const std::string id = require_string(j, "id", where);
    if (!j.contains("keywords") || !j["keywords"].is_array())
      throw std::runtime_error(where + ": missing list field 'keywords'");
    KeywordSet set;
    for (const auto& k : j["keywords"]) {
      // Normalized like every other surface form.
      for (const std::string& w : split_words(k.get<std::string>())) set.insert(w);
    }
    if (file.count(id))
      throw std::runtime_error(where + ": duplicate id '" + id + "'");
    file.emplace(id, std::move(set));
  }
  return file;
}

void save_keywords(const std::string& path, const KeywordFile& keywords) {
  std::ofstream out = open_out(path);
  for (const auto& [id, set] : keywords) {
    json j;
    j["id"] = id;
    j["keywords"] = std::vector<std::string>(set.begin(), set.end());
    out << j.dump() << '\n';
  }
}

SynthSpec default_synth_spec(std::size_t n_samples, std::uint64_t seed,
                             std::uint64_t proto_seed) {
  SynthSpec spec;
  spec.n_samples = n_samples;
  spec.seed = seed;
  spec.keywords = {"zebra", "quasar", "walrus", "meteor"};
  spec.decoys = {"fjord", "prism", "tundra", "gecko"};
  redraw_prototypes(spec, proto_seed);
  return spec;
}

void redraw_prototypes(SynthSpec& spec, std::uint64_t proto_seed) {
  Rng rng(proto_seed);
  spec.proto_a.resize(spec.d_v);
  spec.proto_b.resize(spec.d_v);
  for (double& x : spec.proto_a) x = rng.normal();
  for (double& x : spec.proto_b) x = rng.normal();
}

SynthOutput synth_generate(const SynthSpec& spec) {
  if (spec.keywords.empty())
    throw std::invalid_argument("synth_generate: keyword set K is empty");
  if (spec.keyword_channel_file_only && spec.decoys.empty())
    throw std::invalid_argument("synth_generate: file-only mode needs decoys");
  if (spec.proto_a.size() != spec.d_v || spec.proto_b.size() != spec.d_v)
    throw std::invalid_argument("synth_generate: prototypes must have length d_v");
  if (spec.proto_a == spec.proto_b)
    throw std::invalid_argument("synth_generate: prototypes A and B must differ");
  if (spec.noise < 0.0)
    throw std::invalid_argument("synth_generate: noise must be >= 0");
  if (spec.max_tokens < 6)
    throw std::invalid_argument("synth_generate: max_tokens must be >= 6");

  std::vector<std::string> fillers;
  fillers.reserve(spec.filler_vocab);
  for (std::size_t i = 0; i < spec.filler_vocab; ++i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "w%03zu", i);
    fillers.emplace_back(buf);
  }

  SynthOutput out;
  out.features.d_v = static_cast<std::uint32_t>(spec.d_v);
  out.features.max_rois = static_cast<std::uint32_t>(spec.rois);
  out.vocab_words = fillers;
  if (!spec.keyword_channel_file_only)
    out.vocab_words.insert(out.vocab_words.end(), spec.keywords.begin(),
                           spec.keywords.end());

  // Keep sentences short of the token budget: CLS + words + SEP must fit.
  const std::size_t max_words =
      std::min<std::size_t>(8, spec.max_tokens - 3);

  Rng rng(spec.seed);
  for (std::size_t i = 0; i < spec.n_samples; ++i) {
    char idbuf[24];
    std::snprintf(idbuf, sizeof idbuf, "s%05zu", i);
    const std::string id = idbuf;

    const int label = rng.bernoulli(spec.positive_rate) ? 1 : 0;
    const int k = rng.bernoulli(0.5) ? 1 : 0;
    const int v = k ^ label;  // label == k XOR v

    const std::size_t n_words = 3 + rng.below(max_words - 2);
    std::vector<std::string> words(n_words);
    for (std::string& w : words) w = fillers[rng.below(fillers.size())];

    KeywordSet sample_keywords;
    if (spec.keyword_channel_file_only) {
      const std::string& special =
          k ? spec.keywords[rng.below(spec.keywords.size())]
            : spec.decoys[rng.below(spec.decoys.size())];
      words.insert(words.begin() + static_cast<std::ptrdiff_t>(rng.below(n_words + 1)),
                   special);
      if (k) sample_keywords.insert(special);
    } else if (k) {
      const std::string& kw = spec.keywords[rng.below(spec.keywords.size())];
      words.insert(words.begin() + static_cast<std::ptrdiff_t>(rng.below(n_words + 1)), kw);
      sample_keywords.insert(kw);
    }

    std::string text;
    for (std::size_t w = 0; w < words.size(); ++w) {
      if (w) text += ' ';
      text += words[w];
    }

    DatasetRecord rec;
    rec.id = id;
    rec.text = text;
    rec.label = label;
    rec.img = "img/" + id + ".png";
    out.dataset.push_back(std::move(rec));

    FeatureRecord feat;
    feat.id = id;
    feat.roi_count = spec.rois;
    feat.boxes.reserve(spec.rois * 4);
    for (std::size_t r = 0; r < spec.rois; ++r) {
      const double x1 = rng.uniform(0.0, 0.5), y1 = rng.uniform(0.0, 0.5);
      const double x2 = x1 + rng.uniform(0.0, 0.5), y2 = y1 + rng.uniform(0.0, 0.5);
      feat.boxes.insert(feat.boxes.end(), {x1, y1, x2, y2});
    }
    feat.roi_features.resize(spec.rois * spec.d_v);
    for (double& x : feat.roi_features) x = rng.normal();
    const std::vector<double>& proto = v ? spec.proto_a : spec.proto_b;
    feat.contextual.resize(spec.d_v);
    for (std::size_t d = 0; d < spec.d_v; ++d)
      feat.contextual[d] = proto[d] + (spec.noise > 0.0 ? rng.normal(0.0, spec.noise) : 0.0);
    out.features.records.emplace(id, std::move(feat));

    out.keywords.emplace(id, std::move(sample_keywords));
  }
  return out;
}

}  // namespace cvl
