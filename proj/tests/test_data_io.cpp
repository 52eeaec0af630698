#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cvl/data.hpp"
#include "cvl/rng.hpp"

using namespace cvl;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("cvl_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

void spit(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

}  // namespace

TEST_CASE("dataset load: labels, test split, and validation errors") {
  TempDir dir;
  const std::string path = dir.file("data.jsonl");
  spit(path,
       "{\"id\":\"a\",\"text\":\"hello world\",\"label\":1}\n"
       "{\"id\":\"b\",\"text\":\"no label here\"}\n");
  const auto records = load_dataset(path);
  REQUIRE(records.size() == 2);
  CHECK(records[0].label == 1);
  CHECK_FALSE(records[1].label.has_value());
  CHECK(records[1].text == "no label here");

  spit(path, "{\"id\":\"a\",\"text\":\"x\"}\nnot json\n");
  try {
    load_dataset(path);
    FAIL("expected parse error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find(":2") != std::string::npos);
  }

  spit(path, "{\"id\":\"a\",\"text\":\"x\"}\n{\"id\":\"a\",\"text\":\"y\"}\n");
  try {
    load_dataset(path);
    FAIL("expected duplicate id error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("'a'") != std::string::npos);
  }

  spit(path, "{\"id\":\"a\",\"text\":\"x\",\"label\":2}\n");
  CHECK_THROWS_AS(load_dataset(path), std::runtime_error);
}

TEST_CASE("feature container: empty set, round trip, paper-scale record") {
  TempDir dir;
  const std::string path = dir.file("feat.bin");

  FeatureSet empty;
  empty.d_v = 4;
  empty.max_rois = 2;
  save_features(path, empty);
  const FeatureSet loaded_empty = load_features(path);
  CHECK(loaded_empty.records.empty());
  CHECK(loaded_empty.d_v == 4);

  Rng rng(31);
  FeatureSet set;
  set.d_v = 5;
  set.max_rois = 3;
  for (int i = 0; i < 4; ++i) {
    FeatureRecord rec;
    rec.id = "rec" + std::to_string(i);
    rec.roi_count = 1 + static_cast<std::size_t>(i % 3);
    for (std::size_t r = 0; r < rec.roi_count; ++r) {
      rec.boxes.insert(rec.boxes.end(), {0.0, 0.1, 0.5, 0.9});
      for (std::size_t d = 0; d < set.d_v; ++d)
        rec.roi_features.push_back(rng.normal());
    }
    for (std::size_t d = 0; d < set.d_v; ++d) rec.contextual.push_back(rng.normal());
    set.records.emplace(rec.id, rec);
  }
  save_features(path, set);
  const FeatureSet loaded = load_features(path);
  CHECK(loaded.records.size() == 4);
  CHECK(loaded.records.at("rec2").roi_features == set.records.at("rec2").roi_features);

  // write -> read -> write is byte identical
  const std::string again = dir.file("feat2.bin");
  FeatureSet reloaded = load_features(path);
  save_features(again, reloaded);
  CHECK(slurp(path) == slurp(again));

  // paper-scale record dims accepted
  FeatureSet big;
  big.d_v = 2048;
  big.max_rois = 100;
  FeatureRecord rec;
  rec.id = "full";
  rec.roi_count = 100;
  rec.boxes.assign(100 * 4, 0.0);
  for (std::size_t r = 0; r < 100; ++r) {
    rec.boxes[r * 4 + 2] = 1.0;
    rec.boxes[r * 4 + 3] = 1.0;
  }
  rec.roi_features.assign(100 * 2048, 0.25);
  rec.contextual.assign(2048, -1.5);
  big.records.emplace(rec.id, std::move(rec));
  const std::string big_path = dir.file("big.bin");
  save_features(big_path, big);
  const FeatureSet big_loaded = load_features(big_path);
  CHECK(big_loaded.records.at("full").roi_count == 100);
  CHECK(big_loaded.d_v == 2048);
}

TEST_CASE("feature container rejects malformed input") {
  TempDir dir;
  const std::string path = dir.file("feat.bin");

  spit(path, "XXXXXXXXjunk");
  try {
    load_features(path);
    FAIL("expected magic error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("magic") != std::string::npos);
  }

  FeatureSet set;
  set.d_v = 2;
  set.max_rois = 1;
  FeatureRecord rec;
  rec.id = "x";
  rec.roi_count = 1;
  rec.boxes = {0, 0, 1, 1};
  rec.roi_features = {1, 2};
  rec.contextual = {3, 4};
  set.records.emplace(rec.id, rec);
  save_features(path, set);

  std::string bytes = slurp(path);
  bytes.resize(bytes.size() - 3);  // truncate mid-record
  spit(path, bytes);
  try {
    load_features(path);
    FAIL("expected truncation error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("truncated") != std::string::npos);
  }

  // dims inconsistent with the container header
  FeatureSet bad = set;
  bad.records.at("x").contextual = {1, 2, 3};
  CHECK_THROWS_AS(save_features(dir.file("bad.bin"), bad), std::runtime_error);
}

TEST_CASE("feature container text variant reads hand-written fixtures") {
  TempDir dir;
  const std::string path = dir.file("feat.jsonl");
  spit(path,
       "{\"id\":\"a\",\"boxes\":[[0,0,0.5,0.5]],\"features\":[[1,2,3]],"
       "\"contextual\":[4,5,6]}\n");
  const FeatureSet set = load_features(path);
  CHECK(set.d_v == 3);
  CHECK(set.records.at("a").roi_features == std::vector<double>{1, 2, 3});
  CHECK(set.records.at("a").boxes == std::vector<double>{0, 0, 0.5, 0.5});
}

TEST_CASE("keyword and lexicon files round trip") {
  TempDir dir;
  const std::string kw_path = dir.file("kw.jsonl");
  KeywordFile file;
  file["a"] = {"dog", "zebra"};
  file["b"] = {};
  save_keywords(kw_path, file);
  const KeywordFile loaded = load_keywords(kw_path);
  CHECK(loaded == file);

  const std::string lex_path = dir.file("lex.txt");
  save_lexicon(lex_path, {"alpha", "beta"});
  CHECK(load_lexicon(lex_path) == std::set<std::string>{"alpha", "beta"});
}

TEST_CASE("synth_generate: XOR construction and exact sigma=0 prototypes") {
  SynthSpec spec = default_synth_spec(64, 99);
  spec.noise = 0.0;
  const SynthOutput out = synth_generate(spec);
  REQUIRE(out.dataset.size() == 64);

  std::set<std::string> keyword_words(spec.keywords.begin(), spec.keywords.end());
  for (const DatasetRecord& rec : out.dataset) {
    const FeatureRecord& feat = out.features.records.at(rec.id);
    const KeywordSet& kw = out.keywords.at(rec.id);
    const int k = kw.empty() ? 0 : 1;
    const bool is_a = feat.contextual == spec.proto_a;
    const bool is_b = feat.contextual == spec.proto_b;
    CHECK((is_a || is_b));
    const int v = is_a ? 1 : 0;
    CHECK(*rec.label == (k ^ v));
    // keyword in text iff k = 1
    bool has_kw = false;
    for (const std::string& w : split_words(rec.text))
      has_kw = has_kw || keyword_words.count(w) > 0;
    CHECK(has_kw == (k == 1));
  }
}

TEST_CASE("synth_generate: balance, coverage, and chance-level marginals") {
  SynthSpec spec = default_synth_spec(2000, 7);
  spec.noise = 0.0;
  const SynthOutput out = synth_generate(spec);

  std::size_t positives = 0;
  for (const DatasetRecord& rec : out.dataset) positives += *rec.label;
  // 3-sigma binomial bound around n/2
  const double sigma = std::sqrt(2000.0 * 0.25);
  CHECK(std::fabs(static_cast<double>(positives) - 1000.0) <= 3.0 * sigma);

  // every id appears in all three outputs exactly once
  CHECK(out.features.records.size() == 2000);
  CHECK(out.keywords.size() == 2000);
  for (const DatasetRecord& rec : out.dataset) {
    CHECK(out.features.records.count(rec.id) == 1);
    CHECK(out.keywords.count(rec.id) == 1);
  }

  // text channel alone is chance level: P(label=1 | k) ~ 0.5 for both k
  std::size_t n_k[2] = {0, 0}, pos_k[2] = {0, 0};
  for (const DatasetRecord& rec : out.dataset) {
    const int k = out.keywords.at(rec.id).empty() ? 0 : 1;
    ++n_k[k];
    pos_k[k] += *rec.label;
  }
  for (int k = 0; k < 2; ++k) {
    const double rate = static_cast<double>(pos_k[k]) / static_cast<double>(n_k[k]);
    const double bound = 3.0 * std::sqrt(0.25 / static_cast<double>(n_k[k]));
    CHECK(std::fabs(rate - 0.5) <= bound);
  }
}

TEST_CASE("synth_generate is byte-deterministic across calls") {
  TempDir dir;
  SynthSpec spec = default_synth_spec(50, 123);
  for (int round = 0; round < 2; ++round) {
    const SynthOutput out = synth_generate(spec);
    save_dataset(dir.file("d" + std::to_string(round) + ".jsonl"), out.dataset);
    save_features(dir.file("f" + std::to_string(round) + ".bin"), out.features);
    save_keywords(dir.file("k" + std::to_string(round) + ".jsonl"), out.keywords);
    save_lexicon(dir.file("v" + std::to_string(round) + ".txt"), out.vocab_words);
  }
  CHECK(slurp(dir.file("d0.jsonl")) == slurp(dir.file("d1.jsonl")));
  CHECK(slurp(dir.file("f0.bin")) == slurp(dir.file("f1.bin")));
  CHECK(slurp(dir.file("k0.jsonl")) == slurp(dir.file("k1.jsonl")));
  CHECK(slurp(dir.file("v0.txt")) == slurp(dir.file("v1.txt")));
}

TEST_CASE("synth_generate file-only mode hides the keyword bit from token ids") {
  SynthSpec spec = default_synth_spec(400, 17);
  spec.keyword_channel_file_only = true;
  const SynthOutput out = synth_generate(spec);

  // vocabulary excludes keywords and decoys
  const std::set<std::string> vocab(out.vocab_words.begin(), out.vocab_words.end());
  for (const std::string& w : spec.keywords) CHECK(vocab.count(w) == 0);
  for (const std::string& w : spec.decoys) CHECK(vocab.count(w) == 0);

  // every sample carries exactly one out-of-vocabulary word, keyword or decoy
  for (const DatasetRecord& rec : out.dataset) {
    std::size_t oov = 0;
    for (const std::string& w : split_words(rec.text)) oov += vocab.count(w) == 0;
    CHECK(oov == 1);
    const bool flagged = !out.keywords.at(rec.id).empty();
    // flagged samples carry a keyword, unflagged a decoy
    bool has_keyword = false;
    for (const std::string& w : split_words(rec.text))
      for (const std::string& kw : spec.keywords) has_keyword = has_keyword || w == kw;
    CHECK(has_keyword == flagged);
  }
}
