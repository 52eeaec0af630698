#include "cvl/text.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>
#include <unordered_map>

namespace cvl {

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> words;
  std::string current;
  for (unsigned char ch : text) {
    if (std::isalnum(ch)) {
      current.push_back(static_cast<char>(std::tolower(ch)));
    } else if (!current.empty()) {
      words.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) words.push_back(std::move(current));
  return words;
}

Vocabulary::Vocabulary() = default;

Vocabulary Vocabulary::from_words(const std::vector<std::string>& words) {
  Vocabulary v;
  for (const std::string& w : words) v.add(w);
  return v;
}

Vocabulary Vocabulary::from_texts(const std::vector<std::string>& texts,
                                  std::size_t max_size) {
  std::unordered_map<std::string, std::size_t> counts;
  for (const std::string& t : texts)
    for (const std::string& w : split_words(t)) ++counts[w];
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocabulary v;
  for (const auto& [word, count] : ranked) {
    (void)count;
    if (v.size() >= max_size) break;
    v.add(word);
  }
  return v;
}

int Vocabulary::add(const std::string& word) {
  auto it = ids_.find(word);
  if (it != ids_.end()) return it->second;
  const int id = static_cast<int>(words_.size()) + kReservedTokens;
  ids_.emplace(word, id);
  words_.push_back(word);
  return id;
}

int Vocabulary::id_of(const std::string& word) const {
  auto it = ids_.find(word);
  return it == ids_.end() ? kUnkId : it->second;
}

bool Vocabulary::contains(const std::string& word) const {
  return ids_.count(word) != 0;
}

TokenizedText tokenize(const std::string& text, const Vocabulary& vocab,
                       std::size_t max_len) {
  if (max_len < 3)
    throw std::invalid_argument("tokenize: max_len must be >= 3, got " +
                                std::to_string(max_len));
  std::vector<std::string> words = split_words(text);
  if (words.size() > max_len - 2) words.resize(max_len - 2);

  TokenizedText out;
  out.token_ids.assign(max_len, kPadId);
  out.symbols.assign(max_len, kSymbolPad);
  out.attention_mask.assign(max_len, 0.0);
  out.surfaces.assign(max_len, "");

  std::size_t pos = 0;
  auto put = [&](int id, const std::string& surface) {
    out.token_ids[pos] = id;
    out.symbols[pos] = kSymbolWord;
    out.attention_mask[pos] = 1.0;
    out.surfaces[pos] = surface;
    ++pos;
  };
  put(kClsId, "[CLS]");
  for (const std::string& w : words) put(vocab.id_of(w), w);
  put(kSepId, "[SEP]");
  return out;
}

KeywordSet extract_keywords(const std::string& text,
                            const std::set<std::string>& noun_lexicon,
                            const std::set<std::string>& stopwords) {
  KeywordSet keywords;
  for (const std::string& w : split_words(text))
    if (noun_lexicon.count(w) && !stopwords.count(w)) keywords.insert(w);
  return keywords;
}

std::vector<int> assign_sembedding_symbols(const TokenizedText& tokens,
                                           const KeywordSet& keywords) {
  std::vector<int> symbols(tokens.token_ids.size(), kSymbolPad);
  for (std::size_t i = 0; i < tokens.token_ids.size(); ++i) {
    if (tokens.attention_mask[i] == 0.0) continue;
    symbols[i] = keywords.count(tokens.surfaces[i]) ? kSymbolKeyword : kSymbolWord;
  }
  return symbols;
}

}  // namespace cvl
