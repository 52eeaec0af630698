#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

namespace cvl {

// Reserved token ids.
inline constexpr int kPadId = 0;
inline constexpr int kClsId = 1;
inline constexpr int kSepId = 2;
inline constexpr int kMaskId = 3;
inline constexpr int kUnkId = 4;
inline constexpr int kReservedTokens = 5;

// Sembedding symbols: padding, ordinary token, keyword.
inline constexpr int kSymbolPad = 0;
inline constexpr int kSymbolWord = 1;
inline constexpr int kSymbolKeyword = 2;
inline constexpr std::size_t kSymbolCount = 3;

// Lowercases and splits on whitespace/punctuation. Shared by the tokenizer,
// keyword extraction, and vocabulary construction so surface forms always
// compare equal across the three.
std::vector<std::string> split_words(const std::string& text);

class Vocabulary {
 public:
  Vocabulary();

  // Words get dense ids in insertion order, after the reserved block.
  static Vocabulary from_words(const std::vector<std::string>& words);
  // Frequency-ranked (count desc, then lexicographic) vocabulary capped at
  // max_size total entries including the reserved block.
  static Vocabulary from_texts(const std::vector<std::string>& texts,
                               std::size_t max_size);

  int add(const std::string& word);          // idempotent, returns id
  int id_of(const std::string& word) const;  // kUnkId when absent
  bool contains(const std::string& word) const;
  std::size_t size() const { return words_.size() + kReservedTokens; }
  // Non-reserved words in id order (id = index + kReservedTokens).
  const std::vector<std::string>& words() const { return words_; }

 private:
  std::map<std::string, int> ids_;
  std::vector<std::string> words_;
};

struct TokenizedText {
  std::vector<int> token_ids;          // length T, PAD-padded
  std::vector<int> symbols;            // length T, each in {0,1,2}
  std::vector<double> attention_mask;  // 1 = real token, 0 = PAD
  std::vector<std::string> surfaces;   // original word per position, "" for PAD
};

// [CLS] w1 ... wn [SEP] PAD...; keeps the first max_len-2 words, unknown
// words map to UNK but retain their surface form. max_len >= 3.
TokenizedText tokenize(const std::string& text, const Vocabulary& vocab,
                       std::size_t max_len);

using KeywordSet = std::set<std::string>;
using KeywordFile = std::map<std::string, KeywordSet>;

// {w : w in tokens(text), w in noun_lexicon, w not in stopwords}.
KeywordSet extract_keywords(const std::string& text,
                            const std::set<std::string>& noun_lexicon,
                            const std::set<std::string>& stopwords);

// PAD -> 0, token whose surface form is a keyword -> 2, other real -> 1.
std::vector<int> assign_sembedding_symbols(const TokenizedText& tokens,
                                           const KeywordSet& keywords);

}  // namespace cvl
