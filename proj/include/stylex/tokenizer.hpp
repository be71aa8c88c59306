#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "stylex/errors.hpp"

namespace stylex {

// Corpus-built vocabulary for the desk-scale tokenizer: whole lowercase words
// plus "##c" character pieces as fallback for unseen words.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kCls = 1;
  static constexpr int kSep = 2;
  static constexpr int kUnk = 3;

  Vocabulary();

  static Vocabulary build(const std::vector<std::vector<std::string>>& word_lists);

  int size() const { return static_cast<int>(tokens_.size()); }
  const std::string& token(int id) const { return tokens_[static_cast<std::size_t>(id)]; }
  const std::vector<std::string>& tokens() const { return tokens_; }
  int lookup(const std::string& tok) const;  // -1 if absent
  bool initialized() const { return size() > kUnk + 1; }

  static Vocabulary from_tokens(std::vector<std::string> tokens);

 private:
  int add(const std::string& tok);
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

struct TokenPiece {
  int id;
  int word_index;  // -1 for special tokens
  std::string text;
};

struct Tokenization {
  std::vector<TokenPiece> pieces;
  bool truncated = false;
};

// Lowercases, wraps with [cls]/[sep], maps each word to itself when in the
// vocabulary and to character pieces otherwise. Truncates to max_seq_len
// total positions, keeping the trailing [sep].
Tokenization tokenize(const Vocabulary& vocab, const std::vector<std::string>& words,
                      int max_seq_len);

// Whitespace-splits text, then tokenizes the word list.
Tokenization tokenize(const Vocabulary& vocab, const std::string& text, int max_seq_len);

std::string to_lower(const std::string& s);
std::vector<std::string> split_whitespace(const std::string& text);

}  // namespace stylex
