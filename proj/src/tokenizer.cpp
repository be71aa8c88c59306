#include "stylex/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <set>
#include <sstream>

namespace stylex {

std::string to_lower(const std::string& s) {
  std::string out = s;
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::vector<std::string> split_whitespace(const std::string& text) {
  std::vector<std::string> words;
  std::istringstream in(text);
  std::string w;
  while (in >> w) words.push_back(w);
  return words;
}

Vocabulary::Vocabulary() {
  add("[pad]");
  add("[cls]");
  add("[sep]");
  add("[unk]");
}

int Vocabulary::add(const std::string& tok) {
  auto it = index_.find(tok);
  if (it != index_.end()) return it->second;
  int id = static_cast<int>(tokens_.size());
  tokens_.push_back(tok);
  index_.emplace(tok, id);
  return id;
}

int Vocabulary::lookup(const std::string& tok) const {
  auto it = index_.find(tok);
  return it == index_.end() ? -1 : it->second;
}

Vocabulary Vocabulary::build(const std::vector<std::vector<std::string>>& word_lists) {
  std::map<std::string, long> freq;
  std::set<char> chars;
  for (const auto& words : word_lists) {
    for (const auto& w : words) {
      std::string lw = to_lower(w);
      if (lw.empty()) continue;
      ++freq[lw];
      for (char c : lw) chars.insert(c);
    }
  }
  std::vector<std::pair<std::string, long>> ordered(freq.begin(), freq.end());
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const auto& a, const auto& b) {
                     if (a.second != b.second) return a.second > b.second;
                     return a.first < b.first;
                   });
  Vocabulary v;
  for (char c : chars) v.add(std::string("##") + c);
  for (const auto& [w, n] : ordered) {
    (void)n;
    v.add(w);
  }
  return v;
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  if (tokens.size() < 4 || tokens[0] != "[pad]" || tokens[1] != "[cls]" ||
      tokens[2] != "[sep]" || tokens[3] != "[unk]") {
    throw ValidationError("vocabulary token list missing special tokens");
  }
  Vocabulary v;
  for (std::size_t i = 4; i < tokens.size(); ++i) v.add(tokens[i]);
  return v;
}

Tokenization tokenize(const Vocabulary& vocab, const std::vector<std::string>& words,
                      int max_seq_len) {
  if (max_seq_len < 2) throw RangeError("max_seq_len must allow [cls] and [sep]");
  Tokenization out;
  out.pieces.push_back({Vocabulary::kCls, -1, "[cls]"});
  for (std::size_t j = 0; j < words.size(); ++j) {
    std::string w = to_lower(words[j]);
    if (w.empty()) {
      throw AlignmentError("word " + std::to_string(j) + " produced zero subwords");
    }
    int id = vocab.lookup(w);
    if (id >= 0) {
      out.pieces.push_back({id, static_cast<int>(j), w});
    } else {
      for (char c : w) {
        std::string piece = std::string("##") + c;
        int pid = vocab.lookup(piece);
        if (pid < 0) pid = Vocabulary::kUnk;
        out.pieces.push_back({pid, static_cast<int>(j), piece});
      }
    }
  }
  if (static_cast<int>(out.pieces.size()) + 1 > max_seq_len) {
    out.pieces.resize(static_cast<std::size_t>(max_seq_len - 1));
    out.truncated = true;
  }
  out.pieces.push_back({Vocabulary::kSep, -1, "[sep]"});
  return out;
}

Tokenization tokenize(const Vocabulary& vocab, const std::string& text, int max_seq_len) {
  return tokenize(vocab, split_whitespace(text), max_seq_len);
}

}  // namespace stylex
