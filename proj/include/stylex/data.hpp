#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "stylex/tensor.hpp"
#include "stylex/tokenizer.hpp"

namespace stylex {

// A named binary style with its word-level class arity.
struct StyleTask {
  std::string name;
  int d_l_word = 1;
  std::pair<std::string, std::string> sentence_labels;  // positive label first
  std::vector<int> positive_word_classes{0};

  void validate() const;

  // The eight built-in styles. Politeness and sentiment carry two word-level
  // classes; the remaining styles carry one.
  static StyleTask builtin(const std::string& name);
  static const std::vector<std::string>& builtin_names();
};

enum class Provenance { human, pseudo, none };

std::string provenance_name(Provenance p);
Provenance provenance_from_name(const std::string& s);

struct AnnotatedSentence {
  std::string id;
  std::vector<std::string> words;
  // One entry per word when present. Human provenance: a single score in
  // [-1, 1]. Pseudo provenance: d_l_word per-class scores in [0, 1].
  std::vector<std::vector<double>> word_scores;
  int sentence_label = 0;
  Provenance provenance = Provenance::none;

  bool has_scores() const { return !word_scores.empty(); }
  bool operator==(const AnnotatedSentence&) const = default;
};

struct TokenBatch {
  int batch = 0;
  int seq = 0;
  int d = 0;
  std::vector<int> token_ids;         // batch*seq
  Tensor attention_mask;              // (batch, seq), 1 real / 0 pad
  std::vector<int> word_index;        // batch*seq, -1 for special/pad
  Tensor word_targets;                // (batch, seq, d)
  Tensor loss_active;                 // (batch, seq), 1 where targets apply
  std::vector<int> sentence_targets;  // batch
};

struct LexiconDictionary {
  std::string style_name;
  std::set<std::string> entries;
};

// JSONL loader. Fields: words (required), label (required), and optional id,
// text, word_scores, provenance.
std::vector<AnnotatedSentence> load_corpus(const std::string& path, const StyleTask& task);
void serialize_corpus(const std::vector<AnnotatedSentence>& corpus, const std::string& path);

// Maps a human perception score in [-1, 1] onto per-class soft targets:
// sign split for d=2, absolute value for d=1.
std::vector<double> score_to_target(double score, int d_l_word);

// Per-token targets for one tokenized sentence: each subword inherits its
// word's target vector; special tokens are excluded from the loss.
struct AlignedRow {
  std::vector<double> word_targets;  // seq*d
  std::vector<double> loss_active;   // seq
};
AlignedRow align_annotations(const AnnotatedSentence& sentence,
                             const Tokenization& tokenization, const StyleTask& task);

TokenBatch make_token_batch(const std::vector<const AnnotatedSentence*>& sentences,
                            const StyleTask& task, const Vocabulary& vocab,
                            int max_seq_len);
TokenBatch make_token_batch(const std::vector<AnnotatedSentence>& sentences,
                            const StyleTask& task, const Vocabulary& vocab,
                            int max_seq_len);

LexiconDictionary load_lexicon(const std::string& path);

// Returns copies with word scores and provenance removed.
std::vector<AnnotatedSentence> strip_word_scores(const std::vector<AnnotatedSentence>& corpus);

}  // namespace stylex
