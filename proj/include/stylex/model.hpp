#pragma once

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "stylex/data.hpp"
#include "stylex/encoder.hpp"
#include "stylex/graph.hpp"

namespace stylex {

// ---------------------------------------------------------------------------
// Standalone building blocks, usable on plain tensors.

// Affine word head: (B,S,H) x (H,d) + (d) -> (B,S,d), no activation.
Tensor word_logits(const Tensor& hidden, const Tensor& w_word, const Tensor& b_word);

// Concatenates hidden states with word logits along the feature axis and
// takes the coordinatewise maximum over unmasked sequence positions,
// yielding one vector of length H + d per batch row.
Tensor aggregate(const Tensor& hidden, const Tensor& word_logits, const Tensor& mask);

// Softmax over the two sentence logits; ties in argmax break toward the
// lower index.
struct SentencePrediction {
  std::array<double, 2> probabilities;
  int predicted;
};
SentencePrediction sentence_predict(const Tensor& v, const Tensor& w_sentence,
                                    const Tensor& b_sentence);
SentencePrediction softmax_predict(double logit0, double logit1);

struct JointLossValue {
  double total = 0.0;
  double style = 0.0;
  double word = 0.0;
  bool word_loss_empty = false;  // no loss-active tokens in the batch
};

// Sentence loss is binary cross entropy against the positive-class softmax
// probability (identical to 2-way cross entropy); word loss is the mean of
// elementwise BCE-with-logits over loss-active (position, class) entries.
JointLossValue joint_loss(const Tensor& word_logits, const Tensor& word_targets,
                          const Tensor& loss_active, const Tensor& sentence_logits,
                          const std::vector<int>& sentence_targets, double alpha);

// ---------------------------------------------------------------------------

struct Explanation {
  std::vector<std::string> tokens;  // non-special subword pieces
  Tensor token_scores;              // (n_tokens, d), logistic-squashed
  Tensor word_scores;               // (n_words, d), mean over each word's subwords
  int predicted_label = 0;
  double label_probability = 0.0;
};

struct TrainConfig {
  int epochs = 5;
  double learning_rate = 2e-5;
  int batch_size = 32;
  std::uint64_t seed = 0;
  double weight_decay = 0.01;
  bool word_loss_enabled = true;

  void validate() const;
};

struct EpochMetrics {
  double style_loss = 0.0;
  double word_loss = 0.0;
  double train_f1 = 0.0;
  bool word_loss_empty = false;
};

class AdamW {
 public:
  AdamW() = default;
  void step(const BindingList& binds, Graph& g, double lr, double weight_decay);

 private:
  struct Slot {
    Tensor m, v;
  };
  std::vector<Slot> slots_;
  long t_ = 0;
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;
};

// Joint word-level / sentence-level style model: encoder, word head, and a
// sentence head over the max-pooled concatenation of hidden states and word
// logits.
class StylexModel {
 public:
  static constexpr double kDefaultAlpha = 0.05;

  StylexModel() = default;
  StylexModel(StyleTask task, EncoderConfig cfg, const Vocabulary& vocab,
              std::uint64_t init_seed, double alpha = kDefaultAlpha);

  bool initialized() const { return encoder_.initialized(); }
  bool trained() const { return trained_; }
  void mark_trained() { trained_ = true; }

  const StyleTask& task() const { return task_; }
  const Vocabulary& vocab() const { return vocab_; }
  const EncoderConfig& encoder_config() const { return encoder_.config(); }
  TinyTransformerEncoder& encoder() { return encoder_; }
  double alpha() const { return alpha_; }

  Tensor& w_word() { return w_word_; }
  Tensor& b_word() { return b_word_; }
  Tensor& w_sentence() { return w_sentence_; }
  Tensor& b_sentence() { return b_sentence_; }
  const Tensor& w_word() const { return w_word_; }
  const Tensor& w_sentence() const { return w_sentence_; }

  void register_params(ParamRegistry& reg);
  std::vector<Tensor> snapshot_params();
  void restore_params(const std::vector<Tensor>& snapshot);

  struct GraphOut {
    VarId hidden;       // (B,S,H)
    VarId word_logits;  // (B,S,d)
    VarId pooled;       // (B,H+d)
    VarId sent_logits;  // (B,2)
  };
  GraphOut forward_graph(Graph& g, const TokenBatch& batch, bool training,
                         std::mt19937_64* dropout_rng, BindingList* binds,
                         VarId embeddings_override = kNoVar);

  struct EvalOut {
    Tensor hidden;
    Tensor word_logits;
    Tensor sent_logits;
  };
  EvalOut evaluate(const TokenBatch& batch);

  // Lexical explanation for one sentence; requires a trained model.
  Explanation explain(const AnnotatedSentence& sentence);
  Explanation explain(const std::vector<std::string>& words);

  // Optimizes the joint loss over the corpus; deterministic given the seed.
  std::vector<EpochMetrics> train(const std::vector<AnnotatedSentence>& corpus,
                                  const TrainConfig& cfg);

 private:
  StyleTask task_;
  Vocabulary vocab_;
  TinyTransformerEncoder encoder_;
  Tensor w_word_;      // (H, d)
  Tensor b_word_;      // (d)
  Tensor w_sentence_;  // (H+d, 2)
  Tensor b_sentence_;  // (2)
  double alpha_ = kDefaultAlpha;
  bool trained_ = false;

  friend class Trainer;
};

// One optimizer pass at a time, so callers can evaluate between epochs
// (checkpoint selection in the pseudo-labeling pipeline).
class Trainer {
 public:
  Trainer(StylexModel& model, const std::vector<AnnotatedSentence>& corpus,
          TrainConfig cfg);
  EpochMetrics run_epoch();

 private:
  StylexModel& model_;
  const std::vector<AnnotatedSentence>& corpus_;
  TrainConfig cfg_;
  std::mt19937_64 rng_;
  AdamW opt_;
};

// Sentence-only classifier sharing the encoder architecture: max-pool over
// hidden states (without the word-logit channels) into a 2-way head. Used
// as the extraction classifier in the sufficiency test.
class PlainClassifier {
 public:
  PlainClassifier() = default;
  PlainClassifier(StyleTask task, EncoderConfig cfg, const Vocabulary& vocab,
                  std::uint64_t init_seed);

  std::vector<EpochMetrics> train(const std::vector<AnnotatedSentence>& corpus,
                                  const TrainConfig& cfg);
  int predict(const std::vector<std::string>& words);
  std::vector<int> predict_corpus(const std::vector<AnnotatedSentence>& corpus);
  const StyleTask& task() const { return task_; }

 private:
  StyleTask task_;
  Vocabulary vocab_;
  TinyTransformerEncoder encoder_;
  Tensor w_sentence_;  // (H, 2)
  Tensor b_sentence_;  // (2)

  VarId forward_graph(Graph& g, const TokenBatch& batch, bool training,
                      std::mt19937_64* rng, BindingList* binds);
  void register_params(ParamRegistry& reg);
};

}  // namespace stylex
