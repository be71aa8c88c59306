#pragma once

#include <functional>
#include <string>
#include <vector>

#include "stylex/attribution.hpp"
#include "stylex/data.hpp"
#include "stylex/model.hpp"

namespace stylex {

// F1 of the `positive_label` class.
double f1_score(const std::vector<int>& predictions, const std::vector<int>& gold,
                int positive_label);

// Indices of the k highest-scoring words, ties broken by earlier position;
// output preserves original word order. k larger than the sentence returns
// all indices.
std::vector<int> top_k_indices(const std::vector<double>& scores, int k);
std::vector<std::string> top_k_words(const std::vector<std::string>& words,
                                     const std::vector<double>& scores, int k);

// Extraction budget: one k per dataset, k = ceil(fraction * average sentence
// length).
int extraction_budget(double avg_sentence_length, double k_fraction);
double average_sentence_length(const std::vector<AnnotatedSentence>& corpus);

// Pearson product-moment correlation. Exact +-1.0 on identical / negated
// inputs; result clamped to [-1, 1].
double pearson_r(const std::vector<double>& x, const std::vector<double>& y);

// Per-sentence word scorer used by the evaluation protocols.
struct ExplainerHandle {
  std::string name;
  std::function<std::vector<double>(const AnnotatedSentence&)> score_fn;
};

// Positive-channel scores from a trained joint model.
ExplainerHandle model_explainer(StylexModel& model);
// Integrated-gradients word attributions toward the positive sentence class.
ExplainerHandle ig_explainer(StylexModel& model, int steps = 50);
// Planted/human scores read back from the corpus: 1.0 where the positive
// channel of the annotated target is positive, else 0.0.
ExplainerHandle oracle_explainer(const StyleTask& task);
// Inverted oracle (scores negated).
ExplainerHandle inverted_oracle_explainer(const StyleTask& task);
// Seeded uniform scores, deterministic per sentence id.
ExplainerHandle random_explainer(std::uint64_t seed);

struct SufficiencyReport {
  std::string style;
  std::string explainer;
  double k_fraction = 0.0;
  double avg_sentence_length = 0.0;
  int k = 0;
  double f1_on_extracts = 0.0;
};

// Trains the plain sentence classifier on top-k extractions of the training
// split and reports F1 on top-k extractions of the test split.
SufficiencyReport sufficiency_test(const ExplainerHandle& explainer,
                                   const std::vector<AnnotatedSentence>& train_corpus,
                                   const std::vector<AnnotatedSentence>& test_corpus,
                                   const StyleTask& task, const EncoderConfig& enc_cfg,
                                   const TrainConfig& classifier_cfg,
                                   double k_fraction = 0.3);

std::vector<AnnotatedSentence> extract_top_k(const ExplainerHandle& explainer,
                                             const std::vector<AnnotatedSentence>& corpus,
                                             int k);

struct PlausibilityReport {
  double pearson = 0.0;
  double overlap_percent = 0.0;
};

// Fraction (x100) of positive-label sentences whose top-k extraction shares
// at least one word with the lexicon (lowercase exact match).
double lexicon_overlap(const ExplainerHandle& explainer,
                       const std::vector<AnnotatedSentence>& positive_sentences,
                       const LexiconDictionary& lexicon, double k_fraction = 0.3);

// Concatenated signed word scores (positive minus negative channel for d=2)
// against human scores, for the plausibility correlation.
double plausibility_pearson(StylexModel& model,
                            const std::vector<AnnotatedSentence>& corpus);

struct SyntheticConfig {
  int d_l_word = 2;
  int n_sentences = 100;
  int n_filler_words = 40;
  int n_cue_words = 8;      // per polarity
  double cue_strength = 1.0;
  int min_len = 8;
  int max_len = 12;
  int min_cues = 1;
  int max_cues = 2;
  std::uint64_t seed = 0;
};

// Synthetic planted-cue corpus: filler words score 0; cue words score +1
// (positive polarity) or -1 (negative polarity, two-class styles only). The
// sentence label follows the majority cue polarity, coupled to the cues with
// probability (1 + cue_strength) / 2 per cue.
std::vector<AnnotatedSentence> make_synthetic_corpus(const SyntheticConfig& cfg);

// Cue vocabulary of the synthetic generator (for lexicon-overlap runs).
std::vector<std::string> synthetic_cue_words(const SyntheticConfig& cfg, bool positive);

struct PairExportStats {
  int n_records = 0;
};

// Writes anonymized A/B comparison pairs: both explainers' scores normalized
// by their per-sentence maximum, sides shuffled per record, with the identity
// mapping stored in a separate key file.
PairExportStats export_comparison_pairs(const ExplainerHandle& a, const ExplainerHandle& b,
                                        const std::vector<AnnotatedSentence>& sentences,
                                        std::uint64_t seed, const std::string& pair_path,
                                        const std::string& key_path);

}  // namespace stylex
