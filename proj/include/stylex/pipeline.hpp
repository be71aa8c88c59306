#pragma once

#include <string>
#include <vector>

#include "stylex/model.hpp"

namespace stylex {

struct PipelineConfig {
  int seed_epochs = 50;
  int joint_epochs = 5;
  double score_threshold = 0.5;  // binarization cut for word-level F1
  std::uint64_t seed = 0;
  double holdout_fraction = 0.1;  // checkpoint-selection split of the seed corpus

  void validate() const;
};

struct SeedTrainResult {
  StylexModel model;            // parameters of the F1-maximizing epoch
  int selected_epoch = -1;      // 0-based; -1 when no epoch ran
  double selected_f1 = 0.0;
  bool f1_undefined = false;    // no gold-positive words in the held-out split
  std::vector<double> epoch_f1;  // per-epoch held-out word F1 (NaN if undefined)
  std::vector<EpochMetrics> epoch_metrics;
};

// Word-level F1 of a model's squashed word scores against human targets,
// both binarized at `threshold` over the positive word class(es). NaN when
// the gold side has no positive words.
double word_level_f1(StylexModel& model, const std::vector<AnnotatedSentence>& corpus,
                     double threshold);

// Stage (1): trains on the human-scored seed corpus for up to seed_epochs and
// keeps the epoch checkpoint with the best held-out word-level F1.
SeedTrainResult train_word_scorer(const std::vector<AnnotatedSentence>& seed_corpus,
                                  const StyleTask& task, const EncoderConfig& enc_cfg,
                                  const PipelineConfig& pipe_cfg, const TrainConfig& train_cfg);

// Stage (2): predicts per-class word scores in [0,1] for an unscored corpus.
// Returns new records with provenance=pseudo; inputs are never mutated.
std::vector<AnnotatedSentence> pseudo_label(StylexModel& scorer,
                                            const std::vector<AnnotatedSentence>& corpus);

// Stage (3): joint training on the union of the human-scored seed corpus and
// the pseudo-labeled corpus, from freshly initialized parameters.
StylexModel train_joint(const std::vector<AnnotatedSentence>& seed_corpus,
                        const std::vector<AnnotatedSentence>& pseudo_corpus,
                        const StyleTask& task, const EncoderConfig& enc_cfg,
                        const PipelineConfig& pipe_cfg, const TrainConfig& train_cfg,
                        std::vector<EpochMetrics>* metrics_out = nullptr);

// Deterministic split of the seed corpus into (train, holdout) index sets.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> selection_split(
    std::size_t n, double holdout_fraction, std::uint64_t seed);

}  // namespace stylex
