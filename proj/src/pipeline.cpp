#include "stylex/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace stylex {

void PipelineConfig::validate() const {
  if (seed_epochs < 0 || joint_epochs < 0) throw ConfigError("epochs must be >= 0");
  if (score_threshold <= 0.0 || score_threshold >= 1.0) {
    throw ConfigError("score_threshold must be in (0, 1)");
  }
  if (holdout_fraction <= 0.0 || holdout_fraction >= 1.0) {
    throw ConfigError("holdout_fraction must be in (0, 1)");
  }
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> selection_split(
    std::size_t n, double holdout_fraction, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed ^ 0x5eedc0de5eedc0deULL);
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t n_holdout = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(holdout_fraction * static_cast<double>(n))));
  if (n_holdout >= n) n_holdout = n - 1;
  std::vector<std::size_t> holdout(order.begin(), order.begin() + static_cast<long>(n_holdout));
  std::vector<std::size_t> train(order.begin() + static_cast<long>(n_holdout), order.end());
  std::sort(train.begin(), train.end());
  std::sort(holdout.begin(), holdout.end());
  return {train, holdout};
}

double word_level_f1(StylexModel& model, const std::vector<AnnotatedSentence>& corpus,
                     double threshold) {
  const StyleTask& task = model.task();
  long tp = 0, fp = 0, fn = 0, gold_pos = 0;
  for (const auto& s : corpus) {
    if (!s.has_scores()) continue;
    Explanation ex = model.explain(s.words);
    for (std::size_t w = 0; w < s.words.size(); ++w) {
      std::vector<double> target =
          s.provenance == Provenance::human
              ? score_to_target(s.word_scores[w][0], task.d_l_word)
              : s.word_scores[w];
      bool gold = false, pred = false;
      for (int c : task.positive_word_classes) {
        if (target[static_cast<std::size_t>(c)] > threshold) gold = true;
        if (ex.word_scores[static_cast<std::int64_t>(w) * task.d_l_word + c] > threshold) {
          pred = true;
        }
      }
      if (gold) ++gold_pos;
      if (gold && pred) ++tp;
      else if (!gold && pred) ++fp;
      else if (gold && !pred) ++fn;
    }
  }
  if (gold_pos == 0) return std::numeric_limits<double>::quiet_NaN();
  if (tp == 0) return 0.0;
  double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  double recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  return 2.0 * precision * recall / (precision + recall);
}

SeedTrainResult train_word_scorer(const std::vector<AnnotatedSentence>& seed_corpus,
                                  const StyleTask& task, const EncoderConfig& enc_cfg,
                                  const PipelineConfig& pipe_cfg,
                                  const TrainConfig& train_cfg) {
  pipe_cfg.validate();
  task.validate();
  if (seed_corpus.empty()) throw ConfigError("train_word_scorer: empty corpus");
  for (const auto& s : seed_corpus) {
    if (!s.has_scores() || s.provenance != Provenance::human) {
      throw ConfigError("train_word_scorer: sentence " + s.id +
                        " lacks human word scores");
    }
  }

  auto [train_idx, holdout_idx] =
      selection_split(seed_corpus.size(), pipe_cfg.holdout_fraction, pipe_cfg.seed);
  std::vector<AnnotatedSentence> train_split, holdout_split;
  for (std::size_t i : train_idx) train_split.push_back(seed_corpus[i]);
  for (std::size_t i : holdout_idx) holdout_split.push_back(seed_corpus[i]);

  std::vector<std::vector<std::string>> all_words;
  for (const auto& s : seed_corpus) all_words.push_back(s.words);
  Vocabulary vocab = Vocabulary::build(all_words);

  SeedTrainResult result;
  result.model = StylexModel(task, enc_cfg, vocab, pipe_cfg.seed);

  TrainConfig per_epoch = train_cfg;
  per_epoch.seed = pipe_cfg.seed;
  Trainer trainer(result.model, train_split, per_epoch);

  std::vector<Tensor> best_params = result.model.snapshot_params();
  double best_f1 = -1.0;
  for (int e = 0; e < pipe_cfg.seed_epochs; ++e) {
    result.epoch_metrics.push_back(trainer.run_epoch());
    result.model.mark_trained();
    double f1 = word_level_f1(result.model, holdout_split, pipe_cfg.score_threshold);
    result.epoch_f1.push_back(f1);
    if (!std::isnan(f1) && f1 > best_f1) {
      best_f1 = f1;
      best_params = result.model.snapshot_params();
      result.selected_epoch = e;
    }
  }
  if (pipe_cfg.seed_epochs > 0) result.model.mark_trained();
  if (best_f1 < 0.0) {
    // No epoch produced a defined F1: keep the last checkpoint and flag it.
    result.f1_undefined = true;
    result.selected_epoch = pipe_cfg.seed_epochs - 1;
    result.selected_f1 = 0.0;
  } else {
    result.model.restore_params(best_params);
    result.selected_f1 = best_f1;
  }
  return result;
}

std::vector<AnnotatedSentence> pseudo_label(StylexModel& scorer,
                                            const std::vector<AnnotatedSentence>& corpus) {
  if (!scorer.initialized()) throw CompatibilityError("pseudo_label: scorer is uninitialized");
  if (!scorer.trained()) throw StateError("pseudo_label: scorer has not been trained");
  if (!scorer.vocab().initialized()) {
    throw CompatibilityError("pseudo_label: scorer vocabulary is empty");
  }
  for (const auto& s : corpus) {
    if (s.has_scores()) {
      throw ValidationError("pseudo_label: sentence " + s.id +
                            " already carries word scores");
    }
  }
  const int d = scorer.task().d_l_word;
  std::vector<AnnotatedSentence> out;
  out.reserve(corpus.size());
  for (const auto& s : corpus) {
    Explanation ex = scorer.explain(s.words);
    AnnotatedSentence labeled = s;
    labeled.provenance = Provenance::pseudo;
    labeled.word_scores.clear();
    labeled.word_scores.reserve(s.words.size());
    for (std::size_t w = 0; w < s.words.size(); ++w) {
      std::vector<double> scores(static_cast<std::size_t>(d));
      for (int c = 0; c < d; ++c) {
        scores[static_cast<std::size_t>(c)] =
            ex.word_scores[static_cast<std::int64_t>(w) * d + c];
      }
      labeled.word_scores.push_back(std::move(scores));
    }
    out.push_back(std::move(labeled));
  }
  return out;
}

StylexModel train_joint(const std::vector<AnnotatedSentence>& seed_corpus,
                        const std::vector<AnnotatedSentence>& pseudo_corpus,
                        const StyleTask& task, const EncoderConfig& enc_cfg,
                        const PipelineConfig& pipe_cfg, const TrainConfig& train_cfg,
                        std::vector<EpochMetrics>* metrics_out) {
  pipe_cfg.validate();
  task.validate();
  std::vector<AnnotatedSentence> all = seed_corpus;
  all.insert(all.end(), pseudo_corpus.begin(), pseudo_corpus.end());
  if (all.empty()) throw ConfigError("train_joint: empty union corpus");
  for (const auto& s : all) {
    if (!s.has_scores()) {
      throw ConfigError("train_joint: sentence " + s.id + " lacks word scores");
    }
    if (s.provenance == Provenance::pseudo &&
        static_cast<int>(s.word_scores.front().size()) != task.d_l_word) {
      throw ConfigError("train_joint: sentence " + s.id +
                        " has a word-score arity that does not match the task");
    }
  }

  std::vector<std::vector<std::string>> all_words;
  for (const auto& s : all) all_words.push_back(s.words);
  Vocabulary vocab = Vocabulary::build(all_words);

  // Fresh parameters for the joint stage rather than reusing stage-(1)
  // weights; recorded in the pipeline manifest.
  StylexModel model(task, enc_cfg, vocab, pipe_cfg.seed + 1);
  TrainConfig cfg = train_cfg;
  cfg.epochs = pipe_cfg.joint_epochs;
  cfg.seed = pipe_cfg.seed + 1;
  if (cfg.epochs > 0) {
    std::vector<EpochMetrics> metrics = model.train(all, cfg);
    if (metrics_out != nullptr) *metrics_out = metrics;
  }
  return model;
}

}  // namespace stylex
