#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "stylex/checkpoint.hpp"
#include "stylex/evaluation.hpp"
#include "stylex/pipeline.hpp"

using namespace stylex;

namespace {

EncoderConfig small_encoder() {
  EncoderConfig cfg;
  cfg.hidden_size = 32;
  cfg.num_layers = 1;
  cfg.num_heads = 4;
  cfg.max_seq_len = 32;
  return cfg;
}

std::vector<AnnotatedSentence> planted_corpus(int n, std::uint64_t seed) {
  SyntheticConfig sc;
  sc.d_l_word = 2;
  sc.n_sentences = n;
  sc.n_filler_words = 12;
  sc.n_cue_words = 4;
  sc.seed = seed;
  return make_synthetic_corpus(sc);
}

TrainConfig fast_train() {
  TrainConfig tc;
  tc.learning_rate = 2e-3;
  tc.batch_size = 16;
  return tc;
}

}  // namespace

TEST_CASE("pipeline config validation") {
  PipelineConfig pc;
  CHECK(pc.seed_epochs == 50);
  CHECK(pc.joint_epochs == 5);
  CHECK(pc.score_threshold == 0.5);
  CHECK_NOTHROW(pc.validate());
  pc.score_threshold = 1.0;
  CHECK_THROWS_AS(pc.validate(), ConfigError);
  pc = PipelineConfig{};
  pc.seed_epochs = -1;
  CHECK_THROWS_AS(pc.validate(), ConfigError);
}

TEST_CASE("seed scorer reaches high word F1 on a separable corpus") {
  auto corpus = planted_corpus(160, 5);
  StyleTask task = StyleTask::builtin("sentiment");
  PipelineConfig pc;
  pc.seed_epochs = 20;
  pc.seed = 9;
  auto res = train_word_scorer(corpus, task, small_encoder(), pc, fast_train());

  CHECK(res.model.trained());
  CHECK_FALSE(res.f1_undefined);
  CHECK(res.selected_f1 >= 0.9);
  CHECK(res.selected_epoch >= 0);
  CHECK(static_cast<int>(res.epoch_f1.size()) == pc.seed_epochs);

  // selection monotonicity: no recorded epoch beats the selected one
  for (double f1 : res.epoch_f1) {
    if (!std::isnan(f1)) CHECK(res.selected_f1 >= f1);
  }

  // determinism: identical config selects the identical epoch
  auto res2 = train_word_scorer(corpus, task, small_encoder(), pc, fast_train());
  CHECK(res2.selected_epoch == res.selected_epoch);
  CHECK(res2.selected_f1 == res.selected_f1);
}

TEST_CASE("seed scorer: degenerate all-zero targets fall back to last checkpoint") {
  auto corpus = planted_corpus(40, 6);
  for (auto& s : corpus) {
    for (auto& ws : s.word_scores) ws = {0.0};
  }
  StyleTask task = StyleTask::builtin("sentiment");
  PipelineConfig pc;
  pc.seed_epochs = 2;
  pc.seed = 1;
  auto res = train_word_scorer(corpus, task, small_encoder(), pc, fast_train());
  CHECK(res.f1_undefined);
  CHECK(res.selected_epoch == pc.seed_epochs - 1);

  // corpus without human scores is rejected outright
  auto unscored = strip_word_scores(corpus);
  CHECK_THROWS_AS(
      static_cast<void>(train_word_scorer(unscored, task, small_encoder(), pc, fast_train())),
      ConfigError);
}

TEST_CASE("pseudo_label: ranges, provenance, purity, correlation") {
  auto seed_corpus = planted_corpus(160, 7);
  StyleTask task = StyleTask::builtin("sentiment");
  PipelineConfig pc;
  pc.seed_epochs = 20;
  pc.seed = 3;
  auto res = train_word_scorer(seed_corpus, task, small_encoder(), pc, fast_train());

  auto fresh = planted_corpus(60, 8);
  auto unscored = strip_word_scores(fresh);
  auto snapshot = unscored;  // purity check baseline
  auto labeled = pseudo_label(res.model, unscored);

  CHECK(unscored == snapshot);  // inputs never mutated
  REQUIRE(labeled.size() == unscored.size());
  for (std::size_t i = 0; i < labeled.size(); ++i) {
    CHECK(labeled[i].provenance == Provenance::pseudo);
    CHECK(labeled[i].words == unscored[i].words);
    REQUIRE(labeled[i].word_scores.size() == labeled[i].words.size());
    for (const auto& ws : labeled[i].word_scores) {
      REQUIRE(ws.size() == 2);
      for (double v : ws) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
      }
    }
  }

  // pseudo scores correlate with the planted human scores
  std::vector<double> predicted, human;
  for (std::size_t i = 0; i < labeled.size(); ++i) {
    for (std::size_t w = 0; w < fresh[i].words.size(); ++w) {
      predicted.push_back(labeled[i].word_scores[w][0] - labeled[i].word_scores[w][1]);
      human.push_back(fresh[i].word_scores[w][0]);
    }
  }
  CHECK(pearson_r(predicted, human) > 0.0);

  // empty corpus maps to empty output
  CHECK(pseudo_label(res.model, {}).empty());

  // already-scored input violates the contract
  CHECK_THROWS_AS(static_cast<void>(pseudo_label(res.model, fresh)), ValidationError);

  // untrained scorer is rejected
  StylexModel raw;
  CHECK_THROWS_AS(static_cast<void>(pseudo_label(raw, unscored)), CompatibilityError);
}

TEST_CASE("train_joint unions the corpora and respects joint_epochs") {
  auto seed_corpus = planted_corpus(80, 9);
  auto extra = strip_word_scores(planted_corpus(40, 10));
  StyleTask task = StyleTask::builtin("sentiment");
  PipelineConfig pc;
  pc.seed_epochs = 12;
  pc.seed = 4;
  auto scorer = train_word_scorer(seed_corpus, task, small_encoder(), pc, fast_train());
  auto pseudo = pseudo_label(scorer.model, extra);

  // counting: the trained vocabulary covers the union corpus
  CHECK(seed_corpus.size() + pseudo.size() == 120);

  PipelineConfig pj = pc;
  pj.joint_epochs = 3;
  std::vector<EpochMetrics> metrics;
  StylexModel joint = train_joint(seed_corpus, pseudo, task, small_encoder(), pj,
                                  fast_train(), &metrics);
  CHECK(joint.trained());
  CHECK(metrics.size() == 3);

  // joint_epochs = 0 returns a freshly initialized, untrained model
  PipelineConfig p0 = pc;
  p0.joint_epochs = 0;
  StylexModel init = train_joint(seed_corpus, pseudo, task, small_encoder(), p0, fast_train());
  CHECK(init.initialized());
  CHECK_FALSE(init.trained());

  // arity mismatch between task and pseudo scores is a configuration error
  StyleTask anger = StyleTask::builtin("anger");
  CHECK_THROWS_AS(static_cast<void>(train_joint(seed_corpus, pseudo, anger, small_encoder(),
                                                pj, fast_train())),
                  ConfigError);
}

TEST_CASE("score-range closure after pseudo labeling") {
  auto seed_corpus = planted_corpus(120, 11);
  StyleTask task = StyleTask::builtin("sentiment");
  PipelineConfig pc;
  pc.seed_epochs = 8;
  pc.seed = 5;
  auto scorer = train_word_scorer(seed_corpus, task, small_encoder(), pc, fast_train());
  auto pseudo = pseudo_label(scorer.model, strip_word_scores(planted_corpus(50, 12)));

  // 100% of loss-active token targets lie in [0,1] once batched
  TokenBatch batch = make_token_batch(pseudo, task, scorer.model.vocab(), 32);
  for (int b = 0; b < batch.batch; ++b) {
    for (int s = 0; s < batch.seq; ++s) {
      if (batch.loss_active[static_cast<std::int64_t>(b) * batch.seq + s] <= 0.5) continue;
      for (int c = 0; c < batch.d; ++c) {
        double v = batch.word_targets[(static_cast<std::int64_t>(b) * batch.seq + s) * batch.d + c];
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
      }
    }
  }
}

TEST_CASE("checkpoint round trip preserves predictions") {
  auto corpus = planted_corpus(100, 13);
  StyleTask task = StyleTask::builtin("sentiment");
  PipelineConfig pc;
  pc.seed_epochs = 6;
  pc.seed = 6;
  auto res = train_word_scorer(corpus, task, small_encoder(), pc, fast_train());

  std::filesystem::path path =
      std::filesystem::temp_directory_path() / "stylex_ckpt_test.bin";
  save_checkpoint(res.model, path.string());
  StylexModel loaded = load_checkpoint(path.string());

  CHECK(loaded.trained());
  CHECK(loaded.task().name == "sentiment");
  CHECK(loaded.alpha() == res.model.alpha());
  Explanation a = res.model.explain(corpus[0].words);
  Explanation b = loaded.explain(corpus[0].words);
  CHECK(a.predicted_label == b.predicted_label);
  REQUIRE(a.word_scores.numel() == b.word_scores.numel());
  for (std::int64_t i = 0; i < a.word_scores.numel(); ++i) {
    CHECK(a.word_scores[i] == b.word_scores[i]);
  }

  CHECK_THROWS_AS(static_cast<void>(load_checkpoint("/nonexistent.bin")), IoError);
  CHECK(!file_hash(path.string()).empty());
}
