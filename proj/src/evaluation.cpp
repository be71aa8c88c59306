#include "stylex/evaluation.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

namespace stylex {

namespace {
using nlohmann::ordered_json;
}

double f1_score(const std::vector<int>& predictions, const std::vector<int>& gold,
                int positive_label) {
  if (predictions.size() != gold.size()) {
    throw ValidationError("f1_score: prediction/gold length mismatch");
  }
  if (predictions.empty()) throw ValidationError("f1_score: empty inputs");
  long tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    bool p = predictions[i] == positive_label;
    bool g = gold[i] == positive_label;
    if (p && g) ++tp;
    else if (p && !g) ++fp;
    else if (!p && g) ++fn;
  }
  if (tp == 0) return 0.0;
  double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  double recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  return 2.0 * precision * recall / (precision + recall);
}

std::vector<int> top_k_indices(const std::vector<double>& scores, int k) {
  if (k < 1) throw RangeError("top_k: k must be >= 1");
  const int n = static_cast<int>(scores.size());
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (scores[static_cast<std::size_t>(a)] != scores[static_cast<std::size_t>(b)]) {
      return scores[static_cast<std::size_t>(a)] > scores[static_cast<std::size_t>(b)];
    }
    return a < b;  // ties: earlier position wins
  });
  const int take = std::min(k, n);
  std::vector<int> chosen(order.begin(), order.begin() + take);
  std::sort(chosen.begin(), chosen.end());  // original order preserved
  return chosen;
}

std::vector<std::string> top_k_words(const std::vector<std::string>& words,
                                     const std::vector<double>& scores, int k) {
  if (words.size() != scores.size()) {
    throw ValidationError("top_k_words: words/scores length mismatch");
  }
  std::vector<std::string> out;
  for (int i : top_k_indices(scores, k)) out.push_back(words[static_cast<std::size_t>(i)]);
  return out;
}

int extraction_budget(double avg_sentence_length, double k_fraction) {
  if (k_fraction <= 0.0 || k_fraction > 1.0) {
    throw RangeError("k_fraction must be in (0, 1]");
  }
  return std::max(1, static_cast<int>(std::ceil(k_fraction * avg_sentence_length)));
}

double average_sentence_length(const std::vector<AnnotatedSentence>& corpus) {
  if (corpus.empty()) throw ValidationError("average_sentence_length: empty corpus");
  double total = 0.0;
  for (const auto& s : corpus) total += static_cast<double>(s.words.size());
  return total / static_cast<double>(corpus.size());
}

double pearson_r(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw ValidationError("pearson_r: length mismatch");
  if (x.size() < 2) throw ValidationError("pearson_r: need at least 2 points");
  const std::size_t n = x.size();
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) { mx += x[i]; my += y[i]; }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double a = x[i] - mx;
    double b = y[i] - my;
    sxy += a * b;
    sxx += a * a;
    syy += b * b;
  }
  if (sxx == 0.0 || syy == 0.0) {
    throw NumericError("pearson_r: undefined correlation (zero variance)");
  }
  // sign(sxy) * sqrt(sxy^2 / (sxx*syy)) rather than sxy/(sx*sy): identical
  // products cancel bitwise, so x-vs-x and x-vs-(-x) come out exactly +-1.
  double r = std::sqrt((sxy * sxy) / (sxx * syy));
  if (sxy < 0.0) r = -r;
  return std::clamp(r, -1.0, 1.0);
}

namespace {

double positive_channel_sum(const std::vector<double>& per_class, const StyleTask& task) {
  double v = 0.0;
  for (int c : task.positive_word_classes) v += per_class[static_cast<std::size_t>(c)];
  return v;
}

}  // namespace

ExplainerHandle model_explainer(StylexModel& model) {
  StyleTask task = model.task();
  return ExplainerHandle{
      "stylex", [&model, task](const AnnotatedSentence& s) {
        Explanation ex = model.explain(s.words);
        std::vector<double> out(s.words.size(), 0.0);
        for (std::size_t w = 0; w < s.words.size(); ++w) {
          double v = 0.0;
          for (int c : task.positive_word_classes) {
            v += ex.word_scores[static_cast<std::int64_t>(w) * task.d_l_word + c];
          }
          out[w] = v;
        }
        return out;
      }};
}

ExplainerHandle ig_explainer(StylexModel& model, int steps) {
  return ExplainerHandle{
      "integrated_gradients", [&model, steps](const AnnotatedSentence& s) {
        // Attribution toward the positive sentence class (index 0).
        SentenceAttribution sa = attribute_sentence(model, s.words, 0, steps);
        return sa.word_scores;
      }};
}

ExplainerHandle oracle_explainer(const StyleTask& task) {
  StyleTask t = task;
  return ExplainerHandle{
      "oracle", [t](const AnnotatedSentence& s) {
        std::vector<double> out(s.words.size(), 0.0);
        if (!s.has_scores()) return out;
        for (std::size_t w = 0; w < s.words.size(); ++w) {
          std::vector<double> target =
              s.provenance == Provenance::human
                  ? score_to_target(s.word_scores[w][0], t.d_l_word)
                  : s.word_scores[w];
          out[w] = positive_channel_sum(target, t) > 0.0 ? 1.0 : 0.0;
        }
        return out;
      }};
}

ExplainerHandle inverted_oracle_explainer(const StyleTask& task) {
  ExplainerHandle oracle = oracle_explainer(task);
  return ExplainerHandle{
      "inverted_oracle", [oracle](const AnnotatedSentence& s) {
        std::vector<double> v = oracle.score_fn(s);
        for (double& x : v) x = -x;
        return v;
      }};
}

ExplainerHandle random_explainer(std::uint64_t seed) {
  return ExplainerHandle{
      "random", [seed](const AnnotatedSentence& s) {
        // Seeded per sentence id so scores are stable across calls.
        std::uint64_t h = seed ^ 0x9e3779b97f4a7c15ULL;
        for (char c : s.id) h = (h ^ static_cast<std::uint64_t>(c)) * 0x100000001b3ULL;
        std::mt19937_64 rng(h);
        std::uniform_real_distribution<double> dist(0.0, 1.0);
        std::vector<double> out(s.words.size());
        for (double& v : out) v = dist(rng);
        return out;
      }};
}

std::vector<AnnotatedSentence> extract_top_k(const ExplainerHandle& explainer,
                                             const std::vector<AnnotatedSentence>& corpus,
                                             int k) {
  std::vector<AnnotatedSentence> out;
  out.reserve(corpus.size());
  for (const auto& s : corpus) {
    std::vector<double> scores = explainer.score_fn(s);
    if (scores.size() != s.words.size()) {
      throw PipelineError("extract_top_k: explainer returned wrong score count for " + s.id);
    }
    AnnotatedSentence e;
    e.id = s.id;
    e.sentence_label = s.sentence_label;
    if (!s.words.empty()) e.words = top_k_words(s.words, scores, k);
    out.push_back(std::move(e));
  }
  return out;
}

SufficiencyReport sufficiency_test(const ExplainerHandle& explainer,
                                   const std::vector<AnnotatedSentence>& train_corpus,
                                   const std::vector<AnnotatedSentence>& test_corpus,
                                   const StyleTask& task, const EncoderConfig& enc_cfg,
                                   const TrainConfig& classifier_cfg, double k_fraction) {
  if (train_corpus.empty() || test_corpus.empty()) {
    throw PipelineError("sufficiency_test: empty corpus");
  }
  std::vector<AnnotatedSentence> both = train_corpus;
  both.insert(both.end(), test_corpus.begin(), test_corpus.end());
  const double avg_len = average_sentence_length(both);
  const int k = extraction_budget(avg_len, k_fraction);

  std::vector<AnnotatedSentence> train_ex = extract_top_k(explainer, train_corpus, k);
  std::vector<AnnotatedSentence> test_ex = extract_top_k(explainer, test_corpus, k);
  bool any_words = false;
  for (const auto& s : train_ex) {
    if (!s.words.empty()) { any_words = true; break; }
  }
  if (!any_words) throw PipelineError("sufficiency_test: extraction corpus is empty");

  std::vector<std::vector<std::string>> vocab_words;
  for (const auto& s : train_ex) vocab_words.push_back(s.words);
  Vocabulary vocab = Vocabulary::build(vocab_words);

  PlainClassifier clf(task, enc_cfg, vocab, classifier_cfg.seed);
  clf.train(train_ex, classifier_cfg);
  std::vector<int> preds = clf.predict_corpus(test_ex);
  std::vector<int> gold;
  for (const auto& s : test_ex) gold.push_back(s.sentence_label);

  SufficiencyReport r;
  r.style = task.name;
  r.explainer = explainer.name;
  r.k_fraction = k_fraction;
  r.avg_sentence_length = avg_len;
  r.k = k;
  r.f1_on_extracts = f1_score(preds, gold, 0);
  return r;
}

double lexicon_overlap(const ExplainerHandle& explainer,
                       const std::vector<AnnotatedSentence>& positive_sentences,
                       const LexiconDictionary& lexicon, double k_fraction) {
  if (positive_sentences.empty()) {
    throw ValidationError("lexicon_overlap: empty positive-label subset");
  }
  if (lexicon.entries.empty()) throw ValidationError("lexicon_overlap: empty lexicon");
  const double avg_len = average_sentence_length(positive_sentences);
  const int k = extraction_budget(avg_len, k_fraction);
  long hits = 0;
  for (const auto& s : positive_sentences) {
    std::vector<double> scores = explainer.score_fn(s);
    std::vector<std::string> top = top_k_words(s.words, scores, k);
    bool hit = false;
    for (const auto& w : top) {
      if (lexicon.entries.count(to_lower(w)) > 0) { hit = true; break; }
    }
    if (hit) ++hits;
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(positive_sentences.size());
}

double plausibility_pearson(StylexModel& model,
                            const std::vector<AnnotatedSentence>& corpus) {
  const StyleTask& task = model.task();
  std::vector<double> predicted, human;
  for (const auto& s : corpus) {
    if (!s.has_scores()) continue;
    Explanation ex = model.explain(s.words);
    for (std::size_t w = 0; w < s.words.size(); ++w) {
      double p;
      if (task.d_l_word == 2) {
        p = ex.word_scores[static_cast<std::int64_t>(w) * 2] -
            ex.word_scores[static_cast<std::int64_t>(w) * 2 + 1];
      } else {
        p = ex.word_scores[static_cast<std::int64_t>(w)];
      }
      double h;
      if (s.provenance == Provenance::human) {
        h = task.d_l_word == 2 ? s.word_scores[w][0] : std::abs(s.word_scores[w][0]);
      } else {
        h = task.d_l_word == 2 ? s.word_scores[w][0] - s.word_scores[w][1]
                               : s.word_scores[w][0];
      }
      predicted.push_back(p);
      human.push_back(h);
    }
  }
  return pearson_r(predicted, human);
}

std::vector<std::string> synthetic_cue_words(const SyntheticConfig& cfg, bool positive) {
  std::vector<std::string> out;
  for (int i = 0; i < cfg.n_cue_words; ++i) {
    out.push_back((positive ? "cuep" : "cuen") + std::to_string(i));
  }
  return out;
}

std::vector<AnnotatedSentence> make_synthetic_corpus(const SyntheticConfig& cfg) {
  if (cfg.n_sentences < 1) throw ConfigError("make_synthetic_corpus: n_sentences >= 1");
  if (cfg.d_l_word != 1 && cfg.d_l_word != 2) {
    throw ConfigError("make_synthetic_corpus: d_l_word must be 1 or 2");
  }
  if (cfg.cue_strength < 0.0 || cfg.cue_strength > 1.0) {
    throw ConfigError("make_synthetic_corpus: cue_strength must be in [0, 1]");
  }
  if (cfg.min_len < cfg.max_cues || cfg.min_len > cfg.max_len || cfg.min_cues < 1 ||
      cfg.min_cues > cfg.max_cues) {
    throw ConfigError("make_synthetic_corpus: inconsistent length/cue bounds");
  }
  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<int> len_dist(cfg.min_len, cfg.max_len);
  std::uniform_int_distribution<int> cue_count_dist(cfg.min_cues, cfg.max_cues);
  std::uniform_int_distribution<int> filler_dist(0, cfg.n_filler_words - 1);
  std::uniform_int_distribution<int> cue_dist(0, cfg.n_cue_words - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<std::string> pos_cues = synthetic_cue_words(cfg, true);
  std::vector<std::string> neg_cues = synthetic_cue_words(cfg, false);

  std::vector<AnnotatedSentence> corpus;
  corpus.reserve(static_cast<std::size_t>(cfg.n_sentences));
  for (int n = 0; n < cfg.n_sentences; ++n) {
    AnnotatedSentence s;
    s.id = "syn-" + std::to_string(cfg.seed) + "-" + std::to_string(n);
    s.sentence_label = n % 2;  // balanced labels
    s.provenance = Provenance::human;
    const int len = len_dist(rng);
    const int n_cues = cue_count_dist(rng);
    std::vector<int> positions(static_cast<std::size_t>(len));
    std::iota(positions.begin(), positions.end(), 0);
    std::shuffle(positions.begin(), positions.end(), rng);
    std::vector<bool> is_cue(static_cast<std::size_t>(len), false);
    for (int c = 0; c < n_cues; ++c) is_cue[static_cast<std::size_t>(positions[static_cast<std::size_t>(c)])] = true;

    s.words.resize(static_cast<std::size_t>(len));
    s.word_scores.resize(static_cast<std::size_t>(len));
    const double p_match = (1.0 + cfg.cue_strength) / 2.0;
    for (int i = 0; i < len; ++i) {
      if (!is_cue[static_cast<std::size_t>(i)]) {
        s.words[static_cast<std::size_t>(i)] = "w" + std::to_string(filler_dist(rng));
        s.word_scores[static_cast<std::size_t>(i)] = {0.0};
        continue;
      }
      // Polarity follows the label with probability (1 + strength) / 2.
      bool match = unit(rng) < p_match;
      bool positive_polarity = (s.sentence_label == 0) == match;
      if (positive_polarity) {
        s.words[static_cast<std::size_t>(i)] = pos_cues[static_cast<std::size_t>(cue_dist(rng))];
        s.word_scores[static_cast<std::size_t>(i)] = {1.0};
      } else {
        s.words[static_cast<std::size_t>(i)] = neg_cues[static_cast<std::size_t>(cue_dist(rng))];
        // Two-class styles mark opposite-polarity cues at -1; single-class
        // styles treat them as unscored distractors.
        s.word_scores[static_cast<std::size_t>(i)] = {cfg.d_l_word == 2 ? -1.0 : 0.0};
      }
    }
    corpus.push_back(std::move(s));
  }
  return corpus;
}

PairExportStats export_comparison_pairs(const ExplainerHandle& a, const ExplainerHandle& b,
                                        const std::vector<AnnotatedSentence>& sentences,
                                        std::uint64_t seed, const std::string& pair_path,
                                        const std::string& key_path) {
  std::ofstream pair_out(pair_path);
  if (!pair_out) throw IoError("cannot write pair file: " + pair_path);
  std::ofstream key_out(key_path);
  if (!key_out) throw IoError("cannot write key file: " + key_path);

  auto normalize = [](std::vector<double> v) {
    double mx = 0.0;
    for (double x : v) mx = std::max(mx, x);
    if (mx > 0.0) {
      for (double& x : v) x = std::clamp(x / mx, 0.0, 1.0);
    } else {
      std::fill(v.begin(), v.end(), 0.0);
    }
    return v;
  };

  std::mt19937_64 rng(seed);
  PairExportStats stats;
  for (const auto& s : sentences) {
    std::vector<double> sa = normalize(a.score_fn(s));
    std::vector<double> sb = normalize(b.score_fn(s));
    bool swap = std::uniform_int_distribution<int>(0, 1)(rng) == 1;

    ordered_json rec;
    rec["id"] = s.id;
    std::string text;
    for (std::size_t i = 0; i < s.words.size(); ++i) {
      if (i > 0) text += ' ';
      text += s.words[i];
    }
    rec["text"] = text;
    rec["highlights_A"] = swap ? sb : sa;
    rec["highlights_B"] = swap ? sa : sb;
    pair_out << rec.dump() << "\n";

    ordered_json key;
    key["id"] = s.id;
    key["A"] = swap ? b.name : a.name;
    key["B"] = swap ? a.name : b.name;
    key_out << key.dump() << "\n";
    ++stats.n_records;
  }
  return stats;
}

}  // namespace stylex
