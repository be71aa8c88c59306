#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "stylex/data.hpp"
#include "stylex/tokenizer.hpp"

using namespace stylex;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
  std::filesystem::path p = std::filesystem::temp_directory_path() / name;
  std::ofstream out(p);
  out << content;
  return p.string();
}

}  // namespace

TEST_CASE("builtin style tasks resolve word-level arity") {
  CHECK(StyleTask::builtin("politeness").d_l_word == 2);
  CHECK(StyleTask::builtin("sentiment").d_l_word == 2);
  for (const auto& name : {"offensiveness", "anger", "disgust", "fear", "joy", "sadness"}) {
    CHECK(StyleTask::builtin(name).d_l_word == 1);
  }
  CHECK(StyleTask::builtin("sentiment").sentence_labels.first == "positive");
  CHECK_THROWS_AS(StyleTask::builtin("sarcasm"), ValidationError);

  StyleTask bad = StyleTask::builtin("sentiment");
  bad.d_l_word = 3;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("load_corpus parses scored, unscored and invalid records") {
  StyleTask task = StyleTask::builtin("sentiment");

  std::string path = write_temp(
      "stylex_corpus_ok.jsonl",
      R"({"words":["top","notch"],"word_scores":[1.0,1.0],"label":0})"
      "\n"
      R"({"words":["ok"],"label":1})"
      "\n");
  auto corpus = load_corpus(path, task);
  REQUIRE(corpus.size() == 2);
  CHECK(corpus[0].words.size() == 2);
  CHECK(corpus[0].provenance == Provenance::human);
  CHECK(corpus[0].word_scores[0][0] == 1.0);
  CHECK(corpus[0].sentence_label == 0);
  CHECK(corpus[1].provenance == Provenance::none);
  CHECK_FALSE(corpus[1].has_scores());

  std::string mismatch = write_temp(
      "stylex_corpus_mismatch.jsonl",
      R"({"id":"r1","words":["a","b"],"word_scores":[1.0],"label":0})"
      "\n");
  CHECK_THROWS_WITH_AS(static_cast<void>(load_corpus(mismatch, task)),
                       doctest::Contains("r1"), ValidationError);

  std::string garbage = write_temp("stylex_corpus_bad.jsonl",
                                   "{\"words\":[\"a\"],\"label\":0}\nnot json\n");
  CHECK_THROWS_WITH_AS(static_cast<void>(load_corpus(garbage, task)),
                       doctest::Contains("line 2"), ParseError);

  CHECK_THROWS_AS(static_cast<void>(load_corpus("/nonexistent/corpus.jsonl", task)), IoError);
}

TEST_CASE("corpus round trip") {
  StyleTask task = StyleTask::builtin("anger");
  std::mt19937_64 rng(7);
  std::vector<AnnotatedSentence> corpus;
  for (int i = 0; i < 25; ++i) {
    AnnotatedSentence s;
    s.id = "r" + std::to_string(i);
    int len = 1 + static_cast<int>(rng() % 6);
    for (int w = 0; w < len; ++w) s.words.push_back("word" + std::to_string(rng() % 10));
    s.sentence_label = static_cast<int>(rng() % 2);
    int kind = static_cast<int>(rng() % 3);
    if (kind == 1) {
      s.provenance = Provenance::human;
      for (int w = 0; w < len; ++w) {
        s.word_scores.push_back({(static_cast<double>(rng() % 201) - 100.0) / 100.0});
      }
    } else if (kind == 2) {
      s.provenance = Provenance::pseudo;
      for (int w = 0; w < len; ++w) {
        s.word_scores.push_back({static_cast<double>(rng() % 101) / 100.0});
      }
    }
    corpus.push_back(std::move(s));
  }
  std::filesystem::path p = std::filesystem::temp_directory_path() / "stylex_roundtrip.jsonl";
  serialize_corpus(corpus, p.string());
  auto reloaded = load_corpus(p.string(), task);
  CHECK(reloaded == corpus);
}

TEST_CASE("score_to_target sign split and absolute value") {
  auto t1 = score_to_target(-0.5, 2);
  CHECK(t1 == std::vector<double>{0.0, 0.5});
  auto t2 = score_to_target(0.0, 1);
  CHECK(t2 == std::vector<double>{0.0});
  auto t3 = score_to_target(1.0, 2);
  CHECK(t3 == std::vector<double>{1.0, 0.0});
  CHECK_THROWS_AS(static_cast<void>(score_to_target(1.5, 2)), RangeError);
  CHECK_THROWS_AS(static_cast<void>(score_to_target(-2.0, 1)), RangeError);

  // property: for d=2 at most one component nonzero and the components sum
  // to |score|
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    double s = dist(rng);
    auto t = score_to_target(s, 2);
    CHECK((t[0] == 0.0 || t[1] == 0.0));
    CHECK(t[0] + t[1] == doctest::Approx(std::abs(s)).epsilon(1e-12));
    auto u = score_to_target(s, 1);
    CHECK(u[0] == doctest::Approx(std::abs(s)));
  }
}

TEST_CASE("alignment broadcasts word targets over subwords") {
  StyleTask task = StyleTask::builtin("anger");

  // vocabulary without "downfall" so it falls back to characters
  Vocabulary vocab = Vocabulary::build({{"the", "end"}});
  AnnotatedSentence s;
  s.id = "a1";
  s.words = {"downfall"};
  s.word_scores = {{0.8}};
  s.provenance = Provenance::human;
  Tokenization tk = tokenize(vocab, s.words, 64);
  AlignedRow row = align_annotations(s, tk, task);
  int active = 0;
  for (std::size_t t = 0; t < tk.pieces.size(); ++t) {
    if (tk.pieces[t].word_index < 0) {
      CHECK(row.loss_active[t] == 0.0);
      continue;
    }
    ++active;
    CHECK(row.loss_active[t] == 1.0);
    CHECK(row.word_targets[t] == doctest::Approx(0.8));
  }
  CHECK(active == 8);  // one piece per character

  // leading [cls] token carries word_index -1 and is excluded
  CHECK(tk.pieces.front().word_index == -1);
  CHECK(row.loss_active.front() == 0.0);

  // 2 words -> 3 subwords + 2 specials = 5 rows, 3 loss-active
  Vocabulary v2 = Vocabulary::build({{"ab"}});  // "ab" known, "xy" falls back to 2 chars
  AnnotatedSentence s2;
  s2.id = "a2";
  s2.words = {"ab", "xy"};
  s2.word_scores = {{1.0}, {0.5}};
  s2.provenance = Provenance::human;
  Tokenization tk2 = tokenize(v2, s2.words, 64);
  CHECK(tk2.pieces.size() == 5);
  AlignedRow row2 = align_annotations(s2, tk2, task);
  int active2 = 0;
  for (double a : row2.loss_active) active2 += a > 0.5 ? 1 : 0;
  CHECK(active2 == 3);
}

TEST_CASE("alignment conservation and zero-subword error") {
  StyleTask task = StyleTask::builtin("sentiment");
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::string> words;
    int len = 1 + static_cast<int>(rng() % 8);
    for (int i = 0; i < len; ++i) {
      words.push_back(rng() % 2 == 0 ? "known" + std::to_string(rng() % 4)
                                     : "zz" + std::to_string(rng() % 4));
    }
    Vocabulary vocab = Vocabulary::build({{"known0", "known1", "known2", "known3"}});
    Tokenization tk = tokenize(vocab, words, 512);
    // multiset of word indices among non-special tokens covers every word
    std::set<int> seen;
    for (const auto& p : tk.pieces) {
      if (p.word_index >= 0) seen.insert(p.word_index);
    }
    CHECK(seen.size() == words.size());
    CHECK(*seen.begin() == 0);
    CHECK(*seen.rbegin() == len - 1);
  }

  AnnotatedSentence s;
  s.id = "bad";
  s.words = {"a", ""};
  Vocabulary vocab = Vocabulary::build({{"a"}});
  CHECK_THROWS_AS(static_cast<void>(tokenize(vocab, s.words, 16)), AlignmentError);

  // a tokenization that skips word 1 entirely
  Tokenization missing;
  missing.pieces = {{Vocabulary::kCls, -1, "[cls]"},
                    {4, 0, "a"},
                    {Vocabulary::kSep, -1, "[sep]"}};
  AnnotatedSentence s2;
  s2.id = "skip";
  s2.words = {"a", "b"};
  CHECK_THROWS_AS(static_cast<void>(align_annotations(s2, missing, task)), AlignmentError);
}

TEST_CASE("lexicon loading dedupes, skips comments, rejects empty") {
  std::string path = write_temp("stylex_lex.txt", "happy\nlove\nhappy\n# comment\n");
  LexiconDictionary lex = load_lexicon(path);
  CHECK(lex.entries == std::set<std::string>{"happy", "love"});

  std::string empty = write_temp("stylex_lex_empty.txt", "# header only\n");
  CHECK_THROWS_AS(static_cast<void>(load_lexicon(empty)), ValidationError);

  std::string offensive = write_temp("stylex_lex_off.txt", "bitch\nbitches\npussy\n");
  CHECK(load_lexicon(offensive).entries.count("bitch") == 1);

  std::string spaced = write_temp("stylex_lex_ws.txt", "two words\n");
  CHECK_THROWS_AS(static_cast<void>(load_lexicon(spaced)), ValidationError);
}

TEST_CASE("pseudo provenance records validate per-class scores") {
  StyleTask task = StyleTask::builtin("sentiment");
  std::string ok = write_temp(
      "stylex_pseudo_ok.jsonl",
      R"({"id":"p1","words":["a","b"],"word_scores":[[0.9,0.1],[0.2,0.8]],"label":0,"provenance":"pseudo"})"
      "\n");
  auto corpus = load_corpus(ok, task);
  CHECK(corpus[0].provenance == Provenance::pseudo);
  CHECK(corpus[0].word_scores[1][1] == 0.8);

  std::string bad = write_temp(
      "stylex_pseudo_bad.jsonl",
      R"({"id":"p2","words":["a"],"word_scores":[[0.9,1.4]],"label":0,"provenance":"pseudo"})"
      "\n");
  CHECK_THROWS_AS(static_cast<void>(load_corpus(bad, task)), ValidationError);

  std::string human_oor = write_temp(
      "stylex_human_oor.jsonl",
      R"({"id":"h1","words":["a"],"word_scores":[1.5],"label":0})"
      "\n");
  CHECK_THROWS_AS(static_cast<void>(load_corpus(human_oor, task)), ValidationError);
}

TEST_CASE("make_token_batch pads and masks") {
  StyleTask task = StyleTask::builtin("sentiment");
  Vocabulary vocab = Vocabulary::build({{"good", "bad", "movie"}});
  AnnotatedSentence a;
  a.id = "a";
  a.words = {"good", "movie"};
  a.word_scores = {{1.0}, {0.0}};
  a.provenance = Provenance::human;
  a.sentence_label = 0;
  AnnotatedSentence b;
  b.id = "b";
  b.words = {"bad"};
  b.word_scores = {{-1.0}};
  b.provenance = Provenance::human;
  b.sentence_label = 1;

  std::vector<const AnnotatedSentence*> ptrs{&a, &b};
  TokenBatch batch = make_token_batch(ptrs, task, vocab, 32);
  CHECK(batch.batch == 2);
  CHECK(batch.seq == 4);  // [cls] good movie [sep]
  CHECK(batch.d == 2);
  // row b padded to length 4
  CHECK(batch.attention_mask[1 * 4 + 3] == 0.0);
  CHECK(batch.token_ids[1 * 4 + 3] == Vocabulary::kPad);
  CHECK(batch.word_index[1 * 4 + 3] == -1);
  // "bad" with score -1 -> target (0, 1)
  CHECK(batch.word_targets[(1 * 4 + 1) * 2 + 0] == 0.0);
  CHECK(batch.word_targets[(1 * 4 + 1) * 2 + 1] == 1.0);
  CHECK(batch.sentence_targets == std::vector<int>{0, 1});
}
