#include "stylex/data.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>

namespace stylex {

namespace {
using nlohmann::json;
using nlohmann::ordered_json;
}  // namespace

void StyleTask::validate() const {
  if (name.empty()) throw ValidationError("style task needs a name");
  if (d_l_word != 1 && d_l_word != 2) {
    throw ValidationError("d_l_word must be 1 or 2, got " + std::to_string(d_l_word));
  }
  if (sentence_labels.first.empty() || sentence_labels.second.empty()) {
    throw ValidationError("style task needs exactly two sentence labels");
  }
  if (positive_word_classes.empty()) {
    throw ValidationError("positive_word_classes must not be empty");
  }
  for (int c : positive_word_classes) {
    if (c < 0 || c >= d_l_word) {
      throw ValidationError("positive word class index out of range");
    }
  }
}

const std::vector<std::string>& StyleTask::builtin_names() {
  static const std::vector<std::string> names{
      "politeness", "sentiment", "offensiveness", "anger",
      "disgust",    "fear",      "joy",           "sadness"};
  return names;
}

StyleTask StyleTask::builtin(const std::string& name) {
  StyleTask t;
  t.name = name;
  if (name == "politeness") {
    t.d_l_word = 2;
    t.sentence_labels = {"polite", "impolite"};
  } else if (name == "sentiment") {
    t.d_l_word = 2;
    t.sentence_labels = {"positive", "negative"};
  } else if (name == "offensiveness") {
    t.d_l_word = 1;
    t.sentence_labels = {"offensive", "not offensive"};
  } else if (name == "anger" || name == "disgust" || name == "fear" ||
             name == "joy" || name == "sadness") {
    t.d_l_word = 1;
    t.sentence_labels = {name, "not " + name};
  } else {
    throw ValidationError("unknown builtin style: " + name);
  }
  t.positive_word_classes = {0};
  t.validate();
  return t;
}

std::string provenance_name(Provenance p) {
  switch (p) {
    case Provenance::human: return "human";
    case Provenance::pseudo: return "pseudo";
    case Provenance::none: return "none";
  }
  return "none";
}

Provenance provenance_from_name(const std::string& s) {
  if (s == "human") return Provenance::human;
  if (s == "pseudo") return Provenance::pseudo;
  if (s == "none") return Provenance::none;
  throw ValidationError("unknown provenance: " + s);
}

std::vector<double> score_to_target(double score, int d_l_word) {
  if (score < -1.0 || score > 1.0 || !std::isfinite(score)) {
    throw RangeError("perception score outside [-1, 1]");
  }
  if (d_l_word == 2) return {std::max(score, 0.0), std::max(-score, 0.0)};
  if (d_l_word == 1) return {std::abs(score)};
  throw RangeError("d_l_word must be 1 or 2");
}

namespace {

std::vector<std::vector<double>> parse_word_scores(const json& arr,
                                                   const std::string& rec_id) {
  std::vector<std::vector<double>> scores;
  scores.reserve(arr.size());
  for (const auto& e : arr) {
    if (e.is_number()) {
      scores.push_back({e.get<double>()});
    } else if (e.is_array()) {
      std::vector<double> v;
      for (const auto& x : e) {
        if (!x.is_number()) {
          throw ValidationError("record " + rec_id + ": non-numeric word score");
        }
        v.push_back(x.get<double>());
      }
      scores.push_back(std::move(v));
    } else {
      throw ValidationError("record " + rec_id + ": word score must be number or array");
    }
  }
  return scores;
}

void validate_sentence(const AnnotatedSentence& s, const StyleTask& task) {
  if (s.sentence_label != 0 && s.sentence_label != 1) {
    throw ValidationError("record " + s.id + ": label must be 0 or 1");
  }
  if (!s.word_scores.empty()) {
    if (s.word_scores.size() != s.words.size()) {
      throw ValidationError("record " + s.id + ": word_scores length " +
                            std::to_string(s.word_scores.size()) +
                            " does not match words length " +
                            std::to_string(s.words.size()));
    }
    if (s.provenance == Provenance::none) {
      throw ValidationError("record " + s.id + ": scores present but provenance is none");
    }
    for (const auto& ws : s.word_scores) {
      if (s.provenance == Provenance::human) {
        if (ws.size() != 1) {
          throw ValidationError("record " + s.id + ": human scores must be scalar per word");
        }
        if (ws[0] < -1.0 || ws[0] > 1.0) {
          throw ValidationError("record " + s.id + ": human score outside [-1, 1]");
        }
      } else {  // pseudo
        if (static_cast<int>(ws.size()) != task.d_l_word) {
          throw ValidationError("record " + s.id + ": pseudo scores must have d_l_word entries");
        }
        for (double v : ws) {
          if (v < 0.0 || v > 1.0) {
            throw ValidationError("record " + s.id + ": pseudo score outside [0, 1]");
          }
        }
      }
    }
  } else if (s.provenance != Provenance::none) {
    throw ValidationError("record " + s.id + ": provenance set but no scores present");
  }
}

}  // namespace

std::vector<AnnotatedSentence> load_corpus(const std::string& path, const StyleTask& task) {
  task.validate();
  std::ifstream in(path);
  if (!in) throw IoError("cannot open corpus file: " + path);
  std::vector<AnnotatedSentence> corpus;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!rec.is_object() || !rec.contains("words") || !rec.contains("label")) {
      throw ParseError("line " + std::to_string(line_no) +
                       ": record needs 'words' and 'label' fields");
    }
    AnnotatedSentence s;
    s.id = rec.contains("id") ? rec.at("id").get<std::string>()
                              : "line-" + std::to_string(line_no);
    for (const auto& w : rec.at("words")) s.words.push_back(w.get<std::string>());
    s.sentence_label = rec.at("label").get<int>();
    if (rec.contains("word_scores") && !rec.at("word_scores").is_null()) {
      s.word_scores = parse_word_scores(rec.at("word_scores"), s.id);
      s.provenance = rec.contains("provenance")
                         ? provenance_from_name(rec.at("provenance").get<std::string>())
                         : Provenance::human;
    } else {
      s.provenance = rec.contains("provenance")
                         ? provenance_from_name(rec.at("provenance").get<std::string>())
                         : Provenance::none;
    }
    validate_sentence(s, task);
    corpus.push_back(std::move(s));
  }
  return corpus;
}

void serialize_corpus(const std::vector<AnnotatedSentence>& corpus, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write corpus file: " + path);
  for (const auto& s : corpus) {
    ordered_json rec;
    rec["id"] = s.id;
    rec["words"] = s.words;
    if (s.has_scores()) {
      json arr = json::array();
      for (const auto& ws : s.word_scores) {
        if (ws.size() == 1 && s.provenance == Provenance::human) {
          arr.push_back(ws[0]);
        } else {
          arr.push_back(ws);
        }
      }
      rec["word_scores"] = arr;
    }
    rec["label"] = s.sentence_label;
    rec["provenance"] = provenance_name(s.provenance);
    out << rec.dump() << "\n";
  }
}

AlignedRow align_annotations(const AnnotatedSentence& sentence,
                             const Tokenization& tokenization, const StyleTask& task) {
  task.validate();
  const int d = task.d_l_word;
  const int n_words = static_cast<int>(sentence.words.size());
  const int seq = static_cast<int>(tokenization.pieces.size());

  // Per-word target vectors, resolved once.
  std::vector<std::vector<double>> targets;
  if (sentence.has_scores()) {
    targets.reserve(sentence.word_scores.size());
    for (const auto& ws : sentence.word_scores) {
      if (sentence.provenance == Provenance::human) {
        targets.push_back(score_to_target(ws[0], d));
      } else {
        if (static_cast<int>(ws.size()) != d) {
          throw ValidationError("record " + sentence.id + ": score arity mismatch");
        }
        targets.push_back(ws);
      }
    }
  }

  std::vector<bool> covered(static_cast<std::size_t>(n_words), false);
  AlignedRow row;
  row.word_targets.assign(static_cast<std::size_t>(seq) * d, 0.0);
  row.loss_active.assign(static_cast<std::size_t>(seq), 0.0);
  for (int t = 0; t < seq; ++t) {
    int wi = tokenization.pieces[static_cast<std::size_t>(t)].word_index;
    if (wi < 0) continue;
    if (wi >= n_words) {
      throw AlignmentError("record " + sentence.id + ": token maps to nonexistent word");
    }
    covered[static_cast<std::size_t>(wi)] = true;
    if (!targets.empty()) {
      for (int c = 0; c < d; ++c) {
        row.word_targets[static_cast<std::size_t>(t) * d + c] =
            targets[static_cast<std::size_t>(wi)][static_cast<std::size_t>(c)];
      }
      row.loss_active[static_cast<std::size_t>(t)] = 1.0;
    }
  }
  if (!tokenization.truncated) {
    for (int j = 0; j < n_words; ++j) {
      if (!covered[static_cast<std::size_t>(j)]) {
        throw AlignmentError("record " + sentence.id + ": word " + std::to_string(j) +
                             " produced zero subwords");
      }
    }
  }
  return row;
}

TokenBatch make_token_batch(const std::vector<const AnnotatedSentence*>& sentences,
                            const StyleTask& task, const Vocabulary& vocab,
                            int max_seq_len) {
  if (sentences.empty()) throw ValidationError("make_token_batch: empty batch");
  const int d = task.d_l_word;
  std::vector<Tokenization> toks;
  toks.reserve(sentences.size());
  int seq = 0;
  for (const AnnotatedSentence* s : sentences) {
    toks.push_back(tokenize(vocab, s->words, max_seq_len));
    seq = std::max(seq, static_cast<int>(toks.back().pieces.size()));
  }
  TokenBatch b;
  b.batch = static_cast<int>(sentences.size());
  b.seq = seq;
  b.d = d;
  b.token_ids.assign(static_cast<std::size_t>(b.batch) * seq, Vocabulary::kPad);
  b.attention_mask = Tensor::zeros({b.batch, seq});
  b.word_index.assign(static_cast<std::size_t>(b.batch) * seq, -1);
  b.word_targets = Tensor::zeros({b.batch, seq, d});
  b.loss_active = Tensor::zeros({b.batch, seq});
  for (int i = 0; i < b.batch; ++i) {
    const AnnotatedSentence& s = *sentences[static_cast<std::size_t>(i)];
    const Tokenization& tk = toks[static_cast<std::size_t>(i)];
    AlignedRow row = align_annotations(s, tk, task);
    const int n = static_cast<int>(tk.pieces.size());
    for (int t = 0; t < n; ++t) {
      b.token_ids[static_cast<std::size_t>(i) * seq + t] = tk.pieces[static_cast<std::size_t>(t)].id;
      b.attention_mask[static_cast<std::int64_t>(i) * seq + t] = 1.0;
      b.word_index[static_cast<std::size_t>(i) * seq + t] =
          tk.pieces[static_cast<std::size_t>(t)].word_index;
      b.loss_active[static_cast<std::int64_t>(i) * seq + t] =
          row.loss_active[static_cast<std::size_t>(t)];
      for (int c = 0; c < d; ++c) {
        b.word_targets[(static_cast<std::int64_t>(i) * seq + t) * d + c] =
            row.word_targets[static_cast<std::size_t>(t) * d + c];
      }
    }
    b.sentence_targets.push_back(s.sentence_label);
  }
  return b;
}

TokenBatch make_token_batch(const std::vector<AnnotatedSentence>& sentences,
                            const StyleTask& task, const Vocabulary& vocab,
                            int max_seq_len) {
  std::vector<const AnnotatedSentence*> ptrs;
  ptrs.reserve(sentences.size());
  for (const auto& s : sentences) ptrs.push_back(&s);
  return make_token_batch(ptrs, task, vocab, max_seq_len);
}

LexiconDictionary load_lexicon(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open lexicon file: " + path);
  LexiconDictionary lex;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    // trim
    auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    auto e = line.find_last_not_of(" \t\r");
    std::string entry = line.substr(b, e - b + 1);
    for (char c : entry) {
      if (std::isspace(static_cast<unsigned char>(c))) {
        throw ValidationError("lexicon line " + std::to_string(line_no) +
                              ": entry contains whitespace");
      }
    }
    lex.entries.insert(to_lower(entry));
  }
  if (lex.entries.empty()) {
    throw ValidationError("lexicon is empty after parsing: " + path);
  }
  return lex;
}

std::vector<AnnotatedSentence> strip_word_scores(const std::vector<AnnotatedSentence>& corpus) {
  std::vector<AnnotatedSentence> out = corpus;
  for (auto& s : out) {
    s.word_scores.clear();
    s.provenance = Provenance::none;
  }
  return out;
}

}  // namespace stylex
