#include "stylex/model.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace stylex {

namespace {

using MapConst = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                                Eigen::RowMajor>>;
using MapMat = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                        Eigen::RowMajor>>;

double stable_bce_with_logit(double x, double t) {
  return std::max(x, 0.0) - x * t + std::log1p(std::exp(-std::abs(x)));
}

double binary_f1_counts(long tp, long fp, long fn) {
  if (tp == 0) return 0.0;
  double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  double recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  return 2.0 * precision * recall / (precision + recall);
}

}  // namespace

Tensor word_logits(const Tensor& hidden, const Tensor& w_word, const Tensor& b_word) {
  if (hidden.rank() != 3) throw ShapeError("word_logits: hidden must be (B,S,H)");
  const int h = hidden.dim(2);
  if (w_word.rank() != 2 || w_word.dim(0) != h) {
    throw ShapeError("word_logits: W_word must be (H,d)");
  }
  const int d = w_word.dim(1);
  if (b_word.rank() != 1 || b_word.dim(0) != d) {
    throw ShapeError("word_logits: b_word must have d entries");
  }
  for (std::int64_t i = 0; i < hidden.numel(); ++i) {
    if (!std::isfinite(hidden[i])) throw NumericError("word_logits: non-finite hidden state");
  }
  const std::int64_t rows = static_cast<std::int64_t>(hidden.dim(0)) * hidden.dim(1);
  Tensor out({hidden.dim(0), hidden.dim(1), d});
  MapMat(out.data(), rows, d).noalias() =
      MapConst(hidden.data(), rows, h) * MapConst(w_word.data(), h, d);
  for (std::int64_t r = 0; r < rows; ++r)
    for (int c = 0; c < d; ++c) out[r * d + c] += b_word[c];
  return out;
}

Tensor aggregate(const Tensor& hidden, const Tensor& wl, const Tensor& mask) {
  if (hidden.rank() != 3 || wl.rank() != 3) {
    throw ShapeError("aggregate: expects (B,S,H) and (B,S,d)");
  }
  if (hidden.dim(0) != wl.dim(0) || hidden.dim(1) != wl.dim(1)) {
    throw ShapeError("aggregate: batch/seq mismatch");
  }
  const int bsz = hidden.dim(0), seq = hidden.dim(1), h = hidden.dim(2), d = wl.dim(2);
  if (mask.rank() != 2 || mask.dim(0) != bsz || mask.dim(1) != seq) {
    throw ShapeError("aggregate: mask must be (B,S)");
  }
  Tensor out({bsz, h + d});
  for (int b = 0; b < bsz; ++b) {
    bool any = false;
    for (int i = 0; i < seq; ++i) {
      if (mask[static_cast<std::int64_t>(b) * seq + i] > 0.5) { any = true; break; }
    }
    if (!any) throw DegenerateInputError("aggregate: fully masked row " + std::to_string(b));
    for (int f = 0; f < h + d; ++f) {
      double best = 0.0;
      bool first = true;
      for (int i = 0; i < seq; ++i) {
        if (mask[static_cast<std::int64_t>(b) * seq + i] <= 0.5) continue;
        double v = f < h ? hidden[(static_cast<std::int64_t>(b) * seq + i) * h + f]
                         : wl[(static_cast<std::int64_t>(b) * seq + i) * d + (f - h)];
        if (first || v > best) { best = v; first = false; }
      }
      out[static_cast<std::int64_t>(b) * (h + d) + f] = best;
    }
  }
  return out;
}

SentencePrediction softmax_predict(double logit0, double logit1) {
  double mx = std::max(logit0, logit1);
  double e0 = std::exp(logit0 - mx);
  double e1 = std::exp(logit1 - mx);
  double z = e0 + e1;
  SentencePrediction p;
  p.probabilities = {e0 / z, e1 / z};
  p.predicted = p.probabilities[1] > p.probabilities[0] ? 1 : 0;
  return p;
}

SentencePrediction sentence_predict(const Tensor& v, const Tensor& w_sentence,
                                    const Tensor& b_sentence) {
  if (v.rank() != 1) throw ShapeError("sentence_predict: v must be a vector");
  const int f = v.dim(0);
  if (w_sentence.rank() != 2 || w_sentence.dim(0) != f || w_sentence.dim(1) != 2) {
    throw ShapeError("sentence_predict: W_sentence must be (H+d, 2)");
  }
  if (b_sentence.rank() != 1 || b_sentence.dim(0) != 2) {
    throw ShapeError("sentence_predict: b_sentence must have 2 entries");
  }
  double l0 = b_sentence[0], l1 = b_sentence[1];
  for (int i = 0; i < f; ++i) {
    l0 += v[i] * w_sentence[static_cast<std::int64_t>(i) * 2];
    l1 += v[i] * w_sentence[static_cast<std::int64_t>(i) * 2 + 1];
  }
  return softmax_predict(l0, l1);
}

JointLossValue joint_loss(const Tensor& wl, const Tensor& word_targets,
                          const Tensor& loss_active, const Tensor& sentence_logits,
                          const std::vector<int>& sentence_targets, double alpha) {
  if (alpha < 0.0) throw RangeError("alpha must be nonnegative");
  if (wl.rank() != 3 || word_targets.shape() != wl.shape()) {
    throw ShapeError("joint_loss: word logits/targets mismatch");
  }
  const int bsz = wl.dim(0), seq = wl.dim(1), d = wl.dim(2);
  if (loss_active.rank() != 2 || loss_active.dim(0) != bsz || loss_active.dim(1) != seq) {
    throw ShapeError("joint_loss: loss_active must be (B,S)");
  }
  if (sentence_logits.rank() != 2 || sentence_logits.dim(0) != bsz ||
      sentence_logits.dim(1) != 2) {
    throw ShapeError("joint_loss: sentence logits must be (B,2)");
  }
  if (static_cast<int>(sentence_targets.size()) != bsz) {
    throw ShapeError("joint_loss: sentence target count mismatch");
  }
  for (std::int64_t i = 0; i < word_targets.numel(); ++i) {
    if (word_targets[i] < 0.0 || word_targets[i] > 1.0) {
      throw RangeError("joint_loss: word target outside [0,1]");
    }
  }

  JointLossValue out;
  long active = 0;
  double word_sum = 0.0;
  for (int b = 0; b < bsz; ++b) {
    for (int i = 0; i < seq; ++i) {
      if (loss_active[static_cast<std::int64_t>(b) * seq + i] <= 0.5) continue;
      ++active;
      for (int c = 0; c < d; ++c) {
        std::int64_t idx = (static_cast<std::int64_t>(b) * seq + i) * d + c;
        word_sum += stable_bce_with_logit(wl[idx], word_targets[idx]);
      }
    }
  }
  if (active == 0) {
    out.word = 0.0;
    out.word_loss_empty = true;
  } else {
    out.word = word_sum / (static_cast<double>(active) * d);
  }

  double style_sum = 0.0;
  for (int b = 0; b < bsz; ++b) {
    int y = sentence_targets[static_cast<std::size_t>(b)];
    if (y != 0 && y != 1) throw ValidationError("joint_loss: sentence target must be 0/1");
    double l0 = sentence_logits[static_cast<std::int64_t>(b) * 2];
    double l1 = sentence_logits[static_cast<std::int64_t>(b) * 2 + 1];
    double mx = std::max(l0, l1);
    double lse = mx + std::log(std::exp(l0 - mx) + std::exp(l1 - mx));
    style_sum += -((y == 0 ? l0 : l1) - lse);
  }
  out.style = style_sum / bsz;
  out.total = out.style + alpha * out.word;
  return out;
}

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (learning_rate <= 0.0) throw ConfigError("learning_rate must be positive");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be nonnegative");
}

void AdamW::step(const BindingList& binds, Graph& g, double lr, double weight_decay) {
  if (slots_.empty()) {
    slots_.resize(binds.size());
    for (std::size_t i = 0; i < binds.size(); ++i) {
      slots_[i].m = Tensor::zeros(binds[i].param->shape());
      slots_[i].v = Tensor::zeros(binds[i].param->shape());
    }
  }
  if (slots_.size() != binds.size()) {
    throw StateError("optimizer binding count changed between steps");
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < binds.size(); ++i) {
    Tensor& p = *binds[i].param;
    const Tensor& grad = g.grad(binds[i].var);
    Tensor& m = slots_[i].m;
    Tensor& v = slots_[i].v;
    for (std::int64_t j = 0; j < p.numel(); ++j) {
      double gj = grad[j];
      m[j] = kBeta1 * m[j] + (1.0 - kBeta1) * gj;
      v[j] = kBeta2 * v[j] + (1.0 - kBeta2) * gj * gj;
      double mh = m[j] / bc1;
      double vh = v[j] / bc2;
      p[j] -= lr * (mh / (std::sqrt(vh) + kEps) + weight_decay * p[j]);
    }
  }
}

StylexModel::StylexModel(StyleTask task, EncoderConfig cfg, const Vocabulary& vocab,
                         std::uint64_t init_seed, double alpha)
    : task_(std::move(task)), vocab_(vocab), alpha_(alpha) {
  task_.validate();
  if (alpha_ < 0.0) throw ValidationError("alpha must be nonnegative");
  if (!vocab_.initialized()) throw ValidationError("vocabulary is empty");
  cfg.vocab_size = vocab_.size();
  cfg.validate();
  std::mt19937_64 rng(init_seed);
  encoder_ = TinyTransformerEncoder(cfg, rng);
  const int h = cfg.hidden_size;
  const int d = task_.d_l_word;
  w_word_ = Tensor({h, d});
  w_word_.fill_normal(rng, 0.0, 0.02);
  b_word_ = Tensor::zeros({d});
  w_sentence_ = Tensor({h + d, 2});
  w_sentence_.fill_normal(rng, 0.0, 0.02);
  b_sentence_ = Tensor::zeros({2});
}

void StylexModel::register_params(ParamRegistry& reg) {
  encoder_.register_params(reg);
  reg.emplace_back("head.w_word", &w_word_);
  reg.emplace_back("head.b_word", &b_word_);
  reg.emplace_back("head.w_sentence", &w_sentence_);
  reg.emplace_back("head.b_sentence", &b_sentence_);
}

std::vector<Tensor> StylexModel::snapshot_params() {
  ParamRegistry reg;
  register_params(reg);
  std::vector<Tensor> out;
  out.reserve(reg.size());
  for (auto& [name, t] : reg) out.push_back(*t);
  return out;
}

void StylexModel::restore_params(const std::vector<Tensor>& snapshot) {
  ParamRegistry reg;
  register_params(reg);
  if (snapshot.size() != reg.size()) throw StateError("parameter snapshot mismatch");
  for (std::size_t i = 0; i < reg.size(); ++i) *reg[i].second = snapshot[i];
}

StylexModel::GraphOut StylexModel::forward_graph(Graph& g, const TokenBatch& batch,
                                                 bool training, std::mt19937_64* rng,
                                                 BindingList* binds,
                                                 VarId embeddings_override) {
  if (!initialized()) throw StateError("model is uninitialized");
  if (batch.d != task_.d_l_word) {
    throw CompatibilityError("batch word-target arity does not match task");
  }
  const int h = encoder_.config().hidden_size;
  const int d = task_.d_l_word;
  const bool rg = binds != nullptr;
  GraphOut out;
  out.hidden = encoder_.encode_graph(g, batch, training, rng, binds, embeddings_override);
  VarId flat = g.reshape(out.hidden, {batch.batch * batch.seq, h});
  VarId wl = g.add_bias(g.matmul(flat, bind_param(g, w_word_, binds, rg)),
                        bind_param(g, b_word_, binds, rg));
  out.word_logits = g.reshape(wl, {batch.batch, batch.seq, d});
  VarId cat = g.concat_lastdim(out.hidden, out.word_logits);
  out.pooled = g.masked_max_seq(cat, batch.attention_mask);
  out.sent_logits = g.add_bias(g.matmul(out.pooled, bind_param(g, w_sentence_, binds, rg)),
                               bind_param(g, b_sentence_, binds, rg));
  return out;
}

StylexModel::EvalOut StylexModel::evaluate(const TokenBatch& batch) {
  Graph g;
  GraphOut o = forward_graph(g, batch, /*training=*/false, nullptr, nullptr);
  return EvalOut{g.value(o.hidden), g.value(o.word_logits), g.value(o.sent_logits)};
}

Explanation StylexModel::explain(const AnnotatedSentence& sentence) {
  return explain(sentence.words);
}

Explanation StylexModel::explain(const std::vector<std::string>& words) {
  if (!initialized()) throw StateError("explain: model is uninitialized");
  if (!trained_) throw StateError("explain: model has not been trained");
  AnnotatedSentence s;
  s.words = words;
  TokenBatch batch = make_token_batch({&s}, task_, vocab_, encoder_.config().max_seq_len);
  EvalOut ev = evaluate(batch);
  const int d = task_.d_l_word;
  const int seq = batch.seq;

  Explanation ex;
  Tokenization tk = tokenize(vocab_, words, encoder_.config().max_seq_len);
  std::vector<int> kept;  // positions of non-special tokens
  for (int t = 0; t < seq; ++t) {
    if (batch.word_index[static_cast<std::size_t>(t)] >= 0) kept.push_back(t);
  }
  ex.tokens.reserve(kept.size());
  ex.token_scores = Tensor({static_cast<int>(kept.size()), d});
  for (std::size_t r = 0; r < kept.size(); ++r) {
    ex.tokens.push_back(tk.pieces[static_cast<std::size_t>(kept[r])].text);
    for (int c = 0; c < d; ++c) {
      double logit = ev.word_logits[static_cast<std::int64_t>(kept[r]) * d + c];
      ex.token_scores[static_cast<std::int64_t>(r) * d + c] = 1.0 / (1.0 + std::exp(-logit));
    }
  }
  const int n_words = static_cast<int>(words.size());
  ex.word_scores = Tensor::zeros({n_words, d});
  std::vector<int> counts(static_cast<std::size_t>(n_words), 0);
  for (std::size_t r = 0; r < kept.size(); ++r) {
    int wi = batch.word_index[static_cast<std::size_t>(kept[r])];
    ++counts[static_cast<std::size_t>(wi)];
    for (int c = 0; c < d; ++c) {
      ex.word_scores[static_cast<std::int64_t>(wi) * d + c] +=
          ex.token_scores[static_cast<std::int64_t>(r) * d + c];
    }
  }
  for (int w = 0; w < n_words; ++w) {
    if (counts[static_cast<std::size_t>(w)] == 0) continue;
    for (int c = 0; c < d; ++c) {
      ex.word_scores[static_cast<std::int64_t>(w) * d + c] /=
          counts[static_cast<std::size_t>(w)];
    }
  }
  SentencePrediction p = softmax_predict(ev.sent_logits[0], ev.sent_logits[1]);
  ex.predicted_label = p.predicted;
  ex.label_probability = p.probabilities[static_cast<std::size_t>(p.predicted)];
  return ex;
}

std::vector<EpochMetrics> StylexModel::train(const std::vector<AnnotatedSentence>& corpus,
                                             const TrainConfig& cfg) {
  cfg.validate();
  if (!initialized()) throw StateError("train: model is uninitialized");
  if (corpus.empty()) throw ConfigError("train: empty corpus");
  if (cfg.word_loss_enabled) {
    for (const auto& s : corpus) {
      if (s.has_scores()) continue;
      throw ConfigError("train: sentence " + s.id +
                        " lacks word targets while word loss is enabled");
    }
  }
  Trainer trainer(*this, corpus, cfg);
  std::vector<EpochMetrics> metrics;
  for (int e = 0; e < cfg.epochs; ++e) metrics.push_back(trainer.run_epoch());
  if (cfg.epochs > 0) trained_ = true;
  return metrics;
}

Trainer::Trainer(StylexModel& model, const std::vector<AnnotatedSentence>& corpus,
                 TrainConfig cfg)
    : model_(model), corpus_(corpus), cfg_(cfg), rng_(cfg.seed) {
  cfg_.validate();
  if (corpus_.empty()) throw ConfigError("trainer: empty corpus");
}

EpochMetrics Trainer::run_epoch() {
  std::vector<std::size_t> order(corpus_.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng_);

  EpochMetrics em;
  em.word_loss_empty = true;
  int n_batches = 0;
  std::vector<int> preds, golds;
  const int bs = cfg_.batch_size;
  for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(bs)) {
    std::vector<const AnnotatedSentence*> chunk;
    for (std::size_t i = start; i < std::min(order.size(), start + static_cast<std::size_t>(bs)); ++i) {
      chunk.push_back(&corpus_[order[i]]);
    }
    TokenBatch batch = make_token_batch(chunk, model_.task(), model_.vocab(),
                                        model_.encoder_config().max_seq_len);
    Graph g;
    BindingList binds;
    StylexModel::GraphOut out = model_.forward_graph(g, batch, true, &rng_, &binds);
    VarId style = g.softmax_ce_mean(out.sent_logits, batch.sentence_targets);
    VarId total;
    double word_val = 0.0;
    if (cfg_.word_loss_enabled) {
      VarId word = g.bce_with_logits_mean(out.word_logits, batch.word_targets,
                                          batch.loss_active);
      total = g.add_scaled(style, word, 1.0, model_.alpha());
      word_val = g.value(word).item();
      bool has_active = false;
      for (std::int64_t i = 0; i < batch.loss_active.numel(); ++i) {
        if (batch.loss_active[i] > 0.5) { has_active = true; break; }
      }
      if (has_active) em.word_loss_empty = false;
    } else {
      total = style;
    }
    g.backward(total);
    opt_.step(binds, g, cfg_.learning_rate, cfg_.weight_decay);

    em.style_loss += g.value(style).item();
    em.word_loss += word_val;
    ++n_batches;
    const Tensor& logits = g.value(out.sent_logits);
    for (int b = 0; b < batch.batch; ++b) {
      double l0 = logits[static_cast<std::int64_t>(b) * 2];
      double l1 = logits[static_cast<std::int64_t>(b) * 2 + 1];
      preds.push_back(l1 > l0 ? 1 : 0);
      golds.push_back(batch.sentence_targets[static_cast<std::size_t>(b)]);
    }
  }
  em.style_loss /= n_batches;
  em.word_loss /= n_batches;
  long tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] == 0 && golds[i] == 0) ++tp;
    else if (preds[i] == 0 && golds[i] != 0) ++fp;
    else if (preds[i] != 0 && golds[i] == 0) ++fn;
  }
  em.train_f1 = binary_f1_counts(tp, fp, fn);
  return em;
}

PlainClassifier::PlainClassifier(StyleTask task, EncoderConfig cfg, const Vocabulary& vocab,
                                 std::uint64_t init_seed)
    : task_(std::move(task)), vocab_(vocab) {
  task_.validate();
  if (!vocab_.initialized()) throw ValidationError("vocabulary is empty");
  cfg.vocab_size = vocab_.size();
  cfg.validate();
  std::mt19937_64 rng(init_seed);
  encoder_ = TinyTransformerEncoder(cfg, rng);
  w_sentence_ = Tensor({cfg.hidden_size, 2});
  w_sentence_.fill_normal(rng, 0.0, 0.02);
  b_sentence_ = Tensor::zeros({2});
}

void PlainClassifier::register_params(ParamRegistry& reg) {
  encoder_.register_params(reg);
  reg.emplace_back("head.w_sentence", &w_sentence_);
  reg.emplace_back("head.b_sentence", &b_sentence_);
}

VarId PlainClassifier::forward_graph(Graph& g, const TokenBatch& batch, bool training,
                                     std::mt19937_64* rng, BindingList* binds) {
  const bool rg = binds != nullptr;
  VarId hidden = encoder_.encode_graph(g, batch, training, rng, binds);
  VarId pooled = g.masked_max_seq(hidden, batch.attention_mask);
  return g.add_bias(g.matmul(pooled, bind_param(g, w_sentence_, binds, rg)),
                    bind_param(g, b_sentence_, binds, rg));
}

std::vector<EpochMetrics> PlainClassifier::train(const std::vector<AnnotatedSentence>& corpus,
                                                 const TrainConfig& cfg) {
  cfg.validate();
  if (corpus.empty()) throw ConfigError("train: empty corpus");
  std::mt19937_64 rng(cfg.seed);
  AdamW opt;
  std::vector<EpochMetrics> metrics;
  for (int e = 0; e < cfg.epochs; ++e) {
    std::vector<std::size_t> order(corpus.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    EpochMetrics em;
    int n_batches = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      std::vector<const AnnotatedSentence*> chunk;
      for (std::size_t i = start;
           i < std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size)); ++i) {
        chunk.push_back(&corpus[order[i]]);
      }
      TokenBatch batch = make_token_batch(chunk, task_, vocab_,
                                          encoder_.config().max_seq_len);
      Graph g;
      BindingList binds;
      VarId logits = forward_graph(g, batch, true, &rng, &binds);
      VarId loss = g.softmax_ce_mean(logits, batch.sentence_targets);
      g.backward(loss);
      opt.step(binds, g, cfg.learning_rate, cfg.weight_decay);
      em.style_loss += g.value(loss).item();
      ++n_batches;
    }
    em.style_loss /= std::max(1, n_batches);
    metrics.push_back(em);
  }
  return metrics;
}

int PlainClassifier::predict(const std::vector<std::string>& words) {
  AnnotatedSentence s;
  s.words = words;
  TokenBatch batch = make_token_batch({&s}, task_, vocab_, encoder_.config().max_seq_len);
  Graph g;
  VarId logits = forward_graph(g, batch, false, nullptr, nullptr);
  const Tensor& l = g.value(logits);
  return l[1] > l[0] ? 1 : 0;
}

std::vector<int> PlainClassifier::predict_corpus(const std::vector<AnnotatedSentence>& corpus) {
  std::vector<int> out;
  out.reserve(corpus.size());
  const int bs = 64;
  for (std::size_t start = 0; start < corpus.size(); start += bs) {
    std::vector<const AnnotatedSentence*> chunk;
    for (std::size_t i = start; i < std::min(corpus.size(), start + bs); ++i) {
      chunk.push_back(&corpus[i]);
    }
    TokenBatch batch = make_token_batch(chunk, task_, vocab_,
                                        encoder_.config().max_seq_len);
    Graph g;
    VarId logits = forward_graph(g, batch, false, nullptr, nullptr);
    const Tensor& l = g.value(logits);
    for (int b = 0; b < batch.batch; ++b) {
      out.push_back(l[static_cast<std::int64_t>(b) * 2 + 1] > l[static_cast<std::int64_t>(b) * 2]
                        ? 1 : 0);
    }
  }
  return out;
}

}  // namespace stylex
