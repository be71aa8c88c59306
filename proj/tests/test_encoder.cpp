#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "stylex/encoder.hpp"

using namespace stylex;

namespace {

Vocabulary toy_vocab() {
  return Vocabulary::build({{"alpha", "beta", "gamma", "delta", "epsilon", "zeta"}});
}

TokenBatch batch_from_words(const std::vector<std::vector<std::string>>& rows,
                            const Vocabulary& vocab, const StyleTask& task,
                            int max_seq_len = 64) {
  std::vector<AnnotatedSentence> sents;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    AnnotatedSentence s;
    s.id = "s" + std::to_string(i);
    s.words = rows[i];
    sents.push_back(std::move(s));
  }
  return make_token_batch(sents, task, vocab, max_seq_len);
}

}  // namespace

TEST_CASE("encoder config invariants") {
  EncoderConfig c = EncoderConfig::desk_default();
  c.vocab_size = 10;
  CHECK_NOTHROW(c.validate());
  c.num_heads = 3;  // 64 % 3 != 0
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = EncoderConfig::desk_default();
  c.vocab_size = 10;
  c.max_seq_len = 0;
  CHECK_THROWS_AS(c.validate(), ValidationError);

  CHECK(EncoderConfig::paper_default().hidden_size == 768);
  CHECK(EncoderConfig::desk_default().hidden_size == 64);
}

TEST_CASE("tokenize: empty input, determinism, truncation") {
  Vocabulary vocab = toy_vocab();
  Tokenization empty = tokenize(vocab, std::string(""), 512);
  CHECK(empty.pieces.size() == 2);  // [cls] [sep] only
  int active = 0;
  for (const auto& p : empty.pieces) active += p.word_index >= 0 ? 1 : 0;
  CHECK(active == 0);

  Tokenization a = tokenize(vocab, std::string("alpha beta zeta"), 512);
  Tokenization b = tokenize(vocab, std::string("alpha beta zeta"), 512);
  REQUIRE(a.pieces.size() == b.pieces.size());
  for (std::size_t i = 0; i < a.pieces.size(); ++i) {
    CHECK(a.pieces[i].id == b.pieces[i].id);
    CHECK(a.pieces[i].word_index == b.pieces[i].word_index);
  }

  std::vector<std::string> long_input;
  for (int i = 0; i < 600; ++i) long_input.push_back("alpha");
  Tokenization t = tokenize(vocab, long_input, 512);
  CHECK(t.pieces.size() == 512);
  CHECK(t.truncated);
  CHECK(t.pieces.back().id == Vocabulary::kSep);
}

TEST_CASE("encode shape contract and padding determinism") {
  Vocabulary vocab = toy_vocab();
  StyleTask task = StyleTask::builtin("anger");
  EncoderConfig cfg = EncoderConfig::desk_default();
  cfg.vocab_size = vocab.size();
  std::mt19937_64 rng(5);
  TinyTransformerEncoder enc(cfg, rng);

  TokenBatch b2 = batch_from_words({{"alpha", "beta", "gamma", "delta", "epsilon",
                                     "zeta", "alpha", "beta"},
                                    {"beta", "gamma", "alpha", "zeta", "delta",
                                     "epsilon", "beta", "alpha"}},
                                   vocab, task);
  CHECK(b2.seq == 10);
  EncoderOutput out = enc.encode(b2);
  CHECK(out.hidden_states.shape() == std::vector<int>{2, 10, 64});
  for (std::int64_t i = 0; i < out.hidden_states.numel(); ++i) {
    CHECK(std::isfinite(out.hidden_states[i]));
  }

  // identical duplicated rows produce identical outputs in eval mode
  TokenBatch dup = batch_from_words({{"alpha", "beta"}, {"alpha", "beta"}}, vocab, task);
  EncoderOutput o = enc.encode(dup);
  const int stride = dup.seq * 64;
  for (int i = 0; i < stride; ++i) {
    CHECK(o.hidden_states[i] == o.hidden_states[stride + i]);
  }

  // single-token sentence
  TokenBatch one = batch_from_words({{"zeta"}}, vocab, task);
  CHECK(enc.encode(one).hidden_states.shape() == std::vector<int>{1, 3, 64});
}

TEST_CASE("encode is permutation-equivariant over the batch") {
  Vocabulary vocab = toy_vocab();
  StyleTask task = StyleTask::builtin("anger");
  EncoderConfig cfg = EncoderConfig::desk_default();
  cfg.vocab_size = vocab.size();
  std::mt19937_64 rng(6);
  TinyTransformerEncoder enc(cfg, rng);

  TokenBatch fwd = batch_from_words({{"alpha", "beta"}, {"gamma"}, {"zeta", "zeta"}},
                                    vocab, task);
  TokenBatch rev = batch_from_words({{"zeta", "zeta"}, {"gamma"}, {"alpha", "beta"}},
                                    vocab, task);
  Tensor hf = enc.encode(fwd).hidden_states;
  Tensor hr = enc.encode(rev).hidden_states;
  const int stride = fwd.seq * 64;
  for (int i = 0; i < stride; ++i) {
    CHECK(hf[i] == hr[2 * stride + i]);
    CHECK(hf[2 * stride + i] == hr[i]);
    CHECK(hf[stride + i] == hr[stride + i]);
  }
}

TEST_CASE("embed factorization and zero-embedding path") {
  Vocabulary vocab = toy_vocab();
  StyleTask task = StyleTask::builtin("anger");
  EncoderConfig cfg = EncoderConfig::desk_default();
  cfg.vocab_size = vocab.size();
  std::mt19937_64 rng(7);
  TinyTransformerEncoder enc(cfg, rng);

  TokenBatch batch = batch_from_words({{"alpha", "gamma", "zeta"}}, vocab, task);
  Tensor emb = enc.embed(batch);
  CHECK(emb.shape() == std::vector<int>{1, batch.seq, 64});

  // embed-then-encode equals encode-on-ids
  Tensor direct = enc.encode(batch).hidden_states;
  Graph g;
  VarId e = g.constant(emb);
  VarId h = enc.encode_graph(g, batch, false, nullptr, nullptr, e);
  const Tensor& via_embed = g.value(h);
  REQUIRE(via_embed.numel() == direct.numel());
  for (std::int64_t i = 0; i < direct.numel(); ++i) {
    CHECK(via_embed[i] == direct[i]);
  }

  // zero embeddings are a valid encode input (the attribution baseline)
  Graph g2;
  VarId z = g2.constant(Tensor::zeros({1, batch.seq, 64}));
  CHECK_NOTHROW(static_cast<void>(enc.encode_graph(g2, batch, false, nullptr, nullptr, z)));

  // out-of-vocabulary id is rejected
  TokenBatch bad = batch;
  bad.token_ids[1] = vocab.size() + 3;
  CHECK_THROWS_AS(enc.encode(bad), VocabularyError);
}

TEST_CASE("autodiff matches finite differences through the full encoder") {
  // 2-layer, H=16 configuration; relative tolerance 1e-3
  Vocabulary vocab = toy_vocab();
  StyleTask task = StyleTask::builtin("anger");
  EncoderConfig cfg;
  cfg.hidden_size = 16;
  cfg.num_layers = 2;
  cfg.num_heads = 4;
  cfg.max_seq_len = 32;
  cfg.dropout = 0.1;  // inactive in eval mode
  cfg.vocab_size = vocab.size();
  std::mt19937_64 rng(8);
  TinyTransformerEncoder enc(cfg, rng);

  TokenBatch batch = batch_from_words({{"alpha", "beta", "gamma", "delta"}}, vocab, task, 32);
  Tensor x0 = enc.embed(batch);

  // weighted scalar loss of the encoder output
  Tensor w({1, batch.seq, 16});
  std::mt19937_64 wrng(9);
  w.fill_normal(wrng, 0.0, 1.0);
  auto loss_of = [&](const Tensor& emb, Tensor* grad) {
    Graph g;
    VarId e = g.leaf(emb, grad != nullptr);
    VarId h = enc.encode_graph(g, batch, false, nullptr, nullptr, e);
    VarId s = g.reduce_sum(g.mul(g.sigmoid(h), g.constant(w)));
    double v = g.value(s).item();
    if (grad != nullptr) {
      g.backward(s);
      *grad = g.grad(e);
    }
    return v;
  };

  Tensor autodiff;
  loss_of(x0, &autodiff);
  const double eps = 1e-5;
  for (std::int64_t i = 0; i < x0.numel(); i += 7) {  // sample every 7th entry
    Tensor xp = x0, xm = x0;
    xp[i] += eps;
    xm[i] -= eps;
    double fd = (loss_of(xp, nullptr) - loss_of(xm, nullptr)) / (2 * eps);
    double ad = autodiff[i];
    double denom = std::max({std::abs(fd), std::abs(ad), 1e-10});
    CAPTURE(i);
    CHECK(std::abs(fd - ad) / denom < 1e-3);
  }
}
