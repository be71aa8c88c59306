#include "stylex/encoder.hpp"

#include <cmath>

namespace stylex {

void EncoderConfig::validate() const {
  if (hidden_size <= 0 || num_layers <= 0 || num_heads <= 0) {
    throw ValidationError("encoder dimensions must be positive");
  }
  if (hidden_size % num_heads != 0) {
    throw ValidationError("hidden_size must be divisible by num_heads");
  }
  if (max_seq_len < 1) throw ValidationError("max_seq_len must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0) throw ValidationError("dropout must be in [0, 1)");
}

namespace {
constexpr double kInitStd = 0.02;

Tensor init_weight(int rows, int cols, std::mt19937_64& rng) {
  Tensor t({rows, cols});
  t.fill_normal(rng, 0.0, kInitStd);
  return t;
}
}  // namespace

TinyTransformerEncoder::TinyTransformerEncoder(EncoderConfig cfg, std::mt19937_64& init_rng)
    : cfg_(cfg) {
  cfg_.validate();
  if (cfg_.vocab_size <= 0) throw ValidationError("encoder vocab_size unresolved");
  const int h = cfg_.hidden_size;
  tok_emb_ = init_weight(cfg_.vocab_size, h, init_rng);
  pos_emb_ = init_weight(cfg_.max_seq_len, h, init_rng);
  layers_.resize(static_cast<std::size_t>(cfg_.num_layers));
  for (auto& l : layers_) {
    l.ln1_gain = Tensor::full({h}, 1.0);
    l.ln1_bias = Tensor::zeros({h});
    l.wq = init_weight(h, h, init_rng);
    l.bq = Tensor::zeros({h});
    l.wk = init_weight(h, h, init_rng);
    l.bk = Tensor::zeros({h});
    l.wv = init_weight(h, h, init_rng);
    l.bv = Tensor::zeros({h});
    l.wo = init_weight(h, h, init_rng);
    l.bo = Tensor::zeros({h});
    l.ln2_gain = Tensor::full({h}, 1.0);
    l.ln2_bias = Tensor::zeros({h});
    l.w1 = init_weight(h, 4 * h, init_rng);
    l.b1 = Tensor::zeros({4 * h});
    l.w2 = init_weight(4 * h, h, init_rng);
    l.b2 = Tensor::zeros({h});
  }
  lnf_gain_ = Tensor::full({h}, 1.0);
  lnf_bias_ = Tensor::zeros({h});
}

void TinyTransformerEncoder::register_params(ParamRegistry& reg) {
  reg.emplace_back("encoder.tok_emb", &tok_emb_);
  reg.emplace_back("encoder.pos_emb", &pos_emb_);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    auto& l = layers_[i];
    const std::string p = "encoder.layer" + std::to_string(i) + ".";
    reg.emplace_back(p + "ln1_gain", &l.ln1_gain);
    reg.emplace_back(p + "ln1_bias", &l.ln1_bias);
    reg.emplace_back(p + "wq", &l.wq);
    reg.emplace_back(p + "bq", &l.bq);
    reg.emplace_back(p + "wk", &l.wk);
    reg.emplace_back(p + "bk", &l.bk);
    reg.emplace_back(p + "wv", &l.wv);
    reg.emplace_back(p + "bv", &l.bv);
    reg.emplace_back(p + "wo", &l.wo);
    reg.emplace_back(p + "bo", &l.bo);
    reg.emplace_back(p + "ln2_gain", &l.ln2_gain);
    reg.emplace_back(p + "ln2_bias", &l.ln2_bias);
    reg.emplace_back(p + "w1", &l.w1);
    reg.emplace_back(p + "b1", &l.b1);
    reg.emplace_back(p + "w2", &l.w2);
    reg.emplace_back(p + "b2", &l.b2);
  }
  reg.emplace_back("encoder.lnf_gain", &lnf_gain_);
  reg.emplace_back("encoder.lnf_bias", &lnf_bias_);
}

VarId TinyTransformerEncoder::embed_graph(Graph& g, const TokenBatch& batch,
                                          BindingList* binds) {
  if (!initialized()) throw StateError("encoder is uninitialized");
  VarId table = bind_param(g, tok_emb_, binds, binds != nullptr);
  return g.lookup_rows(table, batch.token_ids, {batch.batch, batch.seq, cfg_.hidden_size});
}

VarId TinyTransformerEncoder::encode_graph(Graph& g, const TokenBatch& batch, bool training,
                                           std::mt19937_64* dropout_rng, BindingList* binds,
                                           VarId embeddings_override) {
  if (!initialized()) throw StateError("encoder is uninitialized");
  if (batch.seq > cfg_.max_seq_len) {
    throw ShapeError("batch sequence length exceeds max_seq_len");
  }
  const int h = cfg_.hidden_size;
  const int nh = cfg_.num_heads;
  const int dh = h / nh;
  const int bsz = batch.batch;
  const int seq = batch.seq;
  const bool drop = training && cfg_.dropout > 0.0;
  if (drop && dropout_rng == nullptr) {
    throw StateError("training-mode encode needs a dropout rng");
  }

  auto bp = [&](Tensor& t) { return bind_param(g, t, binds, binds != nullptr); };
  VarId x = embeddings_override != kNoVar ? embeddings_override
                                          : embed_graph(g, batch, binds);
  VarId pos = bp(pos_emb_);
  x = g.add_positional(x, pos);
  if (drop) x = g.dropout(x, cfg_.dropout, *dropout_rng);

  const double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));
  for (auto& l : layers_) {
    VarId ln1 = g.layer_norm(x, bp(l.ln1_gain),
                             bp(l.ln1_bias));
    VarId flat = g.reshape(ln1, {bsz * seq, h});
    auto project = [&](Tensor& w, Tensor& b) {
      VarId y = g.matmul(flat, bp(w));
      y = g.add_bias(y, bp(b));
      // (B*S,H) -> (B,nh,S,dh) -> (B*nh,S,dh)
      y = g.reshape(y, {bsz, seq, nh, dh});
      y = g.transpose_inner(y);
      return g.reshape(y, {bsz * nh, seq, dh});
    };
    VarId q = project(l.wq, l.bq);
    VarId k = project(l.wk, l.bk);
    VarId v = project(l.wv, l.bv);
    VarId scores = g.scale(g.bmm(q, k, false, true), att_scale);
    scores = g.reshape(scores, {bsz, nh, seq, seq});
    VarId attn = g.masked_softmax_lastdim(scores, batch.attention_mask);
    attn = g.reshape(attn, {bsz * nh, seq, seq});
    VarId ctx = g.bmm(attn, v, false, false);
    ctx = g.reshape(ctx, {bsz, nh, seq, dh});
    ctx = g.transpose_inner(ctx);  // (B,S,nh,dh)
    ctx = g.reshape(ctx, {bsz * seq, h});
    VarId out = g.add_bias(g.matmul(ctx, bp(l.wo)),
                           bp(l.bo));
    out = g.reshape(out, {bsz, seq, h});
    if (drop) out = g.dropout(out, cfg_.dropout, *dropout_rng);
    x = g.add(x, out);

    VarId ln2 = g.layer_norm(x, bp(l.ln2_gain),
                             bp(l.ln2_bias));
    VarId f = g.reshape(ln2, {bsz * seq, h});
    f = g.add_bias(g.matmul(f, bp(l.w1)), bp(l.b1));
    f = g.gelu(f);
    f = g.add_bias(g.matmul(f, bp(l.w2)), bp(l.b2));
    f = g.reshape(f, {bsz, seq, h});
    if (drop) f = g.dropout(f, cfg_.dropout, *dropout_rng);
    x = g.add(x, f);
  }
  return g.layer_norm(x, bp(lnf_gain_), bp(lnf_bias_));
}

EncoderOutput TinyTransformerEncoder::encode(const TokenBatch& batch) {
  Graph g;
  VarId h = encode_graph(g, batch, /*training=*/false, nullptr, nullptr);
  return EncoderOutput{g.value(h)};
}

Tensor TinyTransformerEncoder::embed(const TokenBatch& batch) {
  Graph g;
  VarId e = embed_graph(g, batch, nullptr);
  return g.value(e);
}

}  // namespace stylex
