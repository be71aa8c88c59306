#include "stylex/attribution.hpp"

#include <cmath>

namespace stylex {

AttributionResult integrated_gradients(const EmbeddingScalarFn& fn, const Tensor& x_embed,
                                       int steps) {
  if (steps < 1) throw RangeError("integrated_gradients: steps must be >= 1");
  if (x_embed.rank() != 2) {
    throw ShapeError("integrated_gradients: embeddings must be (seq, dim)");
  }
  const int seq = x_embed.dim(0);
  const int dim = x_embed.dim(1);

  Tensor grad_sum = Tensor::zeros({seq, dim});
  for (int k = 1; k <= steps; ++k) {
    double t = static_cast<double>(k) / steps;
    Tensor point({seq, dim});
    for (std::int64_t i = 0; i < point.numel(); ++i) point[i] = t * x_embed[i];
    Tensor grad;
    fn(point, &grad);
    for (std::int64_t i = 0; i < grad.numel(); ++i) {
      if (!std::isfinite(grad[i])) {
        throw NumericError("integrated_gradients: non-finite gradient at step " +
                           std::to_string(k));
      }
      grad_sum[i] += grad[i];
    }
  }

  AttributionResult r;
  r.raw_attributions = Tensor::zeros({seq, dim});
  for (std::int64_t i = 0; i < r.raw_attributions.numel(); ++i) {
    r.raw_attributions[i] = x_embed[i] * grad_sum[i] / steps;
  }
  r.token_attribution.assign(static_cast<std::size_t>(seq), 0.0);
  double total = 0.0;
  for (int s = 0; s < seq; ++s) {
    double row = 0.0;
    for (int j = 0; j < dim; ++j) row += r.raw_attributions[static_cast<std::int64_t>(s) * dim + j];
    r.token_attribution[static_cast<std::size_t>(s)] = row;
    total += row;
  }
  r.f_input = fn(x_embed, nullptr);
  r.f_baseline = fn(Tensor::zeros({seq, dim}), nullptr);
  r.completeness_gap = std::abs(total - (r.f_input - r.f_baseline));
  return r;
}

SentenceAttribution attribute_sentence(StylexModel& model,
                                       const std::vector<std::string>& words, int target,
                                       int steps, bool normalize) {
  if (!model.initialized()) throw StateError("attribute_sentence: model is uninitialized");
  if (!model.trained()) throw StateError("attribute_sentence: model has not been trained");
  if (target != 0 && target != 1) throw RangeError("target class must be 0 or 1");

  AnnotatedSentence s;
  s.words = words;
  TokenBatch batch = make_token_batch({&s}, model.task(), model.vocab(),
                                      model.encoder_config().max_seq_len);
  Tensor x_embed;
  {
    Graph g;
    VarId e = model.encoder().embed_graph(g, batch, nullptr);
    const Tensor& t3 = g.value(e);  // (1, S, H)
    x_embed = Tensor({t3.dim(1), t3.dim(2)}, t3.raw());
  }
  const int seq = batch.seq;
  const int h = model.encoder_config().hidden_size;

  EmbeddingScalarFn fn = [&](const Tensor& emb, Tensor* grad) -> double {
    Graph g;
    VarId e = g.leaf(Tensor({1, seq, h}, emb.raw()), grad != nullptr);
    StylexModel::GraphOut out =
        model.forward_graph(g, batch, /*training=*/false, nullptr, nullptr, e);
    VarId logit = g.pick(out.sent_logits, target);
    double v = g.value(logit).item();
    if (grad != nullptr) {
      g.backward(logit);
      const Tensor& ge = g.grad(e);
      *grad = Tensor({seq, h}, ge.raw());
    }
    return v;
  };

  SentenceAttribution sa;
  sa.detail = integrated_gradients(fn, x_embed, steps);
  sa.detail.target_class = target;
  Tokenization tk = tokenize(model.vocab(), words, model.encoder_config().max_seq_len);
  for (const auto& p : tk.pieces) sa.detail.tokens.push_back(p.text);

  sa.word_scores.assign(words.size(), 0.0);
  for (int t = 0; t < seq; ++t) {
    int wi = batch.word_index[static_cast<std::size_t>(t)];
    if (wi < 0) continue;
    sa.word_scores[static_cast<std::size_t>(wi)] +=
        sa.detail.token_attribution[static_cast<std::size_t>(t)];
  }
  if (normalize) {
    double mx = 0.0;
    for (double v : sa.word_scores) mx = std::max(mx, std::abs(v));
    if (mx > 0.0) {
      for (double& v : sa.word_scores) v /= mx;
    }
  }
  return sa;
}

}  // namespace stylex
