#pragma once

#include <functional>
#include <string>
#include <vector>

#include "stylex/model.hpp"

namespace stylex {

struct AttributionResult {
  std::vector<std::string> tokens;   // all positions, specials included
  Tensor raw_attributions;           // (seq, embedding_dim)
  std::vector<double> token_attribution;  // signed sum over embedding dim
  int target_class = 0;
  double completeness_gap = 0.0;
  double f_input = 0.0;     // F(x)
  double f_baseline = 0.0;  // F(x'), x' = all-zero embeddings
};

// A scalar function of a (seq, embedding_dim) tensor. When grad is non-null
// the gradient w.r.t. the embeddings is written into it.
using EmbeddingScalarFn = std::function<double(const Tensor& embeddings, Tensor* grad)>;

// Riemann approximation of path-integrated gradients from the all-zero
// baseline: IG_i = x_i * (1/steps) * sum_k dF(k/steps * x)/dx_i. Records the
// completeness gap |sum_i IG_i - (F(x) - F(0))|.
AttributionResult integrated_gradients(const EmbeddingScalarFn& fn, const Tensor& x_embed,
                                       int steps);

struct SentenceAttribution {
  std::vector<double> word_scores;  // per original word, specials dropped
  AttributionResult detail;
};

// Integrated gradients against the sentence-level logit of `target`; a word's
// score is the sum of its subwords' token attributions. When normalize is
// set, scores are scaled by the maximum absolute score of the sentence.
SentenceAttribution attribute_sentence(StylexModel& model,
                                       const std::vector<std::string>& words, int target,
                                       int steps = 50, bool normalize = false);

}  // namespace stylex
