#pragma once

#include <memory>
#include <random>
#include <string>
#include <vector>

#include "stylex/data.hpp"
#include "stylex/graph.hpp"
#include "stylex/tokenizer.hpp"

namespace stylex {

struct EncoderConfig {
  int hidden_size = 768;
  int num_layers = 12;
  int num_heads = 12;
  int vocab_size = 0;  // 0: resolved from the corpus-built vocabulary
  int max_seq_len = 512;
  double dropout = 0.1;

  void validate() const;

  // Full-scale defaults matching a BERT-base-sized encoder.
  static EncoderConfig paper_default() { return EncoderConfig{}; }
  // Small trainable encoder for desk-scale experiments.
  static EncoderConfig desk_default() {
    EncoderConfig c;
    c.hidden_size = 64;
    c.num_layers = 2;
    c.num_heads = 4;
    return c;
  }
};

struct EncoderOutput {
  Tensor hidden_states;  // (batch, seq, H)
};

// Named views over a component's parameter tensors; ordering is stable and
// drives both the optimizer state and the checkpoint layout.
using ParamRegistry = std::vector<std::pair<std::string, Tensor*>>;

// Contextual encoder seam. The shipped implementation is a small trainable
// transformer; adapters for external pretrained encoders implement the same
// graph-building surface.
class Encoder {
 public:
  virtual ~Encoder() = default;
  virtual const EncoderConfig& config() const = 0;
  // Builds the contextualization graph. When embeddings_override is a valid
  // node, it is used in place of the token-embedding lookup (the integrated
  // gradients entry point).
  virtual VarId encode_graph(Graph& g, const TokenBatch& batch, bool training,
                             std::mt19937_64* dropout_rng, BindingList* binds,
                             VarId embeddings_override = kNoVar) = 0;
  // Embedding-layer output before contextualization, shape (B, S, H).
  virtual VarId embed_graph(Graph& g, const TokenBatch& batch, BindingList* binds) = 0;
  virtual void register_params(ParamRegistry& reg) = 0;
};

class TinyTransformerEncoder final : public Encoder {
 public:
  TinyTransformerEncoder() = default;
  TinyTransformerEncoder(EncoderConfig cfg, std::mt19937_64& init_rng);

  const EncoderConfig& config() const override { return cfg_; }
  VarId encode_graph(Graph& g, const TokenBatch& batch, bool training,
                     std::mt19937_64* dropout_rng, BindingList* binds,
                     VarId embeddings_override = kNoVar) override;
  VarId embed_graph(Graph& g, const TokenBatch& batch, BindingList* binds) override;
  void register_params(ParamRegistry& reg) override;

  // Eval-mode conveniences (no gradients, dropout off).
  EncoderOutput encode(const TokenBatch& batch);
  Tensor embed(const TokenBatch& batch);

  bool initialized() const { return !layers_.empty(); }

 private:
  struct LayerParams {
    Tensor ln1_gain, ln1_bias;
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor ln2_gain, ln2_bias;
    Tensor w1, b1, w2, b2;
  };

  EncoderConfig cfg_;
  Tensor tok_emb_;  // (V, H)
  Tensor pos_emb_;  // (max_seq_len, H)
  std::vector<LayerParams> layers_;
  Tensor lnf_gain_, lnf_bias_;
};

}  // namespace stylex
