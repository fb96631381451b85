#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "voc/nn/tensor.hpp"

namespace voc::nn {

struct GptConfig {
  int vocab = 64;
  int block_size = 16;
  int n_layer = 2;
  int n_head = 4;
  int n_embd = 64;

  void validate() const;
  bool operator==(const GptConfig&) const = default;
};

/// Decoder-only transformer: token+position embeddings, pre-norm blocks of
/// causal self-attention and a GELU MLP (4x widening), final layer norm, and
/// an untied linear head to vocab logits.
class Gpt {
 public:
  Gpt(GptConfig cfg, uint64_t seed);

  const GptConfig& config() const { return cfg_; }

  /// tokens holds B*T ids, batch-major. Returns the [B,T,vocab] logits node.
  TensorId forward(Graph& g, std::span<const int> tokens, int B, int T);

  /// Parameters in a fixed declaration order (stable across runs and saves).
  std::vector<Parameter*> params();
  std::vector<const Parameter*> params() const;

  void zero_grad();

  /// EMA tracking: this = decay * this + (1 - decay) * src.
  void ema_from(const Gpt& src, double decay);

  /// Hard copy of src's weights into this model (shapes must match).
  void copy_from(const Gpt& src);

 private:
  struct Block {
    Parameter ln1_g, ln1_b;
    Parameter qkv_w, qkv_b;
    Parameter proj_w, proj_b;
    Parameter ln2_g, ln2_b;
    Parameter fc_w, fc_b;
    Parameter out_w, out_b;
  };

  GptConfig cfg_;
  Parameter tok_emb_, pos_emb_;
  std::vector<Block> blocks_;
  Parameter lnf_g_, lnf_b_;
  Parameter head_w_;
};

}  // namespace voc::nn
