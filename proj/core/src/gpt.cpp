#include "voc/nn/gpt.hpp"

#include <cmath>

#include "voc/error.hpp"

namespace voc::nn {

void GptConfig::validate() const {
  if (vocab < 2) throw ConfigError("gpt: vocab must be at least 2");
  if (block_size < 1) throw ConfigError("gpt: block_size must be positive");
  if (n_layer < 1) throw ConfigError("gpt: n_layer must be positive");
  if (n_head < 1 || n_embd % n_head != 0) {
    throw ConfigError("gpt: n_embd must be a positive multiple of n_head");
  }
}

Gpt::Gpt(GptConfig cfg, uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  int C = cfg_.n_embd;
  tok_emb_ = Parameter("tok_emb", {cfg_.vocab, C});
  pos_emb_ = Parameter("pos_emb", {cfg_.block_size, C});
  blocks_.reserve(cfg_.n_layer);
  for (int l = 0; l < cfg_.n_layer; ++l) {
    std::string pre = "block" + std::to_string(l) + ".";
    Block b;
    b.ln1_g = Parameter(pre + "ln1_g", {C});
    b.ln1_b = Parameter(pre + "ln1_b", {C});
    b.qkv_w = Parameter(pre + "qkv_w", {C, 3 * C});
    b.qkv_b = Parameter(pre + "qkv_b", {3 * C});
    b.proj_w = Parameter(pre + "proj_w", {C, C});
    b.proj_b = Parameter(pre + "proj_b", {C});
    b.ln2_g = Parameter(pre + "ln2_g", {C});
    b.ln2_b = Parameter(pre + "ln2_b", {C});
    b.fc_w = Parameter(pre + "fc_w", {C, 4 * C});
    b.fc_b = Parameter(pre + "fc_b", {4 * C});
    b.out_w = Parameter(pre + "out_w", {4 * C, C});
    b.out_b = Parameter(pre + "out_b", {C});
    blocks_.push_back(std::move(b));
  }
  lnf_g_ = Parameter("lnf_g", {C});
  lnf_b_ = Parameter("lnf_b", {C});
  head_w_ = Parameter("head_w", {C, cfg_.vocab});

  Rng rng(seed);
  double residual_scale = 0.02 / std::sqrt(2.0 * cfg_.n_layer);
  tok_emb_.init_normal(rng, 0.02);
  pos_emb_.init_normal(rng, 0.02);
  for (Block& b : blocks_) {
    b.ln1_g.fill(1.0);
    b.ln2_g.fill(1.0);
    b.qkv_w.init_normal(rng, 0.02);
    b.proj_w.init_normal(rng, residual_scale);
    b.fc_w.init_normal(rng, 0.02);
    b.out_w.init_normal(rng, residual_scale);
  }
  lnf_g_.fill(1.0);
  head_w_.init_normal(rng, 0.02);
}

TensorId Gpt::forward(Graph& g, std::span<const int> tokens, int B, int T) {
  if (B < 1 || T < 1 || T > cfg_.block_size) {
    throw InvalidInputError("gpt forward: T=" + std::to_string(T) + " exceeds block size " +
                            std::to_string(cfg_.block_size));
  }
  if (tokens.size() != static_cast<std::size_t>(B) * T) {
    throw InvalidInputError("gpt forward: token count does not match B*T");
  }
  std::vector<int> pos_ids(T);
  for (int t = 0; t < T; ++t) pos_ids[t] = t;

  TensorId tok = g.embedding(g.param(tok_emb_), tokens, {B, T});
  TensorId pos = g.embedding(g.param(pos_emb_), pos_ids, {T});
  TensorId x = g.add(tok, pos);
  for (Block& b : blocks_) {
    TensorId h = g.layer_norm(x, g.param(b.ln1_g), g.param(b.ln1_b));
    TensorId qkv = g.add(g.matmul(h, g.param(b.qkv_w)), g.param(b.qkv_b));
    TensorId att = g.causal_self_attention(qkv, cfg_.n_head);
    TensorId att_p = g.add(g.matmul(att, g.param(b.proj_w)), g.param(b.proj_b));
    x = g.add(x, att_p);
    TensorId h2 = g.layer_norm(x, g.param(b.ln2_g), g.param(b.ln2_b));
    TensorId mid = g.gelu(g.add(g.matmul(h2, g.param(b.fc_w)), g.param(b.fc_b)));
    TensorId mlp = g.add(g.matmul(mid, g.param(b.out_w)), g.param(b.out_b));
    x = g.add(x, mlp);
  }
  x = g.layer_norm(x, g.param(lnf_g_), g.param(lnf_b_));
  return g.matmul(x, g.param(head_w_));
}

std::vector<Parameter*> Gpt::params() {
  std::vector<Parameter*> out = {&tok_emb_, &pos_emb_};
  for (Block& b : blocks_) {
    for (Parameter* p : {&b.ln1_g, &b.ln1_b, &b.qkv_w, &b.qkv_b, &b.proj_w, &b.proj_b, &b.ln2_g,
                         &b.ln2_b, &b.fc_w, &b.fc_b, &b.out_w, &b.out_b}) {
      out.push_back(p);
    }
  }
  out.push_back(&lnf_g_);
  out.push_back(&lnf_b_);
  out.push_back(&head_w_);
  return out;
}

std::vector<const Parameter*> Gpt::params() const {
  auto mut = const_cast<Gpt*>(this)->params();
  return std::vector<const Parameter*>(mut.begin(), mut.end());
}

void Gpt::zero_grad() {
  for (Parameter* p : params()) p->zero_grad();
}

void Gpt::ema_from(const Gpt& src, double decay) {
  if (!(decay >= 0.0 && decay <= 1.0)) throw InvalidInputError("ema decay must lie in [0,1]");
  auto dst = params();
  auto s = src.params();
  if (dst.size() != s.size()) throw InvalidInputError("ema: parameter lists disagree");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (dst[i]->shape != s[i]->shape) throw InvalidInputError("ema: shape mismatch");
    for (std::size_t j = 0; j < dst[i]->numel(); ++j) {
      dst[i]->data[j] = decay * dst[i]->data[j] + (1.0 - decay) * s[i]->data[j];
    }
  }
}

void Gpt::copy_from(const Gpt& src) { ema_from(src, 0.0); }

}  // namespace voc::nn
