#include "voc/invdyn.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "voc/error.hpp"
#include "voc/gridworld.hpp"
#include "voc/nn/checkpoint.hpp"
#include "voc/nn/optim.hpp"
#include "voc/rng.hpp"

namespace voc {

void InvDynConfig::validate() const {
  if (in_dim < 1) throw ConfigError("invdyn: in_dim must be positive");
  if (hidden < 1) throw ConfigError("invdyn: hidden must be positive");
  if (feat_dim < 1) throw ConfigError("invdyn: feat_dim must be positive");
  if (k_max < 1) throw ConfigError("invdyn: k_max must be at least 1");
}

InvDynEncoder::InvDynEncoder(InvDynConfig cfg, uint64_t seed)
    : cfg_(cfg),
      enc_w1_("enc_w1", {cfg.in_dim, cfg.hidden}),
      enc_b1_("enc_b1", {cfg.hidden}),
      enc_w2_("enc_w2", {cfg.hidden, cfg.feat_dim}),
      enc_b2_("enc_b2", {cfg.feat_dim}),
      head_w1_("head_w1", {2 * cfg.feat_dim, cfg.hidden}),
      head_b1_("head_b1", {cfg.hidden}),
      head_w2_("head_w2", {cfg.hidden, kNumActions}),
      head_b2_("head_b2", {kNumActions}) {
  cfg_.validate();
  Rng rng(seed);
  enc_w1_.init_normal(rng, 0.02);
  enc_w2_.init_normal(rng, 0.02);
  head_w1_.init_normal(rng, 0.02);
  head_w2_.init_normal(rng, 0.02);
}

namespace {

double gelu_scalar(double v) {
  constexpr double kInvSqrt2 = 0.7071067811865475244;
  return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
}

std::vector<double> pixels01(const Frame& f) {
  std::vector<double> x(f.px.size());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = f.px[i] / 255.0;
  return x;
}

// y = gelu_opt(x W + b), summing k-ascending like Graph::matmul so the plain
// and graph forwards agree bitwise.
std::vector<double> linear(std::span<const double> x, const nn::Parameter& w,
                           const nn::Parameter& b, bool apply_gelu) {
  int in = w.shape[0];
  int out = w.shape[1];
  std::vector<double> y(out);
  for (int j = 0; j < out; ++j) {
    double s = 0.0;
    for (int i = 0; i < in; ++i) s += x[i] * w.data[i * out + j];
    s += b.data[j];
    y[j] = apply_gelu ? gelu_scalar(s) : s;
  }
  return y;
}

}  // namespace

std::vector<double> InvDynEncoder::features(const Frame& f) const {
  if (f.size() != static_cast<std::size_t>(cfg_.in_dim)) {
    throw InvalidInputError("invdyn: frame has " + std::to_string(f.size()) +
                            " pixels, encoder expects " + std::to_string(cfg_.in_dim));
  }
  std::vector<double> x = pixels01(f);
  std::vector<double> h = linear(x, enc_w1_, enc_b1_, true);
  return linear(h, enc_w2_, enc_b2_, false);
}

std::array<double, 4> InvDynEncoder::action_logits(const Frame& a, const Frame& b) const {
  std::vector<double> pair = features(a);
  std::vector<double> fb = features(b);
  pair.insert(pair.end(), fb.begin(), fb.end());
  std::vector<double> h = linear(pair, head_w1_, head_b1_, true);
  std::vector<double> lg = linear(h, head_w2_, head_b2_, false);
  return {lg[0], lg[1], lg[2], lg[3]};
}

nn::TensorId InvDynEncoder::encode_batch(nn::Graph& g, nn::TensorId x) {
  nn::TensorId h = g.gelu(g.add(g.matmul(x, g.param(enc_w1_)), g.param(enc_b1_)));
  return g.add(g.matmul(h, g.param(enc_w2_)), g.param(enc_b2_));
}

nn::TensorId InvDynEncoder::head_batch(nn::Graph& g, nn::TensorId pair_feats) {
  nn::TensorId h = g.gelu(g.add(g.matmul(pair_feats, g.param(head_w1_)), g.param(head_b1_)));
  return g.add(g.matmul(h, g.param(head_w2_)), g.param(head_b2_));
}

std::vector<nn::Parameter*> InvDynEncoder::params() {
  return {&enc_w1_, &enc_b1_, &enc_w2_, &enc_b2_, &head_w1_, &head_b1_, &head_w2_, &head_b2_};
}

std::vector<const nn::Parameter*> InvDynEncoder::params() const {
  return {&enc_w1_, &enc_b1_, &enc_w2_, &enc_b2_, &head_w1_, &head_b1_, &head_w2_, &head_b2_};
}

namespace {

struct Sample {
  int traj;
  int t;
};

std::vector<Sample> action_samples(const Dataset& ds) {
  std::vector<Sample> out;
  for (std::size_t i = 0; i < ds.trajectories.size(); ++i) {
    const Trajectory& tr = ds.trajectories[i];
    for (std::size_t t = 0; t + 1 < tr.frames.size(); ++t) {
      out.push_back({static_cast<int>(i), static_cast<int>(t)});
    }
  }
  return out;
}

int draw_k(Rng& rng, int k_max, int remaining) {
  int hi = std::min(k_max, remaining);
  return 1 + static_cast<int>(rng.uniform_int(static_cast<uint64_t>(hi)));
}

}  // namespace

InvDynEncoder train_inverse_dynamics(const Dataset& ds, int k_max, int epochs, uint64_t seed,
                                     const InvDynTrainOpts& opts,
                                     std::vector<double>* epoch_loss) {
  ds.validate();
  if (epochs < 0) throw ConfigError("invdyn: epochs must be non-negative");
  if (opts.batch_size < 1) throw ConfigError("invdyn: batch_size must be positive");
  std::vector<Sample> samples = action_samples(ds);
  if (samples.empty()) {
    throw UnsupportedDatasetError("invdyn: dataset carries no actions");
  }
  InvDynConfig cfg;
  cfg.in_dim = ds.h_px * ds.w_px * ds.channels;
  cfg.hidden = opts.hidden;
  cfg.feat_dim = opts.feat_dim;
  cfg.k_max = k_max;
  InvDynEncoder enc(cfg, Rng::mix_seed(seed, 0));

  nn::AdamWConfig ocfg;
  ocfg.lr = opts.lr;
  ocfg.weight_decay = 0.0;
  ocfg.warmup_steps = 0;
  ocfg.total_steps = 0;
  nn::AdamW opt(ocfg);

  if (epoch_loss) epoch_loss->clear();
  int in_dim = cfg.in_dim;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    Rng rng = Rng::substream(seed, 1 + static_cast<uint64_t>(epoch));
    std::vector<Sample> order = samples;
    rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += opts.batch_size) {
      std::size_t stop = std::min(order.size(), start + opts.batch_size);
      int B = static_cast<int>(stop - start);
      std::vector<double> x1, x2;
      x1.reserve(B * in_dim);
      x2.reserve(B * in_dim);
      std::vector<int> targets(B);
      for (int b = 0; b < B; ++b) {
        const Sample& s = order[start + b];
        const Trajectory& tr = ds.trajectories[s.traj];
        int remaining = static_cast<int>(tr.frames.size()) - 1 - s.t;
        int k = draw_k(rng, k_max, remaining);
        std::vector<double> p1 = pixels01(tr.frames[s.t]);
        std::vector<double> p2 = pixels01(tr.frames[s.t + k]);
        x1.insert(x1.end(), p1.begin(), p1.end());
        x2.insert(x2.end(), p2.begin(), p2.end());
        targets[b] = tr.actions[s.t];
      }
      nn::Graph g;
      nn::TensorId f1 = enc.encode_batch(g, g.input({B, in_dim}, std::move(x1)));
      nn::TensorId f2 = enc.encode_batch(g, g.input({B, in_dim}, std::move(x2)));
      nn::TensorId logits = enc.head_batch(g, g.concat(f1, f2));
      nn::TensorId loss = g.cross_entropy(logits, targets);
      loss_sum += g.scalar(loss) * B;
      g.backward(loss);
      opt.step(enc.params());
    }
    if (epoch_loss) epoch_loss->push_back(loss_sum / static_cast<double>(order.size()));
  }
  return enc;
}

double invdyn_accuracy(const InvDynEncoder& enc, const Dataset& ds, uint64_t seed) {
  ds.validate();
  std::vector<Sample> samples = action_samples(ds);
  if (samples.empty()) {
    throw UnsupportedDatasetError("invdyn: dataset carries no actions");
  }
  Rng rng(seed);
  int correct = 0;
  for (const Sample& s : samples) {
    const Trajectory& tr = ds.trajectories[s.traj];
    int remaining = static_cast<int>(tr.frames.size()) - 1 - s.t;
    int k = draw_k(rng, enc.config().k_max, remaining);
    std::array<double, 4> lg = enc.action_logits(tr.frames[s.t], tr.frames[s.t + k]);
    int pred = 0;
    for (int a = 1; a < kNumActions; ++a) {
      if (lg[a] > lg[pred]) pred = a;
    }
    if (pred == tr.actions[s.t]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

void save_invdyn(const std::string& path, const InvDynEncoder& enc) {
  const InvDynConfig& c = enc.config();
  nlohmann::json hyper = {
      {"in_dim", c.in_dim}, {"hidden", c.hidden}, {"feat_dim", c.feat_dim}, {"k_max", c.k_max}};
  nn::save_checkpoint(path, "invdyn", hyper, enc.params());
}

InvDynEncoder load_invdyn(const std::string& path) {
  nlohmann::json hyper = nn::peek_checkpoint(path, "invdyn");
  InvDynConfig cfg;
  cfg.in_dim = hyper.at("in_dim").get<int>();
  cfg.hidden = hyper.at("hidden").get<int>();
  cfg.feat_dim = hyper.at("feat_dim").get<int>();
  cfg.k_max = hyper.at("k_max").get<int>();
  InvDynEncoder enc(cfg, 0);
  nn::load_checkpoint(path, "invdyn", enc.params());
  return enc;
}

}  // namespace voc
