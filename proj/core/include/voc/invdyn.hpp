#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "voc/frame.hpp"
#include "voc/nn/tensor.hpp"
#include "voc/trajectory.hpp"

namespace voc {

// Multi-step inverse-dynamics feature learner: a small MLP maps a frame to a
// feature vector, and an action head is trained to recover a_t from the
// features of o_t and o_{t+k}. Only the trained features are used downstream
// (the head exists to shape them).

struct InvDynConfig {
  int in_dim = 0;  // flattened pixel count of one frame
  int hidden = 64;
  int feat_dim = 16;
  int k_max = 5;

  void validate() const;
  bool operator==(const InvDynConfig&) const = default;
};

class InvDynEncoder {
 public:
  InvDynEncoder(InvDynConfig cfg, uint64_t seed);

  const InvDynConfig& config() const { return cfg_; }

  /// Feature vector of one frame, plain forward without a graph. Matches the
  /// graph forward bit-for-bit (same summation order).
  std::vector<double> features(const Frame& f) const;

  /// Action logits for the pair (frame at t, frame at t+k).
  std::array<double, 4> action_logits(const Frame& a, const Frame& b) const;

  /// Graph forwards used in training. `x` is [B, in_dim] pixels scaled to
  /// [0,1]; `pair_feats` is [B, 2*feat_dim].
  nn::TensorId encode_batch(nn::Graph& g, nn::TensorId x);
  nn::TensorId head_batch(nn::Graph& g, nn::TensorId pair_feats);

  std::vector<nn::Parameter*> params();
  std::vector<const nn::Parameter*> params() const;

 private:
  InvDynConfig cfg_;
  nn::Parameter enc_w1_, enc_b1_, enc_w2_, enc_b2_;
  nn::Parameter head_w1_, head_b1_, head_w2_, head_b2_;
};

struct InvDynTrainOpts {
  int hidden = 64;
  int feat_dim = 16;
  int batch_size = 64;
  double lr = 1e-3;
};

/// Trains an encoder on (o_t, o_{t+k}) -> a_t with k drawn uniformly from
/// [1, min(k_max, steps remaining)]. Throws UnsupportedDatasetError when the
/// dataset carries no actions. Deterministic given seed.
InvDynEncoder train_inverse_dynamics(const Dataset& ds, int k_max, int epochs, uint64_t seed,
                                     const InvDynTrainOpts& opts = {},
                                     std::vector<double>* epoch_loss = nullptr);

/// Fraction of (o_t, o_{t+k}) pairs whose argmax logit equals the recorded
/// action; k is drawn per pair from the encoder's k_max. Ties toward the
/// lowest action.
double invdyn_accuracy(const InvDynEncoder& enc, const Dataset& ds, uint64_t seed);

void save_invdyn(const std::string& path, const InvDynEncoder& enc);
InvDynEncoder load_invdyn(const std::string& path);

}  // namespace voc
