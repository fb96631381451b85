#pragma once

#include <cstdint>
#include <vector>

#include "voc/nn/tensor.hpp"

namespace voc::nn {

/// Linear warmup 0 -> 1 over warmup_steps, then cosine decay 1 -> 0 at
/// total_steps. total_steps == 0 disables the schedule (multiplier 1).
double lr_multiplier(int64_t step, int64_t warmup_steps, int64_t total_steps);

struct AdamWConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 0.05;
  int64_t warmup_steps = 200;
  int64_t total_steps = 0;  // 0: constant lr after warmup handling
};

/// Decoupled-weight-decay Adam with bias correction. Moment buffers are keyed
/// by position in the parameter list, so call step() with the same list every
/// time. step() consumes and clears the parameter gradients.
class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg) : cfg_(cfg) {}

  /// Applies one update. Throws TrainingDivergenceError on non-finite
  /// gradients. Returns the learning rate actually used.
  double step(const std::vector<Parameter*>& params);

  int64_t step_count() const { return step_count_; }
  const AdamWConfig& config() const { return cfg_; }

 private:
  AdamWConfig cfg_;
  int64_t step_count_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace voc::nn
