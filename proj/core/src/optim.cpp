#include "voc/nn/optim.hpp"

#include <cmath>

#include "voc/error.hpp"

namespace voc::nn {

double lr_multiplier(int64_t step, int64_t warmup_steps, int64_t total_steps) {
  if (total_steps == 0) return 1.0;
  if (warmup_steps > 0 && step < warmup_steps) {
    return static_cast<double>(step) / static_cast<double>(warmup_steps);
  }
  if (step >= total_steps) return 0.0;
  double progress = static_cast<double>(step - warmup_steps) /
                    static_cast<double>(total_steps - warmup_steps);
  return 0.5 * (1.0 + std::cos(progress * M_PI));
}

double AdamW::step(const std::vector<Parameter*>& params) {
  if (m_.empty()) {
    m_.resize(params.size());
    v_.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i].assign(params[i]->numel(), 0.0);
      v_[i].assign(params[i]->numel(), 0.0);
    }
  }
  if (m_.size() != params.size()) {
    throw InvalidInputError("optimizer was initialised with a different parameter list");
  }
  ++step_count_;
  // schedule indexed by completed updates: the first update sees step 0
  double lr = cfg_.lr * lr_multiplier(step_count_ - 1, cfg_.warmup_steps, cfg_.total_steps);
  double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_count_));
  double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_count_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    if (m_[i].size() != p.numel()) {
      throw InvalidInputError("parameter " + p.name + " changed size mid-training");
    }
    for (std::size_t j = 0; j < p.numel(); ++j) {
      double g = p.grad[j];
      if (!std::isfinite(g)) {
        throw TrainingDivergenceError("non-finite gradient in " + p.name);
      }
      m_[i][j] = cfg_.beta1 * m_[i][j] + (1.0 - cfg_.beta1) * g;
      v_[i][j] = cfg_.beta2 * v_[i][j] + (1.0 - cfg_.beta2) * g * g;
      double mhat = m_[i][j] / bc1;
      double vhat = v_[i][j] / bc2;
      p.data[j] -= lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * p.data[j]);
    }
    p.zero_grad();
  }
  return lr;
}

}  // namespace voc::nn
