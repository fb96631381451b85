#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "voc/nn/tensor.hpp"

namespace voc::test {

/// Central finite-difference gradient check.
///
/// run(true) must execute a full forward+backward pass (accumulating into
/// Parameter::grad) and return the loss; run(false) forward only. Tensors
/// larger than max_per_tensor entries are subsampled with a fixed stride so
/// the composed-model check stays fast while still touching every tensor.
/// Returns the worst relative error, with |g| below ~1e-4 compared on an
/// absolute 1e-8 scale via the denominator floor.
inline double max_grad_check_error(const std::vector<nn::Parameter*>& params,
                                   const std::function<double(bool)>& run,
                                   int max_per_tensor = 1 << 30) {
  const double h = 1e-5;
  for (auto* p : params) p->zero_grad();
  run(true);
  double worst = 0.0;
  for (auto* p : params) {
    std::vector<double> analytic = p->grad;
    std::size_t n = p->numel();
    std::size_t stride = 1;
    if (static_cast<int>(n) > max_per_tensor) {
      stride = (n + max_per_tensor - 1) / max_per_tensor;
      if (stride % 2 == 0) ++stride;  // co-prime with common power-of-two sizes
    }
    for (std::size_t i = 0; i < n; i += stride) {
      double saved = p->data[i];
      p->data[i] = saved + h;
      double lp = run(false);
      p->data[i] = saved - h;
      double lm = run(false);
      p->data[i] = saved;
      double gn = (lp - lm) / (2.0 * h);
      double ga = analytic[i];
      double rel = std::abs(ga - gn) / std::max({std::abs(ga), std::abs(gn), 1e-4});
      worst = std::max(worst, rel);
    }
    p->zero_grad();
  }
  return worst;
}

}  // namespace voc::test
