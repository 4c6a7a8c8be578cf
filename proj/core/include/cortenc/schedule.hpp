#pragma once

#include <cstdint>

#include "cortenc/errors.hpp"

namespace cortenc {

// Step schedule: the base rate until drop_iter, half of it afterwards.
inline double step_halving_lr(double base, int64_t iteration, int64_t drop_iter) {
  if (iteration < 0) throw ConfigError("step_halving_lr: negative iteration");
  return iteration < drop_iter ? base : 0.5 * base;
}

// Linear warmup to the peak at warmup_iters, then linear decay hitting
// exactly zero at max_iters. Iterations are 1-based training steps.
inline double warmup_linear_lr(double peak, int64_t iteration, int64_t warmup_iters,
                               int64_t max_iters) {
  if (iteration < 0) throw ConfigError("warmup_linear_lr: negative iteration");
  if (max_iters <= 0 || warmup_iters < 0 || warmup_iters > max_iters)
    throw ConfigError("warmup_linear_lr: bad schedule bounds");
  if (iteration >= max_iters) return 0.0;
  if (warmup_iters > 0 && iteration <= warmup_iters)
    return peak * static_cast<double>(iteration) / static_cast<double>(warmup_iters);
  return peak * static_cast<double>(max_iters - iteration) /
         static_cast<double>(max_iters - warmup_iters);
}

}  // namespace cortenc
