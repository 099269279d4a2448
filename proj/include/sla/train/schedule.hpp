#pragma once

#include <cstdint>

#include "sla/core/error.hpp"

namespace sla {

/// Linear warmup to lr_max over the first `warmup` steps, then constant.
/// Steps are 1-based.
inline double lr_at(std::int64_t step, std::int64_t warmup, double lr_max) {
  if (step < 1) throw ContractError("lr_at: step must be >= 1");
  if (warmup <= 0 || step >= warmup) return lr_max;
  return lr_max * static_cast<double>(step) / static_cast<double>(warmup);
}

}  // namespace sla
