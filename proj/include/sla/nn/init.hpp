#pragma once

#include "sla/core/rng.hpp"
#include "sla/tensor/tensor.hpp"

namespace sla {

template <std::floating_point Real>
Tensor<Real> normal_tensor(Shape shape, double stddev, Rng& rng) {
  std::vector<Real> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<Real>(stddev * rng.normal());
  return Tensor<Real>(std::move(shape), std::move(v));
}

/// U(-1/sqrt(fan_in), 1/sqrt(fan_in)), the usual default for affine layers.
template <std::floating_point Real>
Tensor<Real> fan_in_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<Real> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<Real>(rng.uniform(-bound, bound));
  return Tensor<Real>(std::move(shape), std::move(v));
}

}  // namespace sla
