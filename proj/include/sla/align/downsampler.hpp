#pragma once

#include <cstring>

#include "sla/core/error.hpp"
#include "sla/tensor/ops.hpp"

namespace sla {

/// Number of output rows for T input frames: floor(T / k).
inline std::size_t downsampled_length(std::size_t frames, std::size_t k) {
  if (k == 0) throw ContractError("downsample: k must be positive");
  return frames / k;
}

/// Concatenates every k consecutive frames along the feature axis:
/// row i of the result is H[k*i] ++ H[k*i+1] ++ ... ++ H[k*i+k-1] (zero-based).
/// The last T mod k frames are dropped. T < k gives a [0 x k*d] result.
template <std::floating_point Real>
Tensor<Real> downsample(const Tensor<Real>& h, std::size_t k) {
  if (h.rank() != 2) throw DimensionError("downsample: expected [T x d] frames, got " + shape_str(h.shape()));
  const std::size_t t_len = h.rows(), d = h.cols();
  const std::size_t n = downsampled_length(t_len, k);
  const std::size_t width = k * d;
  std::vector<Real> out(n * width);
  const auto hv = h.values();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j)
      std::memcpy(out.data() + i * width + j * d, hv.data() + (k * i + j) * d, d * sizeof(Real));
  return make_result<Real>("downsample", Shape{n, width}, std::move(out), {h}, [n, k, d, width](detail::Node<Real>& self) {
    if (auto gh = self.inputs[0]->grad_sink(); !gh.empty()) {
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < k; ++j)
          for (std::size_t c = 0; c < d; ++c) gh[(k * i + j) * d + c] += self.grad[i * width + j * d + c];
    }
  });
}

}  // namespace sla
