#pragma once

#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "sla/tensor/ops.hpp"

namespace sla {

/// Multi-head scaled dot-product attention with a causal mask inside each
/// segment and no attention across segments. q, k, v are [T x D] with the
/// heads laid out as consecutive column blocks of width D / heads; segment
/// lengths must sum to T. Row i only reads rows j <= i of its own segment, so
/// its output is exactly independent of later rows and of other segments.
template <std::floating_point Real>
Tensor<Real> causal_attention(const Tensor<Real>& q, const Tensor<Real>& k, const Tensor<Real>& v,
                              std::span<const std::size_t> segments, std::size_t heads) {
  detail::require_matrix(q, "causal_attention");
  if (k.shape() != q.shape() || v.shape() != q.shape()) {
    throw DimensionError("causal_attention: q/k/v shapes " + shape_str(q.shape()) + ", " + shape_str(k.shape()) +
                         ", " + shape_str(v.shape()) + " differ");
  }
  const std::size_t t_len = q.rows(), dim = q.cols();
  if (heads == 0 || dim % heads != 0) {
    throw DimensionError("causal_attention: " + std::to_string(dim) + " columns do not split into " +
                         std::to_string(heads) + " heads");
  }
  if (std::accumulate(segments.begin(), segments.end(), std::size_t{0}) != t_len) {
    throw DimensionError("causal_attention: segment lengths do not sum to " + std::to_string(t_len));
  }
  const std::size_t dh = dim / heads;
  const Real inv_scale = Real{1} / std::sqrt(static_cast<Real>(dh));
  std::vector<std::size_t> starts;
  for (std::size_t s = 0, at = 0; s < segments.size(); at += segments[s++]) starts.push_back(at);

  // probs[h] holds, for every row i, weights over j in [segment start, i].
  // offsets[i] indexes the first weight of row i within a head's block.
  std::vector<std::size_t> offsets(t_len + 1, 0);
  std::vector<std::size_t> row_start(t_len);
  for (std::size_t s = 0; s < segments.size(); ++s)
    for (std::size_t r = 0; r < segments[s]; ++r) {
      const std::size_t i = starts[s] + r;
      row_start[i] = starts[s];
      offsets[i + 1] = offsets[i] + r + 1;
    }
  const std::size_t per_head = offsets[t_len];
  std::vector<Real> probs(heads * per_head);
  std::vector<Real> out(t_len * dim, Real{0});
  const auto qv = q.values(), kv = k.values(), vv = v.values();
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t c0 = h * dh;
    for (std::size_t i = 0; i < t_len; ++i) {
      Real* p = probs.data() + h * per_head + offsets[i];
      const std::size_t n = i - row_start[i] + 1;
      Real mx = -std::numeric_limits<Real>::infinity();
      for (std::size_t r = 0; r < n; ++r) {
        const std::size_t j = row_start[i] + r;
        Real dot = 0;
        for (std::size_t c = 0; c < dh; ++c) dot += qv[i * dim + c0 + c] * kv[j * dim + c0 + c];
        p[r] = dot * inv_scale;
        mx = std::max(mx, p[r]);
      }
      Real sum = 0;
      for (std::size_t r = 0; r < n; ++r) {
        p[r] = std::exp(p[r] - mx);
        sum += p[r];
      }
      for (std::size_t r = 0; r < n; ++r) p[r] /= sum;
      Real* o = out.data() + i * dim + c0;
      for (std::size_t r = 0; r < n; ++r) {
        const Real* vrow = vv.data() + (row_start[i] + r) * dim + c0;
        for (std::size_t c = 0; c < dh; ++c) o[c] += p[r] * vrow[c];
      }
    }
  }
  return make_result<Real>(
      "causal_attention", q.shape(), std::move(out), {q, k, v},
      [t_len, dim, heads, dh, inv_scale, per_head, probs = std::move(probs), offsets = std::move(offsets),
       row_start = std::move(row_start)](detail::Node<Real>& self) {
        const auto& qv = self.inputs[0]->value;
        const auto& kv = self.inputs[1]->value;
        const auto& vv = self.inputs[2]->value;
        auto gq = self.inputs[0]->grad_sink();
        auto gk = self.inputs[1]->grad_sink();
        auto gv = self.inputs[2]->grad_sink();
        const auto& go = self.grad;
        std::vector<Real> dp;
        for (std::size_t h = 0; h < heads; ++h) {
          const std::size_t c0 = h * dh;
          for (std::size_t i = 0; i < t_len; ++i) {
            const Real* p = probs.data() + h * per_head + offsets[i];
            const std::size_t n = i - row_start[i] + 1;
            const Real* g = go.data() + i * dim + c0;
            dp.assign(n, Real{0});
            Real dot = 0;
            for (std::size_t r = 0; r < n; ++r) {
              const std::size_t j = row_start[i] + r;
              for (std::size_t c = 0; c < dh; ++c) dp[r] += g[c] * vv[j * dim + c0 + c];
              dot += p[r] * dp[r];
              if (!gv.empty())
                for (std::size_t c = 0; c < dh; ++c) gv[j * dim + c0 + c] += p[r] * g[c];
            }
            for (std::size_t r = 0; r < n; ++r) {
              const std::size_t j = row_start[i] + r;
              const Real ds = p[r] * (dp[r] - dot) * inv_scale;
              if (!gq.empty())
                for (std::size_t c = 0; c < dh; ++c) gq[i * dim + c0 + c] += ds * kv[j * dim + c0 + c];
              if (!gk.empty())
                for (std::size_t c = 0; c < dh; ++c) gk[j * dim + c0 + c] += ds * qv[i * dim + c0 + c];
            }
          }
        }
      });
}

}  // namespace sla
