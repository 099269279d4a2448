#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "sla/tensor/tensor.hpp"

namespace sla {

using TokenId = std::int32_t;

namespace detail {

template <std::floating_point Real>
void require_matrix(const Tensor<Real>& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got shape " + shape_str(t.shape()));
  }
}

// C[m x n] += A[m x k] * B[k x n], all row-major. Every output element is
// accumulated as c + a0*b0 + a1*b1 + ... in increasing k, whichever code path
// computes it, so a row's result does not depend on the other rows in the
// batch. Full 4-row by 2-vector tiles stay in registers.
template <std::floating_point Real>
void gemm_acc(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t k, std::size_t n) {
  typedef Real Vec __attribute__((vector_size(32)));
  constexpr std::size_t kLanes = sizeof(Vec) / sizeof(Real);
  constexpr std::size_t kRows = 4, kVecs = 2, kCols = kLanes * kVecs;
  const auto tail = [&](std::size_t i, std::size_t j_begin) {
    Real* crow = c + i * n;
    const Real* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const Real av = arow[p];
      const Real* brow = b + p * n;
      for (std::size_t j = j_begin; j < n; ++j) crow[j] += av * brow[j];
    }
  };
  std::size_t i0 = 0;
  for (; i0 + kRows <= m; i0 += kRows) {
    std::size_t j0 = 0;
    for (; j0 + kCols <= n; j0 += kCols) {
      Vec acc[kRows][kVecs];
      for (std::size_t r = 0; r < kRows; ++r)
        for (std::size_t v = 0; v < kVecs; ++v) std::memcpy(&acc[r][v], c + (i0 + r) * n + j0 + v * kLanes, sizeof(Vec));
      for (std::size_t p = 0; p < k; ++p) {
        Vec bv[kVecs];
        for (std::size_t v = 0; v < kVecs; ++v) std::memcpy(&bv[v], b + p * n + j0 + v * kLanes, sizeof(Vec));
        for (std::size_t r = 0; r < kRows; ++r) {
          const Real av = a[(i0 + r) * k + p];
          for (std::size_t v = 0; v < kVecs; ++v) acc[r][v] += av * bv[v];
        }
      }
      for (std::size_t r = 0; r < kRows; ++r)
        for (std::size_t v = 0; v < kVecs; ++v) std::memcpy(c + (i0 + r) * n + j0 + v * kLanes, &acc[r][v], sizeof(Vec));
    }
    if (j0 < n)
      for (std::size_t r = 0; r < kRows; ++r) tail(i0 + r, j0);
  }
  for (; i0 < m; ++i0) tail(i0, 0);
}

template <std::floating_point Real>
std::vector<Real> transposed(std::span<const Real> a, std::size_t rows, std::size_t cols) {
  std::vector<Real> t(a.size());
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) t[j * rows + i] = a[i * cols + j];
  return t;
}

enum class Broadcast { kNone, kRow };

template <std::floating_point Real>
Broadcast broadcast_kind(const Tensor<Real>& a, const Tensor<Real>& b, const char* op) {
  if (a.shape() == b.shape()) return Broadcast::kNone;
  const bool b_is_row = b.rank() == 1 || (b.rank() == 2 && b.rows() == 1);
  if (a.rank() == 2 && b_is_row && b.cols() == a.cols()) return Broadcast::kRow;
  throw DimensionError(std::string(op) + ": cannot broadcast " + shape_str(b.shape()) + " onto " +
                       shape_str(a.shape()) + " (only a trailing-dimension row is supported)");
}

}  // namespace detail

/// Matrix product. Shapes [m x k] and [k x n].
template <std::floating_point Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b) {
  detail::require_matrix(a, "matmul");
  detail::require_matrix(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner dimensions disagree, " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  std::vector<Real> out(m * n, Real{0});
  detail::gemm_acc(a.values().data(), b.values().data(), out.data(), m, k, n);
  return make_result<Real>("matmul", Shape{m, n}, std::move(out), {a, b}, [m, k, n](detail::Node<Real>& self) {
    const auto& av = self.inputs[0]->value;
    const auto& bv = self.inputs[1]->value;
    if (auto ga = self.inputs[0]->grad_sink(); !ga.empty()) {
      const auto bt = detail::transposed<Real>(bv, k, n);
      detail::gemm_acc(self.grad.data(), bt.data(), ga.data(), m, n, k);
    }
    if (auto gb = self.inputs[1]->grad_sink(); !gb.empty()) {
      const auto at = detail::transposed<Real>(av, m, k);
      detail::gemm_acc(at.data(), self.grad.data(), gb.data(), k, m, n);
    }
  });
}

template <std::floating_point Real>
Tensor<Real> transpose(const Tensor<Real>& a) {
  detail::require_matrix(a, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  return make_result<Real>("transpose", Shape{n, m}, detail::transposed<Real>(a.values(), m, n), {a},
                           [m, n](detail::Node<Real>& self) {
                             if (auto ga = self.inputs[0]->grad_sink(); !ga.empty()) {
                               for (std::size_t i = 0; i < m; ++i)
                                 for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += self.grad[j * m + i];
                             }
                           });
}

/// Elementwise sum. `b` may also be a single row broadcast over the rows of `a`.
template <std::floating_point Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b) {
  const auto kind = detail::broadcast_kind(a, b, "add");
  const std::size_t n = b.numel();
  std::vector<Real> out(a.values().begin(), a.values().end());
  const auto bv = b.values();
  for (std::size_t r = 0; r < out.size(); r += n)
    for (std::size_t j = 0; j < n; ++j) out[r + j] += bv[j];
  return make_result<Real>("add", a.shape(), std::move(out), {a, b}, [n, kind](detail::Node<Real>& self) {
    if (auto ga = self.inputs[0]->grad_sink(); !ga.empty()) {
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i];
    }
    if (auto gb = self.inputs[1]->grad_sink(); !gb.empty()) {
      if (kind == detail::Broadcast::kNone) {
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += self.grad[i];
      } else {
        for (std::size_t r = 0; r < self.grad.size(); r += n)
          for (std::size_t j = 0; j < n; ++j) gb[j] += self.grad[r + j];
      }
    }
  });
}

/// Elementwise product, same broadcasting rule as add().
template <std::floating_point Real>
Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b) {
  const auto kind = detail::broadcast_kind(a, b, "mul");
  const std::size_t n = b.numel();
  std::vector<Real> out(a.values().begin(), a.values().end());
  const auto bv = b.values();
  for (std::size_t r = 0; r < out.size(); r += n)
    for (std::size_t j = 0; j < n; ++j) out[r + j] *= bv[j];
  return make_result<Real>("mul", a.shape(), std::move(out), {a, b}, [n, kind](detail::Node<Real>& self) {
    const auto& av = self.inputs[0]->value;
    const auto& bv = self.inputs[1]->value;
    if (auto ga = self.inputs[0]->grad_sink(); !ga.empty()) {
      for (std::size_t r = 0; r < ga.size(); r += n)
        for (std::size_t j = 0; j < n; ++j) ga[r + j] += self.grad[r + j] * bv[j];
    }
    if (auto gb = self.inputs[1]->grad_sink(); !gb.empty()) {
      if (kind == detail::Broadcast::kNone) {
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += self.grad[i] * av[i];
      } else {
        for (std::size_t r = 0; r < self.grad.size(); r += n)
          for (std::size_t j = 0; j < n; ++j) gb[j] += self.grad[r + j] * av[r + j];
      }
    }
  });
}

template <std::floating_point Real>
Tensor<Real> scale(const Tensor<Real>& a, Real factor) {
  std::vector<Real> out(a.values().begin(), a.values().end());
  for (auto& v : out) v *= factor;
  return make_result<Real>("scale", a.shape(), std::move(out), {a}, [factor](detail::Node<Real>& self) {
    if (auto ga = self.inputs[0]->grad_sink(); !ga.empty()) {
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i] * factor;
    }
  });
}

/// x * W + b with b broadcast over rows.
template <std::floating_point Real>
Tensor<Real> affine(const Tensor<Real>& x, const Tensor<Real>& weight, const Tensor<Real>& bias) {
  return add(matmul(x, weight), bias);
}

template <std::floating_point Real>
Tensor<Real> relu(const Tensor<Real>& x) {
  std::vector<Real> out(x.values().begin(), x.values().end());
  for (auto& v : out) v = v > Real{0} ? v : Real{0};
  return make_result<Real>("relu", x.shape(), std::move(out), {x}, [](detail::Node<Real>& self) {
    const auto& xv = self.inputs[0]->value;
    if (auto gx = self.inputs[0]->grad_sink(); !gx.empty()) {
      for (std::size_t i = 0; i < gx.size(); ++i)
        if (xv[i] > Real{0}) gx[i] += self.grad[i];
    }
  });
}

/// Row-wise layer normalization with learned gain and bias (biased variance).
template <std::floating_point Real>
Tensor<Real> layer_norm(const Tensor<Real>& x, const Tensor<Real>& gain, const Tensor<Real>& bias,
                        Real eps = Real(1e-5)) {
  detail::require_matrix(x, "layer_norm");
  const std::size_t m = x.rows(), n = x.cols();
  if (gain.numel() != n || bias.numel() != n) {
    throw DimensionError("layer_norm: gain/bias " + shape_str(gain.shape()) + "/" + shape_str(bias.shape()) +
                         " do not match feature dimension of " + shape_str(x.shape()));
  }
  const auto xv = x.values();
  const auto gv = gain.values();
  const auto bv = bias.values();
  std::vector<Real> out(m * n), normed(m * n), inv_std(m);
  for (std::size_t i = 0; i < m; ++i) {
    const Real* row = xv.data() + i * n;
    Real mean = 0;
    for (std::size_t j = 0; j < n; ++j) mean += row[j];
    mean /= static_cast<Real>(n);
    Real var = 0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<Real>(n);
    inv_std[i] = Real{1} / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      normed[i * n + j] = (row[j] - mean) * inv_std[i];
      out[i * n + j] = normed[i * n + j] * gv[j] + bv[j];
    }
  }
  return make_result<Real>(
      "layer_norm", x.shape(), std::move(out), {x, gain, bias},
      [m, n, normed = std::move(normed), inv_std = std::move(inv_std)](detail::Node<Real>& self) {
        const auto& gv = self.inputs[1]->value;
        const auto& g = self.grad;
        if (auto gx = self.inputs[0]->grad_sink(); !gx.empty()) {
          std::vector<Real> dn(n);
          for (std::size_t i = 0; i < m; ++i) {
            Real mean_dn = 0, mean_dn_n = 0;
            for (std::size_t j = 0; j < n; ++j) {
              dn[j] = g[i * n + j] * gv[j];
              mean_dn += dn[j];
              mean_dn_n += dn[j] * normed[i * n + j];
            }
            mean_dn /= static_cast<Real>(n);
            mean_dn_n /= static_cast<Real>(n);
            for (std::size_t j = 0; j < n; ++j)
              gx[i * n + j] += inv_std[i] * (dn[j] - mean_dn - normed[i * n + j] * mean_dn_n);
          }
        }
        if (auto gg = self.inputs[1]->grad_sink(); !gg.empty()) {
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) gg[j] += g[i * n + j] * normed[i * n + j];
        }
        if (auto gb = self.inputs[2]->grad_sink(); !gb.empty()) {
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
        }
      });
}

/// Gathers rows of `table` by id.
template <std::floating_point Real>
Tensor<Real> embedding(const Tensor<Real>& table, std::span<const TokenId> ids) {
  detail::require_matrix(table, "embedding");
  const std::size_t v = table.rows(), d = table.cols();
  std::vector<Real> out(ids.size() * d);
  const auto tv = table.values();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= v) {
      throw DimensionError("embedding: id " + std::to_string(ids[i]) + " outside table of " + std::to_string(v) +
                           " rows");
    }
    std::copy_n(tv.data() + static_cast<std::size_t>(ids[i]) * d, d, out.data() + i * d);
  }
  return make_result<Real>("embedding", Shape{ids.size(), d}, std::move(out), {table},
                           [d, ids = std::vector<TokenId>(ids.begin(), ids.end())](detail::Node<Real>& self) {
                             if (auto gt = self.inputs[0]->grad_sink(); !gt.empty()) {
                               for (std::size_t i = 0; i < ids.size(); ++i) {
                                 Real* dst = gt.data() + static_cast<std::size_t>(ids[i]) * d;
                                 for (std::size_t j = 0; j < d; ++j) dst[j] += self.grad[i * d + j];
                               }
                             }
                           });
}

/// Stacks matrices along the time (row) axis. All parts share a column count.
template <std::floating_point Real>
Tensor<Real> concat_rows(const std::vector<Tensor<Real>>& parts) {
  if (parts.empty()) throw ContractError("concat_rows: no inputs");
  const std::size_t n = parts.front().cols();
  std::size_t m = 0;
  for (const auto& p : parts) {
    detail::require_matrix(p, "concat_rows");
    if (p.cols() != n) {
      throw DimensionError("concat_rows: column mismatch " + shape_str(parts.front().shape()) + " vs " +
                           shape_str(p.shape()));
    }
    m += p.rows();
  }
  std::vector<Real> out;
  out.reserve(m * n);
  for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  return make_result<Real>("concat_rows", Shape{m, n}, std::move(out), parts, [](detail::Node<Real>& self) {
    std::size_t offset = 0;
    for (auto& in : self.inputs) {
      const std::size_t len = in->value.size();
      if (auto gi = in->grad_sink(); !gi.empty()) {
        for (std::size_t i = 0; i < len; ++i) gi[i] += self.grad[offset + i];
      }
      offset += len;
    }
  });
}

/// Joins matrices along the feature (column) axis. All parts share a row count.
template <std::floating_point Real>
Tensor<Real> concat_cols(const std::vector<Tensor<Real>>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  const std::size_t m = parts.front().rows();
  std::size_t n = 0;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    detail::require_matrix(p, "concat_cols");
    if (p.rows() != m) {
      throw DimensionError("concat_cols: row mismatch " + shape_str(parts.front().shape()) + " vs " +
                           shape_str(p.shape()));
    }
    widths.push_back(p.cols());
    n += p.cols();
  }
  std::vector<Real> out(m * n);
  std::size_t col = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.cols();
    for (std::size_t i = 0; i < m; ++i) std::copy_n(p.values().data() + i * w, w, out.data() + i * n + col);
    col += w;
  }
  return make_result<Real>("concat_cols", Shape{m, n}, std::move(out), parts,
                           [m, n, widths = std::move(widths)](detail::Node<Real>& self) {
                             std::size_t col = 0;
                             for (std::size_t p = 0; p < self.inputs.size(); ++p) {
                               const std::size_t w = widths[p];
                               if (auto gi = self.inputs[p]->grad_sink(); !gi.empty()) {
                                 for (std::size_t i = 0; i < m; ++i)
                                   for (std::size_t j = 0; j < w; ++j) gi[i * w + j] += self.grad[i * n + col + j];
                               }
                               col += w;
                             }
                           });
}

/// Rows [begin, end).
template <std::floating_point Real>
Tensor<Real> slice_rows(const Tensor<Real>& a, std::size_t begin, std::size_t end) {
  detail::require_matrix(a, "slice_rows");
  if (begin > end || end > a.rows()) {
    throw DimensionError("slice_rows: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") outside " + shape_str(a.shape()));
  }
  const std::size_t n = a.cols();
  std::vector<Real> out(a.values().begin() + static_cast<std::ptrdiff_t>(begin * n),
                        a.values().begin() + static_cast<std::ptrdiff_t>(end * n));
  return make_result<Real>("slice_rows", Shape{end - begin, n}, std::move(out), {a},
                           [offset = begin * n](detail::Node<Real>& self) {
                             if (auto ga = self.inputs[0]->grad_sink(); !ga.empty()) {
                               for (std::size_t i = 0; i < self.grad.size(); ++i) ga[offset + i] += self.grad[i];
                             }
                           });
}

/// Columns [begin, end).
template <std::floating_point Real>
Tensor<Real> slice_cols(const Tensor<Real>& a, std::size_t begin, std::size_t end) {
  detail::require_matrix(a, "slice_cols");
  if (begin > end || end > a.cols()) {
    throw DimensionError("slice_cols: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") outside " + shape_str(a.shape()));
  }
  const std::size_t m = a.rows(), n = a.cols(), w = end - begin;
  std::vector<Real> out(m * w);
  for (std::size_t i = 0; i < m; ++i) std::copy_n(a.values().data() + i * n + begin, w, out.data() + i * w);
  return make_result<Real>("slice_cols", Shape{m, w}, std::move(out), {a}, [m, n, w, begin](detail::Node<Real>& self) {
    if (auto ga = self.inputs[0]->grad_sink(); !ga.empty()) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < w; ++j) ga[i * n + begin + j] += self.grad[i * w + j];
    }
  });
}

/// Row-major reinterpretation with the same element count.
template <std::floating_point Real>
Tensor<Real> reshape(const Tensor<Real>& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape: " + shape_str(a.shape()) + " cannot become " + shape_str(shape));
  }
  std::vector<Real> out(a.values().begin(), a.values().end());
  return make_result<Real>("reshape", std::move(shape), std::move(out), {a}, [](detail::Node<Real>& self) {
    if (auto ga = self.inputs[0]->grad_sink(); !ga.empty()) {
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i];
    }
  });
}

/// Row-wise softmax of x + mask. The mask is a constant additive term of the
/// same shape (use -infinity to exclude an entry); every row must keep at
/// least one finite entry.
template <std::floating_point Real>
Tensor<Real> softmax_rows(const Tensor<Real>& x,
                          std::type_identity_t<std::optional<std::span<const Real>>> mask = std::nullopt) {
  detail::require_matrix(x, "softmax_rows");
  const std::size_t m = x.rows(), n = x.cols();
  if (mask && mask->size() != x.numel()) {
    throw DimensionError("softmax_rows: mask has " + std::to_string(mask->size()) + " entries for " +
                         shape_str(x.shape()));
  }
  const auto xv = x.values();
  std::vector<Real> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    Real mx = -std::numeric_limits<Real>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      const Real v = xv[i * n + j] + (mask ? (*mask)[i * n + j] : Real{0});
      out[i * n + j] = v;
      mx = std::max(mx, v);
    }
    if (!std::isfinite(mx)) throw NumericError("softmax_rows: row " + std::to_string(i) + " is fully masked");
    Real sum = 0;
    for (std::size_t j = 0; j < n; ++j) {
      out[i * n + j] = std::exp(out[i * n + j] - mx);
      sum += out[i * n + j];
    }
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= sum;
  }
  return make_result<Real>("softmax_rows", x.shape(), out, {x}, [m, n, y = out](detail::Node<Real>& self) {
    if (auto gx = self.inputs[0]->grad_sink(); !gx.empty()) {
      for (std::size_t i = 0; i < m; ++i) {
        Real dot = 0;
        for (std::size_t j = 0; j < n; ++j) dot += self.grad[i * n + j] * y[i * n + j];
        for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += y[i * n + j] * (self.grad[i * n + j] - dot);
      }
    }
  });
}

template <std::floating_point Real>
Tensor<Real> sum(const Tensor<Real>& a) {
  Real s = 0;
  for (auto v : a.values()) s += v;
  return make_result<Real>("sum", Shape{}, {s}, {a}, [](detail::Node<Real>& self) {
    if (auto ga = self.inputs[0]->grad_sink(); !ga.empty()) {
      for (auto& g : ga) g += self.grad[0];
    }
  });
}

template <std::floating_point Real>
Tensor<Real> mean(const Tensor<Real>& a) {
  return scale(sum(a), Real{1} / static_cast<Real>(a.numel()));
}

/// Mean token cross-entropy plus the bookkeeping needed to interpret it.
template <std::floating_point Real>
struct CrossEntropy {
  Tensor<Real> loss;
  std::size_t supervised = 0;
  // True when every target was ignore_id: the loss is then defined as 0 with zero gradient.
  bool all_ignored = false;
};

/// Mean of -log softmax(logits[t])[targets[t]] over positions whose target is
/// not ignore_id. Ignored positions contribute to neither value nor gradient.
template <std::floating_point Real>
CrossEntropy<Real> softmax_cross_entropy(const Tensor<Real>& logits, std::span<const TokenId> targets,
                                         TokenId ignore_id) {
  detail::require_matrix(logits, "softmax_cross_entropy");
  const std::size_t t_len = logits.rows(), v = logits.cols();
  if (targets.size() != t_len) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(targets.size()) + " targets for logits " +
                         shape_str(logits.shape()));
  }
  const auto lv = logits.values();
  std::vector<Real> lse(t_len, Real{0});
  std::size_t count = 0;
  Real total = 0;
  for (std::size_t i = 0; i < t_len; ++i) {
    if (targets[i] == ignore_id) continue;
    if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= v) {
      throw DimensionError("softmax_cross_entropy: target " + std::to_string(targets[i]) + " at position " +
                           std::to_string(i) + " outside vocabulary of " + std::to_string(v));
    }
    const Real* row = lv.data() + i * v;
    Real mx = row[0];
    for (std::size_t j = 1; j < v; ++j) mx = std::max(mx, row[j]);
    Real s = 0;
    for (std::size_t j = 0; j < v; ++j) s += std::exp(row[j] - mx);
    lse[i] = mx + std::log(s);
    total += lse[i] - row[static_cast<std::size_t>(targets[i])];
    ++count;
  }
  const Real value = count ? total / static_cast<Real>(count) : Real{0};
  CrossEntropy<Real> result;
  result.supervised = count;
  result.all_ignored = count == 0;
  result.loss = make_result<Real>(
      "softmax_cross_entropy", Shape{}, {value}, {logits},
      [t_len, v, count, ignore_id, lse = std::move(lse),
       targets = std::vector<TokenId>(targets.begin(), targets.end())](detail::Node<Real>& self) {
        if (count == 0) return;
        const auto& lv = self.inputs[0]->value;
        if (auto gl = self.inputs[0]->grad_sink(); !gl.empty()) {
          const Real w = self.grad[0] / static_cast<Real>(count);
          for (std::size_t i = 0; i < t_len; ++i) {
            if (targets[i] == ignore_id) continue;
            for (std::size_t j = 0; j < v; ++j) gl[i * v + j] += w * std::exp(lv[i * v + j] - lse[i]);
            gl[i * v + static_cast<std::size_t>(targets[i])] -= w;
          }
        }
      });
  return result;
}

/// Log-softmax of one row of values; no graph.
template <std::floating_point Real>
std::vector<double> log_softmax(std::span<const Real> row) {
  double mx = -std::numeric_limits<double>::infinity();
  for (auto x : row) mx = std::max(mx, static_cast<double>(x));
  double s = 0;
  for (auto x : row) s += std::exp(static_cast<double>(x) - mx);
  const double lse = mx + std::log(s);
  std::vector<double> out(row.size());
  for (std::size_t i = 0; i < row.size(); ++i) out[i] = static_cast<double>(row[i]) - lse;
  return out;
}

}  // namespace sla
