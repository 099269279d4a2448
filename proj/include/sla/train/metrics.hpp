#pragma once

#include <span>

#include "sla/tensor/ops.hpp"

namespace sla {

struct TokenAccuracy {
  double accuracy = 0.0;
  std::size_t correct = 0;
  std::size_t supervised = 0;
  // No supervised positions: accuracy is defined as 0.
  bool empty = false;
};

/// Fraction of non-ignored positions whose argmax logit equals the target.
/// Ties go to the lowest id.
template <std::floating_point Real>
TokenAccuracy masked_token_accuracy(const Tensor<Real>& logits, std::span<const TokenId> targets, TokenId ignore_id) {
  if (logits.rank() != 2 || logits.rows() != targets.size()) {
    throw DimensionError("masked_token_accuracy: " + std::to_string(targets.size()) + " targets for logits " +
                         shape_str(logits.shape()));
  }
  const std::size_t v = logits.cols();
  const auto lv = logits.values();
  TokenAccuracy acc;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i] == ignore_id) continue;
    std::size_t best = 0;
    for (std::size_t j = 1; j < v; ++j)
      if (lv[i * v + j] > lv[i * v + best]) best = j;
    ++acc.supervised;
    if (static_cast<TokenId>(best) == targets[i]) ++acc.correct;
  }
  acc.empty = acc.supervised == 0;
  acc.accuracy = acc.empty ? 0.0 : static_cast<double>(acc.correct) / static_cast<double>(acc.supervised);
  return acc;
}

}  // namespace sla
