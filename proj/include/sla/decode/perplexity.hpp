#pragma once

#include <cmath>
#include <span>

#include "sla/align/compose.hpp"
#include "sla/core/error.hpp"
#include "sla/nn/causal_lm.hpp"

namespace sla {

struct NllSum {
  double total = 0.0;
  std::size_t supervised = 0;

  NllSum& operator+=(const NllSum& o) {
    total += o.total;
    supervised += o.supervised;
    return *this;
  }
};

/// Sum of -log p(target) over rows whose target is not ignore_id.
template <std::floating_point Real>
NllSum masked_nll(const Tensor<Real>& logits, std::span<const TokenId> targets, TokenId ignore_id) {
  if (logits.rows() != targets.size()) throw DimensionError("masked_nll: targets do not match logits rows");
  NllSum s;
  const std::size_t v = logits.cols();
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i] == ignore_id) continue;
    const auto lp = log_softmax(logits.values().subspan(i * v, v));
    s.total -= lp.at(static_cast<std::size_t>(targets[i]));
    ++s.supervised;
  }
  return s;
}

/// exp(total NLL / word count).
inline double word_ppl(const NllSum& nll, std::size_t word_count) {
  if (word_count == 0) throw ContractError("word_ppl: word count must be positive");
  if (nll.supervised == 0) throw ContractError("word_ppl: no supervised positions");
  return std::exp(nll.total / static_cast<double>(word_count));
}

/// NLL of a sentence under a text LM: each word predicts the next, the last predicts EOS.
template <std::floating_point Real>
NllSum sentence_nll(const CausalLm<Real>& lm, std::span<const TokenId> words, TokenId eos) {
  if (words.empty()) throw ContractError("sentence_nll: empty sentence");
  NoGradGuard no_grad;
  std::vector<TokenId> targets(words.begin() + 1, words.end());
  targets.push_back(eos);
  return masked_nll(lm.forward_tokens(words), targets, TokenId{-1});
}

/// NLL of the transcript (+EOS) positions of a train-mode composed sequence.
template <std::floating_point Real>
NllSum composed_nll(const CausalLm<Real>& lm, const ComposedSequence<Real>& seq) {
  NoGradGuard no_grad;
  return masked_nll(lm.forward(seq.embeddings), seq.targets, Tokenizer::kIgnore);
}

}  // namespace sla
