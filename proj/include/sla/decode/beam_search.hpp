#pragma once

#include <algorithm>
#include <concepts>
#include <limits>
#include <cstdint>
#include <span>
#include <vector>

#include "sla/align/compose.hpp"
#include "sla/core/error.hpp"
#include "sla/nn/causal_lm.hpp"

namespace sla {

struct Hypothesis {
  std::vector<TokenId> tokens;  // generated tokens, EOS included when finished
  double log_prob = 0.0;
  bool finished = false;
  // No hypothesis emitted EOS within max_new tokens; this is the best unfinished one.
  bool truncated = false;
  std::size_t finish_step = 0;
};

/// Anything that returns next-token log probabilities for a generated prefix.
template <class S>
concept NextTokenScorer = requires(const S& s, std::span<const TokenId> prefix) {
  { s.log_probs(prefix) } -> std::convertible_to<std::vector<double>>;
};

/// Optional batched form, used when available.
template <class S>
concept BatchNextTokenScorer =
    NextTokenScorer<S> && requires(const S& s, const std::vector<std::vector<TokenId>>& prefixes) {
      { s.log_probs_batch(prefixes) } -> std::convertible_to<std::vector<std::vector<double>>>;
    };

struct BeamConfig {
  std::size_t beam = 4;
  std::size_t max_new = 64;
  TokenId eos = 1;
};

namespace detail {

// Higher score first; equal scores prefer the lexicographically lower token
// sequence, i.e. the lower token id at the first difference.
inline bool better_candidate(const Hypothesis& a, const Hypothesis& b) {
  if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
  return a.tokens < b.tokens;
}

// Finished pool: score, then lower token ids, then earlier finish.
inline bool better_finished(const Hypothesis& a, const Hypothesis& b) {
  if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
  if (a.tokens != b.tokens) return a.tokens < b.tokens;
  return a.finish_step < b.finish_step;
}

}  // namespace detail

/// Beam search with plain cumulative log-probability scores. At each step all
/// one-token extensions of the active hypotheses are ranked and the best
/// `beam` kept; those ending in EOS move to the finished pool and still use a
/// slot at that step. Search stops when every active hypothesis scores below
/// the best finished one (scores only decrease), when none remain, or after
/// max_new tokens.
template <NextTokenScorer S>
Hypothesis beam_search(const S& scorer, const BeamConfig& config) {
  if (config.beam == 0) throw ContractError("beam_search: beam must be at least 1");
  std::vector<Hypothesis> active{Hypothesis{}};
  std::vector<Hypothesis> finished;
  for (std::size_t step = 1; step <= config.max_new && !active.empty(); ++step) {
    std::vector<std::vector<double>> scores;
    if constexpr (BatchNextTokenScorer<S>) {
      std::vector<std::vector<TokenId>> prefixes;
      for (const auto& h : active) prefixes.push_back(h.tokens);
      scores = scorer.log_probs_batch(prefixes);
    } else {
      for (const auto& h : active) scores.push_back(scorer.log_probs(h.tokens));
    }
    std::vector<Hypothesis> candidates;
    for (std::size_t a = 0; a < active.size(); ++a) {
      for (std::size_t v = 0; v < scores[a].size(); ++v) {
        const double lp = scores[a][v];
        if (lp == -std::numeric_limits<double>::infinity()) continue;
        Hypothesis h = active[a];
        h.tokens.push_back(static_cast<TokenId>(v));
        h.log_prob += lp;
        if (static_cast<TokenId>(v) == config.eos) {
          h.finished = true;
          h.finish_step = step;
        }
        candidates.push_back(std::move(h));
      }
    }
    const std::size_t keep = std::min(config.beam, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep), candidates.end(),
                      detail::better_candidate);
    active.clear();
    for (std::size_t i = 0; i < keep; ++i) {
      if (candidates[i].finished) {
        finished.push_back(std::move(candidates[i]));
      } else {
        active.push_back(std::move(candidates[i]));
      }
    }
    if (!finished.empty() && !active.empty()) {
      const auto best_finished = std::min_element(finished.begin(), finished.end(), detail::better_finished);
      if (best_finished->log_prob > active.front().log_prob) break;
    }
  }
  if (!finished.empty()) return *std::min_element(finished.begin(), finished.end(), detail::better_finished);
  if (active.empty()) throw ContractError("beam_search: scorer assigned zero probability to every token");
  Hypothesis best = *std::min_element(active.begin(), active.end(), detail::better_candidate);
  best.truncated = true;
  return best;
}

/// Greedy decoding: repeatedly take the most likely token (lowest id on ties).
template <NextTokenScorer S>
Hypothesis greedy_decode(const S& scorer, const BeamConfig& config) {
  Hypothesis h;
  for (std::size_t step = 1; step <= config.max_new; ++step) {
    const auto lp = scorer.log_probs(h.tokens);
    std::size_t best = 0;
    for (std::size_t v = 1; v < lp.size(); ++v)
      if (lp[v] > lp[best]) best = v;
    h.tokens.push_back(static_cast<TokenId>(best));
    h.log_prob += lp[best];
    if (static_cast<TokenId>(best) == config.eos) {
      h.finished = true;
      h.finish_step = step;
      return h;
    }
  }
  h.truncated = true;
  return h;
}

/// Scores continuations of a fixed embedding prefix (e.g. a composed
/// inference template) with a causal LM. The whole sequence is recomputed
/// for every query.
template <std::floating_point Real>
class LmScorer {
 public:
  LmScorer(const CausalLm<Real>& lm, Tensor<Real> prefix) : lm_(lm), prefix_(std::move(prefix)) {
    if (prefix_.rows() > lm_.config().max_positions) {
      throw LengthError("decode prefix of length " + std::to_string(prefix_.rows()) + " exceeds max_positions " +
                        std::to_string(lm_.config().max_positions));
    }
  }

  /// Generated tokens that still fit in the positional table.
  std::size_t room() const { return lm_.config().max_positions - prefix_.rows(); }

  std::vector<double> log_probs(std::span<const TokenId> generated) const {
    return log_probs_batch({std::vector<TokenId>(generated.begin(), generated.end())}).front();
  }

  std::vector<std::vector<double>> log_probs_batch(const std::vector<std::vector<TokenId>>& generated) const {
    NoGradGuard no_grad;
    std::vector<Tensor<Real>> parts;
    std::vector<std::size_t> lengths;
    for (const auto& g : generated) {
      parts.push_back(prefix_);
      if (!g.empty()) parts.push_back(lm_.embed_tokens(g));
      lengths.push_back(prefix_.rows() + g.size());
    }
    const auto logits = lm_.forward_packed(concat_rows(parts), lengths);
    const std::size_t v = logits.cols();
    std::vector<std::vector<double>> out;
    std::size_t end = 0;
    for (auto len : lengths) {
      end += len;
      out.push_back(log_softmax(logits.values().subspan((end - 1) * v, v)));
    }
    return out;
  }

 private:
  const CausalLm<Real>& lm_;
  Tensor<Real> prefix_;
};

/// Decodes from a composed inference sequence; max_new is capped by the
/// positions left in the LM.
template <std::floating_point Real>
Hypothesis decode_composed(const CausalLm<Real>& lm, const ComposedSequence<Real>& composed, BeamConfig config) {
  LmScorer<Real> scorer(lm, composed.embeddings);
  config.max_new = std::min(config.max_new, scorer.room());
  return beam_search(scorer, config);
}

}  // namespace sla
