#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sla/core/error.hpp"
#include "sla/data/tokenizer.hpp"
#include "sla/nn/causal_lm.hpp"

namespace sla {

inline constexpr std::string_view kUserTag = "USER:";
inline constexpr std::string_view kAssistantTag = "ASSISTANT:";

enum class SegmentKind { kPrefix, kSpeech, kPrompt, kAssistantTag, kTranscript };

inline std::string_view segment_name(SegmentKind k) {
  switch (k) {
    case SegmentKind::kPrefix: return "prefix";
    case SegmentKind::kSpeech: return "speech";
    case SegmentKind::kPrompt: return "prompt";
    case SegmentKind::kAssistantTag: return "assistant_tag";
    case SegmentKind::kTranscript: return "transcript";
  }
  return "?";
}

struct SegmentSpan {
  SegmentKind kind;
  std::size_t begin;
  std::size_t end;
};

enum class ComposeMode { kTrain, kInfer };

/// "USER: <speech> <prompt> ASSISTANT: [transcript]" as LM input embeddings.
/// In train mode targets[i] is the id the LM should emit after position i:
/// the last assistant-tag position predicts the first transcript token, each
/// transcript position predicts its successor and the final one predicts EOS.
/// All other positions carry Tokenizer::kIgnore. Infer mode has no targets.
template <std::floating_point Real>
struct ComposedSequence {
  Tensor<Real> embeddings;
  std::vector<TokenId> targets;
  std::vector<SegmentSpan> segments;  // non-empty spans, in order, covering [0, length)

  std::size_t length() const { return embeddings.rows(); }

  std::optional<SegmentSpan> segment(SegmentKind kind) const {
    for (const auto& s : segments)
      if (s.kind == kind) return s;
    return std::nullopt;
  }
};

/// Token-level composition. `transcript` is required in train mode and
/// ignored in infer mode.
template <std::floating_point Real>
ComposedSequence<Real> compose_ids(const CausalLm<Real>& lm, std::span<const TokenId> prefix,
                                   const Tensor<Real>& speech, std::span<const TokenId> prompt,
                                   std::span<const TokenId> assistant_tag, std::span<const TokenId> transcript,
                                   ComposeMode mode) {
  if (speech.rank() != 2 || speech.cols() != lm.model_dim()) {
    throw DimensionError("compose: speech embeddings must be [N x " + std::to_string(lm.model_dim()) + "], got " +
                         shape_str(speech.shape()));
  }
  if (speech.rows() == 0) throw ContractError("compose: empty speech (no frames survive downsampling)");
  if (assistant_tag.empty()) throw ContractError("compose: empty assistant tag");
  const bool train = mode == ComposeMode::kTrain;
  if (train && transcript.empty()) throw ContractError("compose: train mode needs a non-empty transcript");
  const std::size_t n = speech.rows();
  const std::size_t len =
      prefix.size() + n + prompt.size() + assistant_tag.size() + (train ? transcript.size() : 0);
  if (len > lm.config().max_positions) {
    throw LengthError("composed sequence of length " + std::to_string(len) + " exceeds max_positions " +
                      std::to_string(lm.config().max_positions));
  }

  ComposedSequence<Real> out;
  std::vector<Tensor<Real>> parts;
  std::size_t at = 0;
  const auto push = [&](SegmentKind kind, std::size_t count) {
    if (count == 0) return;
    out.segments.push_back({kind, at, at + count});
    at += count;
  };
  if (!prefix.empty()) parts.push_back(lm.embed_tokens(prefix));
  push(SegmentKind::kPrefix, prefix.size());
  parts.push_back(speech);
  push(SegmentKind::kSpeech, n);
  std::vector<TokenId> text(prompt.begin(), prompt.end());
  text.insert(text.end(), assistant_tag.begin(), assistant_tag.end());
  if (train) text.insert(text.end(), transcript.begin(), transcript.end());
  parts.push_back(lm.embed_tokens(text));
  push(SegmentKind::kPrompt, prompt.size());
  push(SegmentKind::kAssistantTag, assistant_tag.size());
  if (train) push(SegmentKind::kTranscript, transcript.size());
  out.embeddings = concat_rows(parts);

  if (train) {
    out.targets.assign(len, Tokenizer::kIgnore);
    const std::size_t first = len - transcript.size();
    out.targets[first - 1] = transcript[0];
    for (std::size_t i = 0; i + 1 < transcript.size(); ++i) out.targets[first + i] = transcript[i + 1];
    out.targets[len - 1] = Tokenizer::kEos;
  }
  return out;
}

/// Text-level composition with the word tokenizer. An empty prompt yields
/// "USER: <speech> ASSISTANT:".
template <std::floating_point Real>
ComposedSequence<Real> compose(const CausalLm<Real>& lm, const Tokenizer& tok, const Tensor<Real>& speech,
                               std::string_view prompt, const std::optional<std::string>& transcript,
                               ComposeMode mode) {
  if (mode == ComposeMode::kTrain && (!transcript || normalize_text(*transcript).empty())) {
    throw ContractError("compose: train mode needs a transcript");
  }
  const auto prefix = tok.encode(kUserTag);
  const auto prompt_ids = tok.encode(prompt);
  const auto tag = tok.encode(kAssistantTag);
  const auto words = mode == ComposeMode::kTrain ? tok.encode(*transcript) : std::vector<TokenId>{};
  return compose_ids(lm, prefix, speech, prompt_ids, tag, words, mode);
}

/// Several composed sequences stacked along time for LM::forward_packed.
template <std::floating_point Real>
struct ComposedBatch {
  Tensor<Real> embeddings;
  std::vector<TokenId> targets;
  std::vector<std::size_t> lengths;
};

template <std::floating_point Real>
ComposedBatch<Real> pack(const std::vector<ComposedSequence<Real>>& items) {
  if (items.empty()) throw ContractError("pack: empty batch");
  ComposedBatch<Real> b;
  std::vector<Tensor<Real>> parts;
  for (const auto& s : items) {
    parts.push_back(s.embeddings);
    b.targets.insert(b.targets.end(), s.targets.begin(), s.targets.end());
    b.lengths.push_back(s.length());
  }
  b.embeddings = concat_rows(parts);
  return b;
}

}  // namespace sla
