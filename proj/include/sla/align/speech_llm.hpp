#pragma once

#include "sla/align/compose.hpp"
#include "sla/align/downsampler.hpp"
#include "sla/align/projector.hpp"
#include "sla/nn/causal_lm.hpp"
#include "sla/nn/speech_encoder.hpp"

namespace sla {

/// Encoder -> k-frame downsampler -> projector -> LM input embeddings.
/// Holds handles, so the parts share storage with the caller's objects.
template <std::floating_point Real = double>
struct SpeechLlm {
  SpeechEncoder<Real> encoder;
  std::size_t k;
  Projector<Real> projector;
  CausalLm<Real> lm;

  std::size_t speech_length(std::size_t frames) const { return downsampled_length(frames, k); }

  /// Frames [T x input_dim] -> speech embeddings [floor(T/k) x model_dim].
  Tensor<Real> speech_embeddings(const Tensor<Real>& frames) const {
    return projector.project(downsample(encoder.encode(frames), k));
  }

  ComposedSequence<Real> compose_utterance(const Tokenizer& tok, const Tensor<Real>& frames, std::string_view prompt,
                                           const std::optional<std::string>& transcript, ComposeMode mode) const {
    return compose(lm, tok, speech_embeddings(frames), prompt, transcript, mode);
  }
};

}  // namespace sla
