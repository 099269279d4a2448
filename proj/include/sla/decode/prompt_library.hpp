#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "sla/core/error.hpp"
#include "sla/core/rng.hpp"

namespace sla {

inline const std::string kDefaultPrompt = "Transcribe speech to text.";

/// Ten paraphrases of the transcription instruction, used for the
/// random-prompt mode.
inline std::vector<std::string> default_prompt_library() {
  return {
      "Transcribe speech to text.",
      "Convert the audio to text.",
      "Write down what is said.",
      "Please transcribe the audio.",
      "Output the words in the speech.",
      "Recognize the speech and write it down.",
      "Turn the speech into text.",
      "What words are spoken?",
      "Give the transcript of the audio.",
      "Listen and write the words.",
  };
}

/// Ordered prompt list with a seeded uniform sampler. A library of one is the
/// fixed-prompt mode.
class PromptLibrary {
 public:
  PromptLibrary(std::vector<std::string> prompts, std::uint64_t seed) : prompts_(std::move(prompts)), rng_(seed), seed_key_(seed) {
    if (prompts_.empty()) throw ContractError("prompt library is empty");
  }

  static PromptLibrary fixed(std::string prompt) { return PromptLibrary({std::move(prompt)}, 0); }

  /// One prompt per non-empty line.
  static PromptLibrary load(const std::string& path, std::uint64_t seed) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open prompt library " + path);
    std::vector<std::string> prompts;
    for (std::string line; std::getline(in, line);) {
      if (line.find_first_not_of(" \t\r") != std::string::npos) prompts.push_back(line);
    }
    return PromptLibrary(std::move(prompts), seed);
  }

  const std::vector<std::string>& prompts() const { return prompts_; }
  std::size_t size() const { return prompts_.size(); }

  const std::string& sample() { return prompts_[rng_.index(prompts_.size())]; }

  /// Stateless draw keyed by an external counter (e.g. a global sample index),
  /// so resumed runs see the same prompts.
  const std::string& sample_at(std::uint64_t key) const {
    Rng r(mix_seed(seed_key_, key));
    return prompts_[r.index(prompts_.size())];
  }

  void reseed(std::uint64_t seed) {
    rng_ = Rng(seed);
    seed_key_ = seed;
  }

 private:
  std::vector<std::string> prompts_;
  Rng rng_;
  std::uint64_t seed_key_ = 0;
};

/// Uniform draw from the library; reproducible for a fixed seed.
inline std::string sample_prompt(PromptLibrary& lib) { return lib.sample(); }

enum class PromptModeKind { kNone, kFixed, kLibrary };

/// How the prompt slot of the template is filled: left empty, one fixed
/// instruction, or a uniform draw from a library (the built-in one when no
/// path is given).
struct PromptMode {
  PromptModeKind kind = PromptModeKind::kFixed;
  std::string text = kDefaultPrompt;
  std::string library_path;

  PromptLibrary library(std::uint64_t seed) const {
    switch (kind) {
      case PromptModeKind::kNone: return PromptLibrary::fixed("");
      case PromptModeKind::kFixed: return PromptLibrary::fixed(text);
      case PromptModeKind::kLibrary:
        return library_path.empty() ? PromptLibrary(default_prompt_library(), seed)
                                    : PromptLibrary::load(library_path, seed);
    }
    throw ContractError("unknown prompt mode");
  }

  std::string name() const {
    switch (kind) {
      case PromptModeKind::kNone: return "none";
      case PromptModeKind::kFixed: return "fixed";
      case PromptModeKind::kLibrary: return "library";
    }
    return "?";
  }
};

}  // namespace sla
