#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sla/core/error.hpp"
#include "sla/core/rng.hpp"
#include "sla/core/threads.hpp"
#include "sla/data/feature_file.hpp"
#include "sla/data/manifest.hpp"
#include "sla/data/tokenizer.hpp"
#include "sla/decode/prompt_library.hpp"

namespace sla {

/// Parameters of the synthetic speech-like task: a bigram word grammar whose
/// words are rendered as runs of noisy codebook frames.
struct SyntheticTaskSpec {
  std::size_t vocab_size = 50;
  std::size_t successors_per_word = 6;
  int frames_per_word = 5;
  std::vector<int> jitter{0};
  double noise_sigma = 0.1;
  std::size_t feature_dim = 16;
  double frame_rate_hz = 50.0;
  std::size_t min_words = 3;
  std::size_t max_words = 12;
  std::uint64_t seed = 1;
};

inline void to_json(nlohmann::json& j, const SyntheticTaskSpec& s) {
  j = {{"vocab_size", s.vocab_size},
       {"successors_per_word", s.successors_per_word},
       {"frames_per_word", s.frames_per_word},
       {"jitter", s.jitter},
       {"noise_sigma", s.noise_sigma},
       {"feature_dim", s.feature_dim},
       {"frame_rate_hz", s.frame_rate_hz},
       {"min_words", s.min_words},
       {"max_words", s.max_words},
       {"seed", s.seed}};
}

inline void from_json(const nlohmann::json& j, SyntheticTaskSpec& s) {
  static const std::set<std::string> known{"vocab_size",    "successors_per_word", "frames_per_word",
                                           "jitter",        "noise_sigma",         "feature_dim",
                                           "frame_rate_hz", "min_words",           "max_words",
                                           "seed"};
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw ConfigError("task: unknown key '" + key + "'");
  }
  s.vocab_size = j.value("vocab_size", s.vocab_size);
  s.successors_per_word = j.value("successors_per_word", s.successors_per_word);
  s.frames_per_word = j.value("frames_per_word", s.frames_per_word);
  s.jitter = j.value("jitter", s.jitter);
  s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
  s.feature_dim = j.value("feature_dim", s.feature_dim);
  s.frame_rate_hz = j.value("frame_rate_hz", s.frame_rate_hz);
  s.min_words = j.value("min_words", s.min_words);
  s.max_words = j.value("max_words", s.max_words);
  s.seed = j.value("seed", s.seed);
}

inline std::string synthetic_word(std::size_t index, std::size_t vocab_size) {
  const auto width = std::to_string(vocab_size > 0 ? vocab_size - 1 : 0).size();
  std::string digits = std::to_string(index);
  return "w" + std::string(width > digits.size() ? width - digits.size() : 0, '0') + digits;
}

/// A rendered utterance: word indices, their frame counts, and the frames.
struct SyntheticUtterance {
  std::vector<std::size_t> words;
  std::vector<int> frames_per_word;
  FeatureMatrix features;
};

class SyntheticTask {
 public:
  SyntheticTask() = default;

  /// Draws the grammar and codebook from spec.seed.
  static SyntheticTask generate(const SyntheticTaskSpec& spec) {
    SyntheticTask t;
    t.spec_ = spec;
    t.validate_spec();
    Rng rng(mix_seed(spec.seed, 0x7461736bULL));
    const std::size_t v = spec.vocab_size;
    t.transitions_.assign(v * v, 0.0);
    std::vector<std::size_t> order(v);
    for (std::size_t i = 0; i < v; ++i) {
      for (std::size_t j = 0; j < v; ++j) order[j] = j;
      rng.shuffle(order);
      const std::size_t succ = std::min(spec.successors_per_word, v);
      double total = 0;
      for (std::size_t s = 0; s < succ; ++s) {
        const double w = rng.uniform(0.5, 1.5);
        t.transitions_[i * v + order[s]] = w;
        total += w;
      }
      for (std::size_t j = 0; j < v; ++j) t.transitions_[i * v + j] /= total;
    }
    t.codebook_.resize(v * spec.feature_dim);
    for (auto& c : t.codebook_) c = rng.normal();
    for (std::size_t i = 0; i < v; ++i) t.words_.push_back(synthetic_word(i, v));
    t.validate();
    return t;
  }

  const SyntheticTaskSpec& spec() const { return spec_; }
  std::size_t vocab_size() const { return spec_.vocab_size; }
  const std::vector<std::string>& words() const { return words_; }
  double transition(std::size_t from, std::size_t to) const { return transitions_[from * spec_.vocab_size + to]; }
  std::span<const double> codebook_row(std::size_t word) const {
    return std::span(codebook_).subspan(word * spec_.feature_dim, spec_.feature_dim);
  }
  const std::vector<double>& codebook() const { return codebook_; }

  /// Probability that a sentence stops after `length` words given it reached that length.
  double stop_probability(std::size_t length) const {
    if (length < spec_.min_words) return 0.0;
    if (length >= spec_.max_words) return 1.0;
    return 1.0 / static_cast<double>(spec_.max_words - length + 1);
  }

  std::vector<std::size_t> sample_words(Rng& rng) const {
    const auto n = static_cast<std::size_t>(
        rng.integer(static_cast<std::int64_t>(spec_.min_words), static_cast<std::int64_t>(spec_.max_words)));
    std::vector<std::size_t> words;
    words.push_back(rng.index(spec_.vocab_size));
    while (words.size() < n) {
      const double u = rng.uniform();
      double acc = 0;
      std::size_t next = spec_.vocab_size - 1;
      for (std::size_t j = 0; j < spec_.vocab_size; ++j) {
        acc += transition(words.back(), j);
        if (u < acc) {
          next = j;
          break;
        }
      }
      words.push_back(next);
    }
    return words;
  }

  std::string transcript(const std::vector<std::size_t>& words) const {
    std::string out;
    for (auto w : words) {
      if (!out.empty()) out.push_back(' ');
      out += words_[w];
    }
    return out;
  }

  /// Each word becomes (frames_per_word + jitter) copies of its codebook row
  /// plus independent Gaussian noise.
  SyntheticUtterance render(const std::vector<std::size_t>& words, Rng& rng) const {
    SyntheticUtterance u;
    u.words = words;
    u.features.dim = static_cast<std::uint32_t>(spec_.feature_dim);
    for (auto w : words) {
      const int count = spec_.frames_per_word + spec_.jitter[rng.index(spec_.jitter.size())];
      u.frames_per_word.push_back(count);
      const auto row = codebook_row(w);
      for (int f = 0; f < count; ++f)
        for (double c : row) u.features.values.push_back(static_cast<float>(c + spec_.noise_sigma * rng.normal()));
      u.features.frames += static_cast<std::uint32_t>(count);
    }
    return u;
  }

  SyntheticUtterance sample_utterance(std::uint64_t seed) const {
    Rng rng(seed);
    const auto words = sample_words(rng);
    return render(words, rng);
  }

  nlohmann::json to_json() const {
    return {{"spec", spec_}, {"words", words_}, {"transitions", transitions_}, {"codebook", codebook_}};
  }

  static SyntheticTask from_json(const nlohmann::json& j) {
    SyntheticTask t;
    t.spec_ = j.at("spec").get<SyntheticTaskSpec>();
    t.words_ = j.at("words").get<std::vector<std::string>>();
    t.transitions_ = j.at("transitions").get<std::vector<double>>();
    t.codebook_ = j.at("codebook").get<std::vector<double>>();
    t.validate_spec();
    t.validate();
    return t;
  }

  static SyntheticTask load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open task file " + path);
    return from_json(nlohmann::json::parse(in));
  }

  /// Rows of the transition table sum to 1, codebook rows are pairwise distinct.
  void validate() const {
    const std::size_t v = spec_.vocab_size;
    if (transitions_.size() != v * v || codebook_.size() != v * spec_.feature_dim || words_.size() != v) {
      throw ContractError("synthetic task tables do not match vocab_size/feature_dim");
    }
    for (std::size_t i = 0; i < v; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < v; ++j) {
        if (transition(i, j) < 0) throw ContractError("negative transition probability");
        s += transition(i, j);
      }
      if (std::abs(s - 1.0) > 1e-9) throw ContractError("transition row " + std::to_string(i) + " sums to " + std::to_string(s));
    }
    for (std::size_t a = 0; a < v; ++a)
      for (std::size_t b = a + 1; b < v; ++b) {
        const auto ra = codebook_row(a), rb = codebook_row(b);
        if (std::equal(ra.begin(), ra.end(), rb.begin())) {
          throw ContractError("codebook rows " + std::to_string(a) + " and " + std::to_string(b) + " coincide");
        }
      }
  }

 private:
  void validate_spec() const {
    if (spec_.vocab_size < 2) throw ConfigError("task.vocab_size must be at least 2");
    if (spec_.successors_per_word < 1) throw ConfigError("task.successors_per_word must be positive");
    if (spec_.feature_dim < 1) throw ConfigError("task.feature_dim must be positive");
    if (spec_.noise_sigma < 0) throw ConfigError("task.noise_sigma must be non-negative");
    if (spec_.jitter.empty()) throw ConfigError("task.jitter must list at least one offset");
    for (int j : spec_.jitter) {
      if (spec_.frames_per_word + j < 1) throw ConfigError("task.jitter makes a word shorter than one frame");
    }
    if (spec_.min_words < 1 || spec_.max_words < spec_.min_words) throw ConfigError("task: bad word-count range");
  }

  SyntheticTaskSpec spec_;
  std::vector<std::string> words_;
  std::vector<double> transitions_;  // vocab x vocab, row = previous word
  std::vector<double> codebook_;     // vocab x feature_dim
};

/// Tokens the template and prompts need, followed by the task words.
inline Tokenizer build_vocabulary(const std::vector<std::string>& task_words,
                                  const std::vector<std::string>& prompts) {
  std::vector<std::string> words{"user:", "assistant:"};
  std::set<std::string> seen(words.begin(), words.end());
  for (const auto& p : prompts)
    for (const auto& w : split_words(p))
      if (seen.insert(w).second) words.push_back(w);
  for (const auto& w : task_words) {
    if (!seen.insert(normalize_text(w)).second) throw ContractError("task word '" + w + "' collides with a prompt word");
    words.push_back(w);
  }
  return Tokenizer(words);
}

/// Formats a copy-task line for instruction tuning.
inline std::string instruction_line(const std::string& words, const std::string& prompt) {
  std::string line = "USER: " + words;
  if (!prompt.empty()) line += " " + prompt;
  return line + " ASSISTANT: " + words;
}

struct DatasetSpec {
  SyntheticTaskSpec task;
  std::size_t n_train = 2000;
  std::size_t n_val = 200;
  std::size_t n_test = 200;
  std::uint64_t split_seed = 17;
  std::size_t lm_train_sentences = 20000;
  std::size_t lm_heldout_sentences = 1000;
  std::size_t instruct_train = 20000;
  std::size_t instruct_heldout = 500;
};

inline DatasetSpec dataset_spec_from_json(const nlohmann::json& j) {
  static const std::set<std::string> known{"task",         "n_train",      "n_val",
                                           "n_test",       "split_seed",   "lm_train_sentences",
                                           "lm_heldout_sentences", "instruct_train", "instruct_heldout"};
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw ConfigError("data spec: unknown key '" + key + "'");
  }
  DatasetSpec d;
  if (j.contains("task")) d.task = j.at("task").get<SyntheticTaskSpec>();
  d.n_train = j.value("n_train", d.n_train);
  d.n_val = j.value("n_val", d.n_val);
  d.n_test = j.value("n_test", d.n_test);
  d.split_seed = j.value("split_seed", d.split_seed);
  d.lm_train_sentences = j.value("lm_train_sentences", d.lm_train_sentences);
  d.lm_heldout_sentences = j.value("lm_heldout_sentences", d.lm_heldout_sentences);
  d.instruct_train = j.value("instruct_train", d.instruct_train);
  d.instruct_heldout = j.value("instruct_heldout", d.instruct_heldout);
  if (d.n_train + d.n_val + d.n_test < 1) throw ConfigError("data spec: need at least one utterance");
  return d;
}

struct GeneratedDataset {
  std::filesystem::path dir;
  std::vector<UtteranceRecord> train, val, test;
};

namespace detail {

inline std::uint64_t utterance_seed(std::uint64_t split_seed, std::uint64_t split, std::uint64_t index) {
  return mix_seed(split_seed, (split << 40) | index);
}

inline void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& l : lines) out << l << '\n';
}

}  // namespace detail

/// Writes task.json, vocab.txt, prompts.txt, per-split manifests and SLMF
/// feature files, and the text corpora for LM pretraining and instruction
/// tuning. Output is a pure function of the spec.
inline GeneratedDataset gen_dataset(const DatasetSpec& spec, const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  const auto task = SyntheticTask::generate(spec.task);
  const auto prompts = default_prompt_library();
  fs::create_directories(out_dir);
  {
    std::ofstream out(out_dir / "task.json");
    if (!out) throw std::runtime_error("cannot write " + (out_dir / "task.json").string());
    out << task.to_json().dump() << '\n';
  }
  build_vocabulary(task.words(), prompts).save((out_dir / "vocab.txt").string());
  detail::write_lines(out_dir / "prompts.txt", prompts);

  GeneratedDataset result;
  result.dir = out_dir;
  const struct {
    const char* name;
    std::size_t count;
    std::vector<UtteranceRecord>* records;
  } splits[] = {{"train", spec.n_train, &result.train}, {"val", spec.n_val, &result.val}, {"test", spec.n_test, &result.test}};
  for (std::size_t s = 0; s < 3; ++s) {
    const auto& split = splits[s];
    fs::create_directories(out_dir / "features" / split.name);
    split.records->resize(split.count);
    parallel_for(split.count, worker_threads(), [&](std::size_t i) {
      const auto seed = detail::utterance_seed(spec.split_seed, s, i);
      const auto utt = task.sample_utterance(seed);
      char id[64];
      std::snprintf(id, sizeof id, "%s-%05zu", split.name, i);
      const std::string rel = std::string("features/") + split.name + "/" + id + ".slmf";
      write_features((out_dir / rel).string(), utt.features);
      auto& r = (*split.records)[i];
      r.id = id;
      r.transcript = task.transcript(utt.words);
      r.feature_path = rel;
      r.synthetic_seed = seed;
      r.num_frames = utt.features.frames;
      r.frame_rate_hz = spec.task.frame_rate_hz;
      r.dim = utt.features.dim;
    });
    write_manifest((out_dir / (std::string(split.name) + ".jsonl")).string(), *split.records);
  }

  const auto sentences = [&](std::uint64_t stream, std::size_t n) {
    std::vector<std::string> lines;
    Rng rng(mix_seed(spec.split_seed, stream));
    for (std::size_t i = 0; i < n; ++i) lines.push_back(task.transcript(task.sample_words(rng)));
    return lines;
  };
  detail::write_lines(out_dir / "lm_train.txt", sentences(101, spec.lm_train_sentences));
  detail::write_lines(out_dir / "lm_heldout.txt", sentences(102, spec.lm_heldout_sentences));

  // Copy tasks: with no prompt or with a library prompt.
  const auto instruct = [&](std::uint64_t stream, std::size_t n) {
    std::vector<std::string> lines;
    Rng rng(mix_seed(spec.split_seed, stream));
    for (std::size_t i = 0; i < n; ++i) {
      const auto words = task.transcript(task.sample_words(rng));
      const auto pick = rng.index(prompts.size() + 1);
      lines.push_back(instruction_line(words, pick == prompts.size() ? std::string() : prompts[pick]));
    }
    return lines;
  };
  detail::write_lines(out_dir / "instruct_train.txt", instruct(201, spec.instruct_train));
  detail::write_lines(out_dir / "instruct_heldout.txt", instruct(202, spec.instruct_heldout));
  return result;
}

}  // namespace sla
