#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "sla/align/speech_llm.hpp"
#include "sla/decode/prompt_library.hpp"
#include "sla/train/adamw.hpp"
#include "sla/train/checkpoint.hpp"
#include "sla/train/metrics.hpp"
#include "sla/train/sampler.hpp"
#include "sla/train/schedule.hpp"
#include "sla/train/train_log.hpp"

namespace sla {

struct ProjectorTrainConfig {
  std::uint64_t seed = 1;
  std::size_t k = 5;
  std::size_t d_hidden = 2048;
  double lr_max = 1e-4;
  double weight_decay = 0.0;
  std::int64_t warmup = 1000;
  std::size_t max_steps = 100000;
  std::size_t batch_size = 8;
  std::size_t val_every = 500;
  std::size_t patience = 5;
  bool freeze_encoder = true;
  bool freeze_lm = true;
  PromptMode prompt;
};

/// An utterance held in memory for training or decoding.
template <std::floating_point Real>
struct Utterance {
  std::string id;
  Tensor<Real> features;
  std::string transcript;
};

struct EvalResult {
  double loss = 0;
  double accuracy = 0;
  std::size_t supervised = 0;
};

struct TrainResult {
  TrainLog log;
  std::int64_t steps_run = 0;
  std::int64_t best_step = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  bool early_stopped = false;
  std::string best_checkpoint;
  std::string state_checkpoint;
};

inline constexpr const char* kBestCheckpoint = "projector_best.slmc";
inline constexpr const char* kStateCheckpoint = "train_state.slmc";
inline constexpr const char* kTrainLogFile = "train_log.csv";
inline constexpr const char* kValLogFile = "val_log.csv";

// Validation prompts are keyed far away from training sample indices.
inline constexpr std::uint64_t kValPromptKey = std::uint64_t{1} << 48;

/// Masked loss and accuracy of `model` on `utts`, token-weighted. Prompt i is
/// prompts.sample_at(key_base + i).
template <std::floating_point Real>
EvalResult evaluate(const SpeechLlm<Real>& model, const Tokenizer& tok, const std::vector<Utterance<Real>>& utts,
                    const PromptLibrary& prompts, std::uint64_t key_base, std::size_t batch_size = 32) {
  NoGradGuard no_grad;
  double nll = 0;
  std::size_t correct = 0, supervised = 0;
  for (std::size_t start = 0; start < utts.size(); start += batch_size) {
    std::vector<ComposedSequence<Real>> items;
    for (std::size_t i = start; i < std::min(utts.size(), start + batch_size); ++i) {
      items.push_back(model.compose_utterance(tok, utts[i].features, prompts.sample_at(key_base + i),
                                              utts[i].transcript, ComposeMode::kTrain));
    }
    const auto batch = pack(items);
    const auto logits = model.lm.forward_packed(batch.embeddings, batch.lengths);
    const auto ce = softmax_cross_entropy(logits, batch.targets, Tokenizer::kIgnore);
    const auto acc = masked_token_accuracy(logits, batch.targets, Tokenizer::kIgnore);
    nll += static_cast<double>(ce.loss.item()) * static_cast<double>(ce.supervised);
    supervised += ce.supervised;
    correct += acc.correct;
  }
  if (supervised == 0) throw ContractError("evaluate: no supervised positions");
  return {nll / static_cast<double>(supervised), static_cast<double>(correct) / static_cast<double>(supervised),
          supervised};
}

/// Trains the projector (and any module whose freeze toggle is off) with
/// AdamW under linear warmup, validating every val_every steps from step 0
/// and stopping after `patience` validations without improvement. Writes the
/// best-validation checkpoint, a resumable state checkpoint and both CSV logs
/// into out_dir.
template <std::floating_point Real>
class ProjectorTrainer {
 public:
  using StepCallback = std::function<void(const TrainRecord&)>;

  ProjectorTrainer(SpeechLlm<Real>& model, const Tokenizer& tok, ProjectorTrainConfig config, std::string config_hash)
      : model_(model), tok_(tok), config_(std::move(config)), hash_(std::move(config_hash)),
        prompts_(config_.prompt.library(config_.seed)) {
    if (config_.batch_size == 0) throw ConfigError("train.batch_size must be positive");
    if (config_.val_every == 0) throw ConfigError("train.val_every must be positive");
    model_.lm.set_trainable(!config_.freeze_lm);
    model_.encoder.set_trainable(!config_.freeze_encoder);
    params_ = prefixed("proj.", model_.projector.parameters());
    if (!config_.freeze_encoder) append(params_, prefixed("enc.", model_.encoder.parameters()));
    if (!config_.freeze_lm) append(params_, prefixed("lm.", model_.lm.parameters()));
  }

  const ParameterList<Real>& trainable() const { return params_; }
  void on_step(StepCallback cb) { on_step_ = std::move(cb); }

  TrainResult run(const std::vector<Utterance<Real>>& train, const std::vector<Utterance<Real>>& val,
                  const std::filesystem::path& out_dir, const std::optional<std::string>& resume_state = {}) {
    if (train.empty()) throw ContractError("training manifest is empty");
    if (val.empty()) throw ContractError("validation manifest is empty");
    std::filesystem::create_directories(out_dir);
    TrainResult result;
    result.best_checkpoint = (out_dir / kBestCheckpoint).string();
    result.state_checkpoint = (out_dir / kStateCheckpoint).string();
    const auto train_csv = (out_dir / kTrainLogFile).string();
    const auto val_csv = (out_dir / kValLogFile).string();

    AdamW<Real> opt(params_, {0.9, 0.999, 1e-8, config_.weight_decay});
    EpochSampler sampler(train.size(), config_.seed);
    std::int64_t step = 0;
    std::size_t bad = 0;
    double wall_offset = 0;
    if (resume_state) {
      const auto state = read_checkpoint(*resume_state);
      const auto meta = read_checkpoint_metadata(*resume_state);
      if (meta.config_hash != hash_) {
        throw ConfigError("resume state was written by config " + meta.config_hash + ", current config is " + hash_);
      }
      state.load_into("", params_);
      step = meta.step;
      opt.load_state(state, "opt.", step);
      result.best_step = meta.extra.at("best_step").get<std::int64_t>();
      result.best_val_loss = meta.extra.at("best_val_loss").get<double>();
      bad = meta.extra.at("bad_validations").get<std::size_t>();
      wall_offset = meta.extra.at("wall_ms").get<double>();
      const auto dir = std::filesystem::path(*resume_state).parent_path();
      result.log = TrainLog::read((dir / kTrainLogFile).string(), (dir / kValLogFile).string());
      result.log.truncate(step);
    }

    const auto start = std::chrono::steady_clock::now();
    const auto elapsed_ms = [&] {
      return wall_offset + std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    };
    const auto save_state = [&] {
      Checkpoint c;
      c.add("", params_);
      opt.save_state(c, "opt.");
      auto meta = base_metadata(step);
      meta.extra["kind"] = "train_state";
      meta.extra["best_step"] = result.best_step;
      meta.extra["best_val_loss"] = result.best_val_loss;
      meta.extra["bad_validations"] = bad;
      meta.extra["wall_ms"] = elapsed_ms();
      write_checkpoint(result.state_checkpoint, c, meta);
      result.log.write(train_csv, val_csv, hash_);
    };
    // Returns false when patience is exhausted.
    const auto validate = [&] {
      const auto ev = evaluate(model_, tok_, val, prompts_, kValPromptKey);
      result.log.val.push_back({step, ev.loss, ev.accuracy});
      if (ev.loss < result.best_val_loss) {
        result.best_val_loss = ev.loss;
        result.best_step = step;
        bad = 0;
        auto meta = base_metadata(step);
        meta.val_loss = ev.loss;
        write_checkpoint(result.best_checkpoint, model_checkpoint(), meta);
      } else {
        ++bad;
      }
      save_state();
      return bad < config_.patience;
    };

    bool keep_going = true;
    if (step == 0) keep_going = validate();
    std::vector<TokenId> targets;
    while (keep_going && static_cast<std::size_t>(step) < config_.max_steps) {
      ++step;
      const auto first = static_cast<std::uint64_t>(step - 1) * config_.batch_size;
      std::vector<ComposedSequence<Real>> items;
      for (std::size_t b = 0; b < config_.batch_size; ++b) {
        const std::uint64_t global = first + b;
        const auto& u = train[sampler.index_at(global)];
        items.push_back(model_.compose_utterance(tok_, u.features, prompts_.sample_at(global), u.transcript,
                                                 ComposeMode::kTrain));
      }
      const auto batch = pack(items);
      const auto logits = model_.lm.forward_packed(batch.embeddings, batch.lengths);
      const auto ce = softmax_cross_entropy(logits, batch.targets, Tokenizer::kIgnore);
      const double loss = static_cast<double>(ce.loss.item());
      if (!std::isfinite(loss)) {
        throw NumericError("projector training loss is " + std::to_string(loss) + " at step " + std::to_string(step));
      }
      const auto acc = masked_token_accuracy(logits, batch.targets, Tokenizer::kIgnore);
      opt.zero_grad();
      backward(ce.loss);
      const double lr = lr_at(step, config_.warmup, config_.lr_max);
      opt.step(lr);
      result.log.train.push_back({step, loss, acc.accuracy, lr, elapsed_ms()});
      if (on_step_) on_step_(result.log.train.back());
      if (static_cast<std::size_t>(step) % config_.val_every == 0) {
        keep_going = validate();
        result.early_stopped = !keep_going;
      }
    }
    result.steps_run = step;
    save_state();
    return result;
  }

 private:
  static ParameterList<Real> prefixed(const std::string& prefix, const ParameterList<Real>& list) {
    ParameterList<Real> out;
    for (const auto& p : list) out.push_back({prefix + p.name, p.tensor});
    return out;
  }
  static void append(ParameterList<Real>& dst, const ParameterList<Real>& src) {
    dst.insert(dst.end(), src.begin(), src.end());
  }

  Checkpoint model_checkpoint() const {
    Checkpoint c;
    c.add("", params_);
    return c;
  }

  CheckpointMetadata base_metadata(std::int64_t step) const {
    CheckpointMetadata m;
    m.step = step;
    m.config_hash = hash_;
    m.seed = config_.seed;
    m.extra["kind"] = "projector";
    m.extra["k"] = config_.k;
    m.extra["projector"] = {{"input_dim", model_.projector.shape().input_dim},
                            {"hidden_dim", model_.projector.shape().hidden_dim},
                            {"output_dim", model_.projector.shape().output_dim}};
    m.extra["encoder_finetuned"] = !config_.freeze_encoder;
    m.extra["lm_finetuned"] = !config_.freeze_lm;
    m.extra["prompt_mode"] = config_.prompt.name();
    return m;
  }

  SpeechLlm<Real>& model_;
  const Tokenizer& tok_;
  ProjectorTrainConfig config_;
  std::string hash_;
  PromptLibrary prompts_;
  ParameterList<Real> params_;
  StepCallback on_step_;
};

/// Restores a best/state checkpoint's trainable tensors into `model`.
template <std::floating_point Real>
void load_trained(SpeechLlm<Real>& model, const Checkpoint& c) {
  model.projector.load(c);
  if (c.find("enc.w")) model.encoder.load(c);
  if (c.find("lm.tok_emb")) model.lm.load(c);
}

}  // namespace sla
