#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sla/data/tokenizer.hpp"
#include "sla/nn/causal_lm.hpp"
#include "sla/train/adamw.hpp"
#include "sla/train/metrics.hpp"
#include "sla/train/sampler.hpp"
#include "sla/train/schedule.hpp"

namespace sla {

/// One training sequence: inputs and per-position next-token targets
/// (Tokenizer::kIgnore where no loss applies).
struct LmExample {
  std::vector<TokenId> tokens;
  std::vector<TokenId> targets;
};

/// Plain language-modeling example: every word predicts its successor, the
/// last word predicts EOS.
inline LmExample lm_example(const std::vector<TokenId>& words) {
  if (words.empty()) throw ContractError("empty sentence in LM corpus");
  LmExample e{words, {}};
  for (std::size_t i = 0; i + 1 < words.size(); ++i) e.targets.push_back(words[i + 1]);
  e.targets.push_back(Tokenizer::kEos);
  return e;
}

/// "user: ... assistant: answer": only the assistant tag and the answer
/// positions are supervised, ending with EOS.
inline LmExample instruction_example(const std::vector<TokenId>& tokens, TokenId user_id, TokenId assistant_id) {
  if (tokens.empty() || tokens.front() != user_id) {
    throw ContractError("instruction example does not start with the user marker");
  }
  const auto tag = std::find(tokens.begin(), tokens.end(), assistant_id);
  if (tag == tokens.end()) throw ContractError("instruction example lacks the assistant marker");
  const auto tag_pos = static_cast<std::size_t>(tag - tokens.begin());
  if (tag_pos + 1 == tokens.size()) throw ContractError("instruction example has an empty answer");
  LmExample e{tokens, std::vector<TokenId>(tokens.size(), Tokenizer::kIgnore)};
  for (std::size_t i = tag_pos; i + 1 < tokens.size(); ++i) e.targets[i] = tokens[i + 1];
  e.targets.back() = Tokenizer::kEos;
  return e;
}

struct LmTrainConfig {
  std::size_t steps = 3000;
  std::size_t batch_size = 32;
  double lr = 1e-3;
  std::int64_t warmup = 100;
  double weight_decay = 0.0;
  std::uint64_t seed = 1;
  std::size_t log_every = 100;
  double accuracy_floor = 0.0;
};

inline void to_json(nlohmann::json& j, const LmTrainConfig& c) {
  j = {{"steps", c.steps},   {"batch_size", c.batch_size},     {"lr", c.lr},
       {"warmup", c.warmup}, {"weight_decay", c.weight_decay}, {"seed", c.seed},
       {"log_every", c.log_every}, {"accuracy_floor", c.accuracy_floor}};
}

inline void from_json(const nlohmann::json& j, LmTrainConfig& c) {
  static const std::set<std::string> known{"steps", "batch_size", "lr",        "warmup",
                                           "weight_decay", "seed", "log_every", "accuracy_floor"};
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw ConfigError("lm training: unknown key '" + key + "'");
  }
  c.steps = j.value("steps", c.steps);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr = j.value("lr", c.lr);
  c.warmup = j.value("warmup", c.warmup);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.seed = j.value("seed", c.seed);
  c.log_every = j.value("log_every", c.log_every);
  c.accuracy_floor = j.value("accuracy_floor", c.accuracy_floor);
  if (c.batch_size == 0) throw ConfigError("lm training: batch_size must be positive");
  if (c.lr < 0) throw ConfigError("lm training: lr must be non-negative");
}

struct LmTrainReport {
  std::vector<std::pair<std::size_t, double>> losses;  // (step, loss) every log_every steps
  double heldout_accuracy = 0.0;
  std::size_t steps_run = 0;
};

/// Stacks examples into one packed batch.
template <std::floating_point Real>
Tensor<Real> packed_logits(const CausalLm<Real>& lm, const std::vector<const LmExample*>& batch,
                           std::vector<TokenId>& targets) {
  std::vector<TokenId> tokens;
  std::vector<std::size_t> lengths;
  targets.clear();
  for (const auto* e : batch) {
    tokens.insert(tokens.end(), e->tokens.begin(), e->tokens.end());
    targets.insert(targets.end(), e->targets.begin(), e->targets.end());
    lengths.push_back(e->tokens.size());
  }
  return lm.forward_packed(lm.embed_tokens(tokens), lengths);
}

/// Next-token accuracy over the supervised positions of `examples`.
template <std::floating_point Real>
TokenAccuracy next_token_accuracy(const CausalLm<Real>& lm, const std::vector<LmExample>& examples,
                                  std::size_t batch_size = 64) {
  NoGradGuard no_grad;
  TokenAccuracy total;
  std::vector<TokenId> targets;
  for (std::size_t start = 0; start < examples.size(); start += batch_size) {
    std::vector<const LmExample*> batch;
    for (std::size_t i = start; i < std::min(examples.size(), start + batch_size); ++i) batch.push_back(&examples[i]);
    const auto logits = packed_logits(lm, batch, targets);
    const auto acc = masked_token_accuracy(logits, targets, Tokenizer::kIgnore);
    total.correct += acc.correct;
    total.supervised += acc.supervised;
  }
  total.empty = total.supervised == 0;
  total.accuracy = total.empty ? 0.0 : static_cast<double>(total.correct) / static_cast<double>(total.supervised);
  return total;
}

/// Trains every LM parameter on `examples` with AdamW and linear warmup, then
/// freezes the model again. Aborts with NumericError on a non-finite loss.
template <std::floating_point Real>
LmTrainReport train_lm(CausalLm<Real>& lm, const std::vector<LmExample>& examples,
                       const std::vector<LmExample>& heldout, const LmTrainConfig& config,
                       const std::function<void(std::size_t, double)>& on_log = {}) {
  if (examples.empty()) throw ContractError("LM training corpus is empty");
  LmTrainReport report;
  lm.set_trainable(true);
  AdamW<Real> opt(lm.parameters(), {0.9, 0.999, 1e-8, config.weight_decay});
  EpochSampler sampler(examples.size(), config.seed);
  std::vector<TokenId> targets;
  std::vector<double> recent;
  for (std::size_t step = 1; step <= config.steps; ++step) {
    std::vector<const LmExample*> batch;
    for (auto i : sampler.batch((step - 1) * config.batch_size, config.batch_size)) batch.push_back(&examples[i]);
    const auto logits = packed_logits(lm, batch, targets);
    const auto ce = softmax_cross_entropy(logits, targets, Tokenizer::kIgnore);
    const double loss = static_cast<double>(ce.loss.item());
    recent.push_back(loss);
    if (recent.size() > 5) recent.erase(recent.begin());
    if (!std::isfinite(loss)) {
      std::string last;
      for (double r : recent) last += " " + std::to_string(r);
      lm.set_trainable(false);
      throw NumericError("LM training diverged at step " + std::to_string(step) + "; recent losses:" + last);
    }
    opt.zero_grad();
    backward(ce.loss);
    opt.step(lr_at(static_cast<std::int64_t>(step), config.warmup, config.lr));
    if (config.log_every && (step % config.log_every == 0 || step == config.steps)) {
      report.losses.emplace_back(step, loss);
      if (on_log) on_log(step, loss);
    }
    report.steps_run = step;
  }
  lm.set_trainable(false);
  if (!heldout.empty()) report.heldout_accuracy = next_token_accuracy(lm, heldout).accuracy;
  return report;
}

/// Fresh LM trained on plain sentences. Fails when held-out accuracy ends
/// below config.accuracy_floor.
template <std::floating_point Real = double>
CausalLm<Real> pretrain_lm(const LmConfig& lm_config, std::uint64_t init_seed,
                           const std::vector<std::vector<TokenId>>& corpus,
                           const std::vector<std::vector<TokenId>>& heldout, const LmTrainConfig& config,
                           LmTrainReport* report = nullptr,
                           const std::function<void(std::size_t, double)>& on_log = {}) {
  if (corpus.empty()) throw ContractError("pretraining corpus is empty");
  std::vector<LmExample> train, held;
  for (const auto& s : corpus) train.push_back(lm_example(s));
  for (const auto& s : heldout) held.push_back(lm_example(s));
  CausalLm<Real> lm(lm_config, init_seed);
  auto r = train_lm(lm, train, held, config, on_log);
  if (!held.empty() && r.heldout_accuracy < config.accuracy_floor) {
    throw NumericError("pretrained LM held-out accuracy " + std::to_string(r.heldout_accuracy) +
                       " is below the floor " + std::to_string(config.accuracy_floor));
  }
  if (report) *report = std::move(r);
  return lm;
}

/// Continued training of a copy of `base` on "user: ... assistant: ..."
/// sequences. The base model is left untouched; zero steps return an exact copy.
template <std::floating_point Real = double>
CausalLm<Real> instruction_tune(const CausalLm<Real>& base, const std::vector<std::vector<TokenId>>& corpus,
                                const std::vector<std::vector<TokenId>>& heldout, TokenId user_id,
                                TokenId assistant_id, const LmTrainConfig& config, LmTrainReport* report = nullptr,
                                const std::function<void(std::size_t, double)>& on_log = {}) {
  if (corpus.empty()) throw ContractError("instruction corpus is empty");
  std::vector<LmExample> train, held;
  for (const auto& s : corpus) train.push_back(instruction_example(s, user_id, assistant_id));
  for (const auto& s : heldout) held.push_back(instruction_example(s, user_id, assistant_id));
  auto chat = base.clone();
  if (config.steps == 0) return chat;
  auto r = train_lm(chat, train, held, config, on_log);
  if (report) *report = std::move(r);
  return chat;
}

}  // namespace sla
