#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "sla/core/error.hpp"
#include "sla/core/hash.hpp"
#include "sla/decode/beam_search.hpp"
#include "sla/nn/lm_training.hpp"
#include "sla/nn/speech_encoder.hpp"
#include "sla/train/trainer.hpp"

namespace sla {

/// File locations for one run. Relative paths resolve against the directory
/// of the config file.
struct RunPaths {
  std::string data_dir = "data";
  std::string out_dir = "runs/default";
  std::string base_lm = "lm/base.slmc";
  std::string chat_lm = "lm/chat.slmc";
  std::string lm;       // LM the projector is trained against; defaults to chat_lm
  std::string encoder;  // frozen encoder checkpoint; created in out_dir when empty
};

struct DecodeSettings {
  std::size_t beam = 4;
  std::size_t max_new = 64;
};

/// One JSON document describing a whole run. Every section is optional and
/// falls back to its defaults; unknown keys anywhere are rejected.
struct RunConfig {
  std::uint64_t seed = 1;
  RunPaths paths;
  EncoderConfig encoder;
  LmConfig lm;  // vocab_size 0 means "size of the dataset vocabulary"
  LmTrainConfig pretrain;
  LmTrainConfig instruct;
  ProjectorTrainConfig train;
  DecodeSettings decode;
  std::filesystem::path base_dir;

  std::filesystem::path resolve(const std::string& p) const {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  }
  std::filesystem::path data_dir() const { return resolve(paths.data_dir); }
  std::filesystem::path out_dir() const { return resolve(paths.out_dir); }
  std::filesystem::path projector_lm() const { return resolve(paths.lm.empty() ? paths.chat_lm : paths.lm); }

  /// Hash of everything except paths.out_dir, so a run can be repeated elsewhere.
  std::string hash() const;
  nlohmann::json to_json() const;
};

namespace detail {

inline void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

// Field-level wrapper: type errors from the JSON library name the offending field.
template <class T>
T field(const nlohmann::json& j, const std::string& key, const T& fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

template <class T>
T section(const nlohmann::json& j, const std::string& key, const T& fallback, const std::string& where) {
  T out = fallback;
  if (!j.contains(key)) return out;
  try {
    j.at(key).get_to(out);
    return out;
  } catch (const ConfigError& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

inline PromptMode prompt_from_json(const nlohmann::json& j) {
  reject_unknown(j, {"mode", "text", "library_path"}, "train.prompt");
  PromptMode p;
  const auto mode = field<std::string>(j, "mode", "fixed", "train.prompt");
  if (mode == "none") {
    p.kind = PromptModeKind::kNone;
  } else if (mode == "fixed") {
    p.kind = PromptModeKind::kFixed;
  } else if (mode == "library") {
    p.kind = PromptModeKind::kLibrary;
  } else {
    throw ConfigError("train.prompt.mode must be none, fixed or library, got '" + mode + "'");
  }
  p.text = field<std::string>(j, "text", kDefaultPrompt, "train.prompt");
  p.library_path = field<std::string>(j, "library_path", "", "train.prompt");
  return p;
}

inline nlohmann::json prompt_to_json(const PromptMode& p) {
  nlohmann::json j{{"mode", p.name()}};
  if (p.kind == PromptModeKind::kFixed) j["text"] = p.text;
  if (p.kind == PromptModeKind::kLibrary && !p.library_path.empty()) j["library_path"] = p.library_path;
  return j;
}

inline ProjectorTrainConfig train_from_json(const nlohmann::json& j) {
  const std::string w = "train";
  reject_unknown(j, {"k", "d_hidden", "lr_max", "weight_decay", "warmup", "max_steps", "batch_size", "val_every",
                     "patience", "freeze_encoder", "freeze_lm", "prompt"},
                 w);
  ProjectorTrainConfig c;
  c.k = field(j, "k", c.k, w);
  c.d_hidden = field(j, "d_hidden", c.d_hidden, w);
  c.lr_max = field(j, "lr_max", c.lr_max, w);
  c.weight_decay = field(j, "weight_decay", c.weight_decay, w);
  c.warmup = field(j, "warmup", c.warmup, w);
  c.max_steps = field(j, "max_steps", c.max_steps, w);
  c.batch_size = field(j, "batch_size", c.batch_size, w);
  c.val_every = field(j, "val_every", c.val_every, w);
  c.patience = field(j, "patience", c.patience, w);
  c.freeze_encoder = field(j, "freeze_encoder", c.freeze_encoder, w);
  c.freeze_lm = field(j, "freeze_lm", c.freeze_lm, w);
  if (j.contains("prompt")) c.prompt = prompt_from_json(j.at("prompt"));
  if (c.k == 0) throw ConfigError("train.k must be at least 1");
  if (c.d_hidden == 0) throw ConfigError("train.d_hidden must be positive");
  if (c.lr_max < 0) throw ConfigError("train.lr_max must be non-negative");
  if (c.batch_size == 0) throw ConfigError("train.batch_size must be positive");
  if (c.val_every == 0) throw ConfigError("train.val_every must be positive");
  if (c.patience == 0) throw ConfigError("train.patience must be positive");
  return c;
}

inline nlohmann::json train_to_json(const ProjectorTrainConfig& c) {
  return {{"k", c.k},
          {"d_hidden", c.d_hidden},
          {"lr_max", c.lr_max},
          {"weight_decay", c.weight_decay},
          {"warmup", c.warmup},
          {"max_steps", c.max_steps},
          {"batch_size", c.batch_size},
          {"val_every", c.val_every},
          {"patience", c.patience},
          {"freeze_encoder", c.freeze_encoder},
          {"freeze_lm", c.freeze_lm},
          {"prompt", prompt_to_json(c.prompt)}};
}

}  // namespace detail

inline nlohmann::json RunConfig::to_json() const {
  nlohmann::json j{{"seed", seed},
                   {"paths",
                    {{"data_dir", paths.data_dir},
                     {"out_dir", paths.out_dir},
                     {"base_lm", paths.base_lm},
                     {"chat_lm", paths.chat_lm},
                     {"lm", paths.lm},
                     {"encoder", paths.encoder}}},
                   {"encoder", encoder},
                   {"lm", lm},
                   {"pretrain", pretrain},
                   {"instruct", instruct},
                   {"train", detail::train_to_json(train)},
                   {"decode", {{"beam", decode.beam}, {"max_new", decode.max_new}}}};
  return j;
}

inline std::string RunConfig::hash() const {
  auto j = to_json();
  j["paths"].erase("out_dir");
  return hash_hex(j.dump());
}

/// Parses and validates a run config. `base_dir` anchors relative paths.
inline RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = ".") {
  detail::reject_unknown(j, {"seed", "paths", "encoder", "lm", "pretrain", "instruct", "train", "decode"}, "config");
  RunConfig c;
  c.base_dir = base_dir;
  c.seed = detail::field(j, "seed", c.seed, "config");
  if (j.contains("paths")) {
    const auto& p = j.at("paths");
    detail::reject_unknown(p, {"data_dir", "out_dir", "base_lm", "chat_lm", "lm", "encoder"}, "paths");
    c.paths.data_dir = detail::field(p, "data_dir", c.paths.data_dir, "paths");
    c.paths.out_dir = detail::field(p, "out_dir", c.paths.out_dir, "paths");
    c.paths.base_lm = detail::field(p, "base_lm", c.paths.base_lm, "paths");
    c.paths.chat_lm = detail::field(p, "chat_lm", c.paths.chat_lm, "paths");
    c.paths.lm = detail::field(p, "lm", c.paths.lm, "paths");
    c.paths.encoder = detail::field(p, "encoder", c.paths.encoder, "paths");
  }
  c.lm.vocab_size = 0;
  c.encoder = detail::section(j, "encoder", c.encoder, "config");
  c.lm = detail::section(j, "lm", c.lm, "config");
  c.pretrain = detail::section(j, "pretrain", c.pretrain, "config");
  c.instruct = detail::section(j, "instruct", c.instruct, "config");
  if (j.contains("train")) c.train = detail::train_from_json(j.at("train"));
  if (j.contains("decode")) {
    const auto& d = j.at("decode");
    detail::reject_unknown(d, {"beam", "max_new"}, "decode");
    c.decode.beam = detail::field(d, "beam", c.decode.beam, "decode");
    c.decode.max_new = detail::field(d, "max_new", c.decode.max_new, "decode");
    if (c.decode.beam == 0) throw ConfigError("decode.beam must be at least 1");
    if (c.decode.max_new == 0) throw ConfigError("decode.max_new must be at least 1");
  }
  c.train.seed = c.seed;
  c.encoder.validate();
  if (c.lm.vocab_size != 0) c.lm.validate();
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return run_config_from_json(j, std::filesystem::path(path).parent_path());
}

}  // namespace sla
