#pragma once

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sla/cli/run_config.hpp"
#include "sla/core/threads.hpp"
#include "sla/data/manifest.hpp"
#include "sla/data/synthetic.hpp"
#include "sla/decode/beam_search.hpp"
#include "sla/decode/perplexity.hpp"
#include "sla/decode/score_report.hpp"
#include "sla/nn/lm_training.hpp"
#include "sla/train/trainer.hpp"

namespace sla {

inline constexpr const char* kEncoderCheckpoint = "encoder.slmc";
inline constexpr const char* kResolvedConfig = "config.json";
inline constexpr const char* kTrainSummary = "train_summary.json";
// Prompt draws at decode time use their own key range, apart from training and validation.
inline constexpr std::uint64_t kDecodePromptKey = std::uint64_t{2} << 48;

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what(), 0);
  }
}

inline std::vector<std::vector<TokenId>> read_token_lines(const Tokenizer& tok, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open corpus " + path.string());
  std::vector<std::vector<TokenId>> out;
  for (std::string line; std::getline(in, line);) {
    if (!split_words(line).empty()) out.push_back(tok.encode(line));
  }
  return out;
}

inline Tokenizer load_vocabulary(const RunConfig& cfg) { return Tokenizer::load((cfg.data_dir() / "vocab.txt").string()); }

/// The LM config with vocab_size filled in from the dataset; a stated size must agree.
inline LmConfig resolved_lm_config(const RunConfig& cfg, const Tokenizer& tok) {
  auto c = cfg.lm;
  if (c.vocab_size == 0) c.vocab_size = tok.size();
  if (c.vocab_size != tok.size()) {
    throw ConfigError("lm.vocab_size is " + std::to_string(c.vocab_size) + " but the dataset vocabulary has " +
                      std::to_string(tok.size()) + " entries");
  }
  c.validate();
  return c;
}

inline std::vector<Utterance<double>> load_split(const RunConfig& cfg, const std::string& split) {
  const auto path = cfg.data_dir() / (split + ".jsonl");
  const auto m = read_manifest(path.string());
  std::vector<Utterance<double>> out;
  out.reserve(m.records.size());
  for (const auto& r : m.records) out.push_back({r.id, m.load_features(r).to_tensor<double>(), r.transcript});
  return out;
}

/// Frozen encoder for a run: an explicit checkpoint, else the one in out_dir,
/// else a fresh one from the config (saved to out_dir when `create`).
inline SpeechEncoder<double> run_encoder(const RunConfig& cfg, bool create) {
  if (!cfg.paths.encoder.empty()) return load_encoder<double>(cfg.resolve(cfg.paths.encoder).string());
  const auto path = cfg.out_dir() / kEncoderCheckpoint;
  if (std::filesystem::exists(path)) {
    auto enc = load_encoder<double>(path.string());
    if (nlohmann::json(enc.config()) != nlohmann::json(cfg.encoder)) {
      throw ConfigError(path.string() + " was built with a different encoder config");
    }
    return enc;
  }
  SpeechEncoder<double> enc(cfg.encoder, mix_seed(cfg.seed, 0x656e63ULL));
  if (create) {
    std::filesystem::create_directories(cfg.out_dir());
    CheckpointMetadata meta;
    meta.config_hash = cfg.hash();
    meta.seed = cfg.seed;
    save_encoder(path.string(), enc, meta);
  }
  return enc;
}

/// Encoder, downsampler, fresh projector and the projector-side LM, all per config.
inline SpeechLlm<double> build_model(const RunConfig& cfg, const Tokenizer& tok, bool create_encoder) {
  auto enc = run_encoder(cfg, create_encoder);
  auto lm = load_lm<double>(cfg.projector_lm().string());
  if (lm.config().vocab_size != tok.size()) {
    throw ConfigError(cfg.projector_lm().string() + " has vocabulary " + std::to_string(lm.config().vocab_size) +
                      ", dataset has " + std::to_string(tok.size()));
  }
  const ProjectorShape shape{enc.config().output_dim * cfg.train.k, cfg.train.d_hidden, lm.config().model_dim};
  return {std::move(enc), cfg.train.k, Projector<double>(shape, mix_seed(cfg.seed, 0x70726fULL)), std::move(lm)};
}

/// Model with the best trained checkpoint of the run loaded.
inline SpeechLlm<double> trained_model(const RunConfig& cfg, const Tokenizer& tok) {
  const auto best = cfg.out_dir() / kBestCheckpoint;
  if (!std::filesystem::exists(best)) throw std::runtime_error("no trained projector at " + best.string());
  const auto meta = read_checkpoint_metadata(best.string());
  if (meta.config_hash != cfg.hash()) {
    throw ConfigError(best.string() + " was written by config " + meta.config_hash + ", current config is " +
                      cfg.hash());
  }
  auto model = build_model(cfg, tok, false);
  load_trained(model, read_checkpoint(best.string()));
  return model;
}

// ---- gen-data -------------------------------------------------------------

inline int cmd_gen_data(const std::string& spec_path, const std::string& out_dir, std::ostream& log) {
  DatasetSpec spec;
  if (!spec_path.empty()) {
    const auto j = read_json(spec_path);
    try {
      spec = dataset_spec_from_json(j);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(spec_path + ": " + e.what());
    }
  }
  const auto ds = gen_dataset(spec, out_dir);
  log << "wrote " << ds.train.size() << "/" << ds.val.size() << "/" << ds.test.size()
      << " train/val/test utterances to " << out_dir << "\n";
  return 0;
}

// ---- LM preparation ---------------------------------------------------------

inline std::function<void(std::size_t, double)> lm_progress(std::ostream& log, const std::string& what) {
  return [&log, what](std::size_t step, double loss) { log << what << " step " << step << " loss " << loss << "\n"; };
}

inline nlohmann::json lm_report_json(const LmTrainReport& r, const std::string& hash) {
  return {{"config_hash", hash},
          {"steps_run", r.steps_run},
          {"final_loss", r.losses.empty() ? 0.0 : r.losses.back().second},
          {"heldout_accuracy", r.heldout_accuracy}};
}

inline int cmd_pretrain_lm(const RunConfig& cfg, std::ostream& log) {
  const auto tok = load_vocabulary(cfg);
  const auto lm_cfg = resolved_lm_config(cfg, tok);
  auto tc = cfg.pretrain;
  LmTrainReport report;
  const auto lm = pretrain_lm<double>(lm_cfg, cfg.seed, read_token_lines(tok, cfg.data_dir() / "lm_train.txt"),
                                      read_token_lines(tok, cfg.data_dir() / "lm_heldout.txt"), tc, &report,
                                      lm_progress(log, "pretrain"));
  auto meta = lm_metadata(lm_cfg, "base");
  meta.config_hash = cfg.hash();
  meta.seed = cfg.seed;
  meta.step = static_cast<std::int64_t>(tc.steps);
  meta.extra["report"] = lm_report_json(report, cfg.hash());
  const auto path = cfg.resolve(cfg.paths.base_lm);
  std::filesystem::create_directories(path.parent_path());
  save_lm(path.string(), lm, meta);
  log << "base LM held-out accuracy " << report.heldout_accuracy << " -> " << path.string() << "\n";
  return 0;
}

inline int cmd_instruction_tune(const RunConfig& cfg, std::ostream& log) {
  const auto tok = load_vocabulary(cfg);
  const auto base = load_lm<double>(cfg.resolve(cfg.paths.base_lm).string());
  if (base.config().vocab_size != tok.size()) throw ConfigError("base LM vocabulary does not match the dataset");
  auto tc = cfg.instruct;
  LmTrainReport report;
  const auto chat = instruction_tune(base, read_token_lines(tok, cfg.data_dir() / "instruct_train.txt"),
                                     read_token_lines(tok, cfg.data_dir() / "instruct_heldout.txt"),
                                     tok.encode(kUserTag).front(), tok.encode(kAssistantTag).front(), tc, &report,
                                     lm_progress(log, "instruct"));
  auto meta = lm_metadata(base.config(), "chat");
  meta.config_hash = cfg.hash();
  meta.seed = cfg.seed;
  meta.step = static_cast<std::int64_t>(tc.steps);
  meta.extra["report"] = lm_report_json(report, cfg.hash());
  const auto path = cfg.resolve(cfg.paths.chat_lm);
  std::filesystem::create_directories(path.parent_path());
  save_lm(path.string(), chat, meta);
  log << "chat LM held-out assistant accuracy " << report.heldout_accuracy << " -> " << path.string() << "\n";
  return 0;
}

// ---- train-projector ----------------------------------------------------------

/// Projector training for `model` with the run's settings and artifact layout.
/// `on_step` sees every training record after the progress log.
inline TrainResult train_projector(const RunConfig& cfg, SpeechLlm<double>& model, const Tokenizer& tok,
                                   const std::vector<Utterance<double>>& train,
                                   const std::vector<Utterance<double>>& val,
                                   const std::optional<std::string>& resume, std::ostream& log,
                                   const std::function<void(const TrainRecord&)>& on_step = {}) {
  const auto out = cfg.out_dir();
  std::filesystem::create_directories(out);
  auto resolved = cfg.to_json();
  resolved["config_hash"] = cfg.hash();
  write_json(out / kResolvedConfig, resolved);

  auto tc = cfg.train;
  if (tc.prompt.kind == PromptModeKind::kLibrary && !tc.prompt.library_path.empty()) {
    tc.prompt.library_path = cfg.resolve(tc.prompt.library_path).string();
  }
  ProjectorTrainer<double> trainer(model, tok, tc, cfg.hash());
  const auto every = std::max<std::size_t>(1, cfg.train.val_every / 4);
  trainer.on_step([&](const TrainRecord& r) {
    if (static_cast<std::size_t>(r.step) % every == 0) {
      log << "step " << r.step << " loss " << r.loss << " acc " << r.accuracy << " lr " << r.lr << "\n";
    }
    if (on_step) on_step(r);
  });
  auto result = trainer.run(train, val, out, resume);
  write_json(out / kTrainSummary, {{"config_hash", cfg.hash()},
                                   {"steps_run", result.steps_run},
                                   {"best_step", result.best_step},
                                   {"best_val_loss", result.best_val_loss},
                                   {"early_stopped", result.early_stopped},
                                   {"best_checkpoint", result.best_checkpoint}});
  log << "trained " << result.steps_run << " steps, best step " << result.best_step << " val loss "
      << result.best_val_loss << "\n";
  return result;
}

inline TrainResult train_projector(const RunConfig& cfg, const std::optional<std::string>& resume, std::ostream& log) {
  const auto tok = load_vocabulary(cfg);
  auto model = build_model(cfg, tok, true);
  return train_projector(cfg, model, tok, load_split(cfg, "train"), load_split(cfg, "val"), resume, log);
}

inline int cmd_train_projector(const RunConfig& cfg, const std::optional<std::string>& resume, std::ostream& log) {
  train_projector(cfg, resume, log);
  return 0;
}

// ---- decode / score / ppl -------------------------------------------------------

inline PromptLibrary decode_prompts(const RunConfig& cfg) {
  auto p = cfg.train.prompt;
  if (p.kind == PromptModeKind::kLibrary && !p.library_path.empty()) p.library_path = cfg.resolve(p.library_path).string();
  return p.library(cfg.seed);
}

inline std::vector<HypothesisRecord> decode_utterances(const SpeechLlm<double>& model, const Tokenizer& tok,
                                                       const std::vector<Utterance<double>>& utts,
                                                       const PromptLibrary& prompts, const DecodeSettings& settings) {
  std::vector<HypothesisRecord> out(utts.size());
  parallel_for(utts.size(), worker_threads(), [&](std::size_t i) {
    const auto seq = model.compose_utterance(tok, utts[i].features, prompts.sample_at(kDecodePromptKey + i),
                                             std::nullopt, ComposeMode::kInfer);
    const auto h = decode_composed(model.lm, seq, BeamConfig{settings.beam, settings.max_new, Tokenizer::kEos});
    std::vector<TokenId> words = h.tokens;
    if (!words.empty() && words.back() == Tokenizer::kEos) words.pop_back();
    out[i] = {utts[i].id, tok.decode(words), h.log_prob, h.truncated};
  });
  return out;
}

inline std::filesystem::path default_hyps_path(const RunConfig& cfg, const std::string& split) {
  return cfg.out_dir() / ("hyps_" + split + ".json");
}

inline int cmd_decode(const RunConfig& cfg, const std::string& split, const std::string& out_path, std::ostream& log) {
  const auto tok = load_vocabulary(cfg);
  const auto model = trained_model(cfg, tok);
  const auto utts = load_split(cfg, split);
  const auto hyps = decode_utterances(model, tok, utts, decode_prompts(cfg), cfg.decode);
  const auto path = out_path.empty() ? default_hyps_path(cfg, split) : std::filesystem::path(out_path);
  write_json(path, hypotheses_to_json(hyps, cfg.hash()));
  log << "decoded " << hyps.size() << " utterances -> " << path.string() << "\n";
  return 0;
}

inline ScoreReport score_files(const std::string& refs, const std::string& hyps, std::string* hash = nullptr) {
  const auto manifest = read_manifest(refs, false);
  if (hash) *hash = read_json(hyps).value("config_hash", "");
  return score(manifest.records, read_hypotheses(hyps));
}

inline int cmd_score(const std::string& refs, const std::string& hyps, const std::string& out_path,
                     const std::string& alignment_path, std::ostream& log) {
  std::string hash;
  const auto report = score_files(refs, hyps, &hash);
  if (!out_path.empty()) write_json(out_path, report.to_json(hash));
  if (!alignment_path.empty()) {
    std::ofstream out(alignment_path);
    if (!out) throw std::runtime_error("cannot write " + alignment_path);
    out << report.alignment_dump();
  }
  log << "corpus WER " << report.corpus_wer() << " (S " << report.totals.substitutions << " I "
      << report.totals.insertions << " D " << report.totals.deletions << " over " << report.totals.ref_words
      << " words)\n";
  return 0;
}

struct PplReport {
  double speech_ppl = 0;  // transcript given speech, through the trained pipeline
  double text_ppl = 0;    // transcript alone under the projector-side LM
  std::size_t words = 0;
};

inline PplReport split_perplexity(const SpeechLlm<double>& model, const Tokenizer& tok,
                                  const std::vector<Utterance<double>>& utts, const PromptLibrary& prompts) {
  std::vector<NllSum> speech(utts.size()), text(utts.size());
  std::vector<std::size_t> words(utts.size());
  parallel_for(utts.size(), worker_threads(), [&](std::size_t i) {
    const auto seq = model.compose_utterance(tok, utts[i].features, prompts.sample_at(kDecodePromptKey + i),
                                             utts[i].transcript, ComposeMode::kTrain);
    speech[i] = composed_nll(model.lm, seq);
    const auto ids = tok.encode(utts[i].transcript);
    text[i] = sentence_nll(model.lm, ids, Tokenizer::kEos);
    words[i] = ids.size();
  });
  NllSum s, t;
  PplReport r;
  for (std::size_t i = 0; i < utts.size(); ++i) {
    s += speech[i];
    t += text[i];
    r.words += words[i];
  }
  r.speech_ppl = word_ppl(s, r.words);
  r.text_ppl = word_ppl(t, r.words);
  return r;
}

inline int cmd_ppl(const RunConfig& cfg, const std::string& split, const std::string& out_path, std::ostream& log) {
  const auto tok = load_vocabulary(cfg);
  const auto model = trained_model(cfg, tok);
  const auto r = split_perplexity(model, tok, load_split(cfg, split), decode_prompts(cfg));
  const nlohmann::json j{{"config_hash", cfg.hash()},
                         {"split", split},
                         {"words", r.words},
                         {"speech_conditioned_ppl", r.speech_ppl},
                         {"text_only_ppl", r.text_ppl}};
  write_json(out_path.empty() ? cfg.out_dir() / ("ppl_" + split + ".json") : std::filesystem::path(out_path), j);
  log << "word-level PPL on " << split << ": speech-conditioned " << r.speech_ppl << ", text-only " << r.text_ppl
      << " over " << r.words << " words\n";
  return 0;
}

// ---- sweep --------------------------------------------------------------------

/// A named JSON merge-patch applied to the base config.
struct SweepVariant {
  std::string name;
  nlohmann::json patch;
};

struct SweepGrid {
  std::filesystem::path base_config;
  std::filesystem::path out_dir;
  std::string split = "test";
  std::size_t jobs = 1;
  std::vector<SweepVariant> encoders, lms, prompts;
};

inline SweepGrid sweep_grid_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  detail::reject_unknown(j, {"config", "out_dir", "split", "jobs", "encoders", "lms", "prompts"}, "grid");
  SweepGrid g;
  const auto path = [&](const std::string& key) {
    if (!j.contains(key)) throw ConfigError("grid." + key + " is required");
    std::filesystem::path p(detail::field<std::string>(j, key, "", "grid"));
    return p.is_absolute() ? p : base_dir / p;
  };
  g.base_config = path("config");
  g.out_dir = path("out_dir");
  g.split = detail::field(j, "split", g.split, "grid");
  g.jobs = detail::field(j, "jobs", g.jobs, "grid");
  if (g.jobs == 0) throw ConfigError("grid.jobs must be at least 1");
  const auto axis = [&](const std::string& key) {
    std::vector<SweepVariant> out;
    if (!j.contains(key)) return std::vector<SweepVariant>{{"default", nlohmann::json::object()}};
    if (!j.at(key).is_array() || j.at(key).empty()) throw ConfigError("grid." + key + " must be a non-empty array");
    for (const auto& v : j.at(key)) {
      const auto where = "grid." + key;
      detail::reject_unknown(v, {"name", "set"}, where);
      auto name = detail::field<std::string>(v, "name", "", where);
      if (name.empty() || name.find_first_of("/,\\ ") != std::string::npos) {
        throw ConfigError(where + ": variant names must be non-empty and free of '/', ',' and spaces");
      }
      out.push_back({std::move(name), v.value("set", nlohmann::json::object())});
    }
    return out;
  };
  g.encoders = axis("encoders");
  g.lms = axis("lms");
  g.prompts = axis("prompts");
  return g;
}

struct SweepRow {
  std::string encoder, lm, prompt, config_hash;
  std::int64_t steps_run = 0, best_step = 0;
  double best_val_loss = 0, wer = 0;
  bool ok = false;
  std::string error;
};

inline nlohmann::json to_json(const SweepRow& r) {
  return {{"encoder", r.encoder},     {"lm", r.lm},         {"prompt", r.prompt},
          {"config_hash", r.config_hash}, {"steps_run", r.steps_run}, {"best_step", r.best_step},
          {"best_val_loss", r.best_val_loss}, {"wer", r.wer}, {"ok", r.ok}, {"error", r.error}};
}

inline SweepRow sweep_row_from_json(const nlohmann::json& j) {
  return {j.at("encoder"),   j.at("lm"),        j.at("prompt"),        j.at("config_hash"), j.at("steps_run"),
          j.at("best_step"), j.at("best_val_loss"), j.at("wer"), j.at("ok"),          j.at("error")};
}

/// Train, decode and score one configuration; failures are captured in the row.
inline SweepRow run_one(const RunConfig& cfg, const std::string& split, std::ostream& log) {
  SweepRow row;
  row.config_hash = cfg.hash();
  try {
    const auto result = train_projector(cfg, std::nullopt, log);
    row.steps_run = result.steps_run;
    row.best_step = result.best_step;
    row.best_val_loss = result.best_val_loss;
    cmd_decode(cfg, split, "", log);
    const auto report = score_files((cfg.data_dir() / (split + ".jsonl")).string(),
                                    default_hyps_path(cfg, split).string());
    write_json(cfg.out_dir() / ("score_" + split + ".json"), report.to_json(cfg.hash()));
    row.wer = report.corpus_wer();
    row.ok = true;
  } catch (const std::exception& e) {
    row.error = e.what();
  }
  return row;
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c == '\n' ? ' ' : c);
  return out + "\"";
}

inline void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "encoder,lm,prompt,config_hash,steps_run,best_step,best_val_loss,wer,status\n";
  out << std::setprecision(17);
  for (const auto& r : rows) {
    out << r.encoder << ',' << r.lm << ',' << r.prompt << ',' << r.config_hash << ',' << r.steps_run << ','
        << r.best_step << ',' << r.best_val_loss << ',' << r.wer << ',' << (r.ok ? "ok" : csv_field(r.error))
        << '\n';
  }
}

/// Cartesian product of encoder x LM x prompt variants. Each run gets its own
/// output directory; with jobs > 1 runs execute in forked worker processes.
inline std::vector<SweepRow> run_sweep(const SweepGrid& grid, std::ostream& log) {
  const auto base = read_json(grid.base_config);
  struct Planned {
    RunConfig cfg;
    SweepRow row;
  };
  std::vector<Planned> plan;
  for (const auto& e : grid.encoders) {
    for (const auto& l : grid.lms) {
      for (const auto& p : grid.prompts) {
        auto j = base;
        j.merge_patch(e.patch);
        j.merge_patch(l.patch);
        j.merge_patch(p.patch);
        const auto name = e.name + "__" + l.name + "__" + p.name;
        j["paths"]["out_dir"] = (grid.out_dir / name).string();
        auto cfg = run_config_from_json(j, grid.base_config.parent_path());
        SweepRow row;
        row.encoder = e.name;
        row.lm = l.name;
        row.prompt = p.name;
        plan.push_back({std::move(cfg), row});
      }
    }
  }
  std::filesystem::create_directories(grid.out_dir);
  std::vector<SweepRow> rows(plan.size());
  const auto finish = [&](std::size_t i, SweepRow r) {
    r.encoder = plan[i].row.encoder;
    r.lm = plan[i].row.lm;
    r.prompt = plan[i].row.prompt;
    log << "run " << r.encoder << " / " << r.lm << " / " << r.prompt << ": "
        << (r.ok ? "WER " + std::to_string(r.wer) : "failed: " + r.error) << "\n";
    rows[i] = std::move(r);
  };
  if (grid.jobs == 1) {
    for (std::size_t i = 0; i < plan.size(); ++i) finish(i, run_one(plan[i].cfg, grid.split, log));
  } else {
    std::size_t next = 0, running = 0;
    std::map<pid_t, std::size_t> children;
    const auto row_file = [&](std::size_t i) { return plan[i].cfg.out_dir() / "sweep_row.json"; };
    while (next < plan.size() || running > 0) {
      while (running < grid.jobs && next < plan.size()) {
        std::filesystem::create_directories(plan[next].cfg.out_dir());
        std::filesystem::remove(row_file(next));
        log.flush();
        const pid_t pid = fork();
        if (pid < 0) throw std::runtime_error("fork failed");
        if (pid == 0) {
          std::ostringstream child_log;
          const auto r = run_one(plan[next].cfg, grid.split, child_log);
          write_json(row_file(next), to_json(r));
          std::_Exit(0);
        }
        children[pid] = next++;
        ++running;
      }
      int status = 0;
      const pid_t done = wait(&status);
      if (done < 0) throw std::runtime_error("wait failed");
      const auto i = children.at(done);
      --running;
      SweepRow r;
      if (std::filesystem::exists(row_file(i))) {
        r = sweep_row_from_json(read_json(row_file(i)));
      } else {
        r.config_hash = plan[i].cfg.hash();
        r.error = "worker process exited abnormally";
      }
      finish(i, std::move(r));
    }
  }
  write_sweep_csv(grid.out_dir / "summary.csv", rows);
  log << "summary -> " << (grid.out_dir / "summary.csv").string() << "\n";
  return rows;
}

inline int cmd_sweep(const std::string& grid_path, std::optional<std::size_t> jobs, std::ostream& log) {
  auto grid = sweep_grid_from_json(read_json(grid_path), std::filesystem::path(grid_path).parent_path());
  if (jobs) {
    if (*jobs == 0) throw ConfigError("--jobs must be at least 1");
    grid.jobs = *jobs;
  }
  const auto rows = run_sweep(grid, log);
  return std::all_of(rows.begin(), rows.end(), [](const SweepRow& r) { return r.ok; }) ? 0 : 1;
}

// ---- emit-curves ----------------------------------------------------------------

/// Columns of a training or validation log, keyed by header name.
struct CurveTable {
  std::string config_hash;
  std::vector<std::string> header;
  std::vector<std::vector<double>> columns;
  std::vector<std::string> raw_lines;
};

inline CurveTable read_curve_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open log " + path);
  CurveTable t;
  const auto split = [](const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) out.push_back(cell);
    return out;
  };
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    t.raw_lines.push_back(line);
    if (line.empty()) continue;
    if (line.rfind("# config_hash=", 0) == 0) {
      t.config_hash = line.substr(14);
      continue;
    }
    if (line.front() == '#') continue;
    if (t.header.empty()) {
      t.header = split(line);
      t.columns.resize(t.header.size());
      continue;
    }
    const auto cells = split(line);
    if (cells.size() != t.header.size()) throw FormatError(path + ": line " + std::to_string(line_no) + " has wrong arity", 0);
    for (std::size_t c = 0; c < cells.size(); ++c) {
      try {
        t.columns[c].push_back(std::stod(cells[c]));
      } catch (const std::exception&) {
        throw FormatError(path + ": line " + std::to_string(line_no) + ": '" + cells[c] + "' is not a number", 0);
      }
    }
  }
  if (t.header.size() < 2) throw FormatError(path + ": no CSV header", 0);
  return t;
}

inline std::string svg_panel(const std::string& title, const std::vector<double>& x, const std::vector<double>& y,
                             double left, double top, double w, double h) {
  std::ostringstream s;
  s << std::setprecision(6);
  s << "<g>\n<rect x='" << left << "' y='" << top << "' width='" << w << "' height='" << h
    << "' fill='none' stroke='#888'/>\n";
  s << "<text x='" << left + w / 2 << "' y='" << top - 8 << "' text-anchor='middle' font-size='14'>" << title
    << "</text>\n";
  if (!x.empty()) {
    const auto [xmin_it, xmax_it] = std::minmax_element(x.begin(), x.end());
    const auto [ymin_it, ymax_it] = std::minmax_element(y.begin(), y.end());
    const double x0 = *xmin_it, x1 = *xmax_it > x0 ? *xmax_it : x0 + 1;
    const double y0 = *ymin_it, y1 = *ymax_it > y0 ? *ymax_it : y0 + 1;
    s << "<polyline fill='none' stroke='#1f5fbf' stroke-width='1.5' points='";
    for (std::size_t i = 0; i < x.size(); ++i) {
      s << left + (x[i] - x0) / (x1 - x0) * w << ',' << top + h - (y[i] - y0) / (y1 - y0) * h << ' ';
    }
    s << "'/>\n";
    s << "<text x='" << left << "' y='" << top + h + 16 << "' font-size='11'>" << x0 << "</text>\n";
    s << "<text x='" << left + w << "' y='" << top + h + 16 << "' font-size='11' text-anchor='end'>" << x1
      << "</text>\n";
    s << "<text x='" << left - 4 << "' y='" << top + 10 << "' font-size='11' text-anchor='end'>" << y1 << "</text>\n";
    s << "<text x='" << left - 4 << "' y='" << top + h << "' font-size='11' text-anchor='end'>" << y0 << "</text>\n";
  }
  s << "</g>\n";
  return s.str();
}

/// One panel per non-step column, step on the x axis.
inline std::string curves_svg(const CurveTable& t) {
  const double w = 520, h = 220, left = 70, gap = 60;
  const std::size_t panels = t.header.size() - 1;
  std::ostringstream s;
  s << "<svg xmlns='http://www.w3.org/2000/svg' width='" << left + w + 30 << "' height='"
    << gap + panels * (h + gap) << "'>\n";
  if (!t.config_hash.empty()) s << "<!-- config_hash=" << t.config_hash << " -->\n";
  for (std::size_t p = 0; p < panels; ++p) {
    s << svg_panel(t.header[p + 1] + " vs " + t.header[0], t.columns[0], t.columns[p + 1], left,
                   gap + static_cast<double>(p) * (h + gap), w, h);
  }
  s << "</svg>\n";
  return s.str();
}

inline int cmd_emit_curves(const std::string& log_path, const std::string& svg_path, const std::string& csv_path,
                           std::ostream& log) {
  const auto table = read_curve_csv(log_path);
  {
    std::ofstream out(svg_path);
    if (!out) throw std::runtime_error("cannot write " + svg_path);
    out << curves_svg(table);
  }
  if (!csv_path.empty()) {
    std::ofstream out(csv_path);
    if (!out) throw std::runtime_error("cannot write " + csv_path);
    for (const auto& line : table.raw_lines) out << line << '\n';
  }
  log << "plotted " << table.columns[0].size() << " rows of " << log_path << " -> " << svg_path << "\n";
  return 0;
}

}  // namespace sla
