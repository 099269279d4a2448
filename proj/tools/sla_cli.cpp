#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "sla/cli/commands.hpp"

namespace {

int guarded(const std::function<int()>& fn) {
  try {
    return fn();
  } catch (const sla::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Speech-to-LLM projector alignment toolkit (threads: SLA_THREADS)"};
  app.require_subcommand(1);

  std::string config, spec, out, split = "test", refs, hyps, alignment, grid, log_path, csv, resume;
  std::optional<std::size_t> jobs;
  bool resume_flag = false;

  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic dataset, vocabulary and LM corpora");
  gen->add_option("--spec", spec, "Dataset spec JSON (defaults when omitted)");
  gen->add_option("--out", out, "Output directory")->required();

  auto* pre = app.add_subcommand("pretrain-lm", "Pretrain the toy base LM on plain sentences");
  pre->add_option("--config", config, "Run config JSON")->required();

  auto* ins = app.add_subcommand("instruction-tune", "Instruction-tune the base LM into the chat LM");
  ins->add_option("--config", config, "Run config JSON")->required();

  auto* tp = app.add_subcommand("train-projector", "Train the projector against the frozen encoder and LM");
  tp->add_option("--config", config, "Run config JSON")->required();
  auto* resume_opt = tp->add_flag("--resume", resume_flag, "Resume from <out_dir>/train_state.slmc");
  tp->add_option("--resume-from", resume, "Resume from the given state checkpoint")->excludes(resume_opt);

  auto* dec = app.add_subcommand("decode", "Beam-search decode a split to a hypotheses JSON");
  dec->add_option("--config", config, "Run config JSON")->required();
  dec->add_option("--split", split, "train, val or test")->capture_default_str();
  dec->add_option("--out", out, "Hypotheses path (default <out_dir>/hyps_<split>.json)");

  auto* sc = app.add_subcommand("score", "Word error rate of hypotheses against a manifest");
  sc->add_option("--refs", refs, "Reference manifest JSONL")->required();
  sc->add_option("--hyps", hyps, "Hypotheses JSON")->required();
  sc->add_option("--out", out, "Report JSON path");
  sc->add_option("--alignment", alignment, "Per-utterance alignment dump path");

  auto* pp = app.add_subcommand("ppl", "Word-level perplexity of a split's transcripts");
  pp->add_option("--config", config, "Run config JSON")->required();
  pp->add_option("--split", split, "train, val or test")->capture_default_str();
  pp->add_option("--out", out, "Report JSON path (default <out_dir>/ppl_<split>.json)");

  auto* sw = app.add_subcommand("sweep", "Train, decode and score every encoder x LM x prompt combination");
  sw->add_option("--grid", grid, "Sweep grid JSON")->required();
  sw->add_option("--jobs", jobs, "Parallel worker processes (overrides grid.jobs)");

  auto* ec = app.add_subcommand("emit-curves", "Plot a training or validation log CSV as SVG");
  ec->add_option("--log", log_path, "train_log.csv or val_log.csv")->required();
  ec->add_option("--out", out, "SVG path")->required();
  ec->add_option("--csv", csv, "Copy of the CSV data");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    // Top-level help lists every subcommand's flags.
    if (app.get_subcommands().empty()) {
      std::cout << app.help("", CLI::AppFormatMode::All);
      return 0;
    }
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  auto& log = std::cerr;
  const auto cfg = [&] { return sla::load_run_config(config); };
  if (*gen) return guarded([&] { return sla::cmd_gen_data(spec, out, log); });
  if (*pre) return guarded([&] { return sla::cmd_pretrain_lm(cfg(), log); });
  if (*ins) return guarded([&] { return sla::cmd_instruction_tune(cfg(), log); });
  if (*tp) {
    return guarded([&] {
      const auto c = cfg();
      std::optional<std::string> from;
      if (resume_flag) from = (c.out_dir() / sla::kStateCheckpoint).string();
      if (!resume.empty()) from = resume;
      return sla::cmd_train_projector(c, from, log);
    });
  }
  if (*dec) return guarded([&] { return sla::cmd_decode(cfg(), split, out, log); });
  if (*sc) return guarded([&] { return sla::cmd_score(refs, hyps, out, alignment, std::cout); });
  if (*pp) return guarded([&] { return sla::cmd_ppl(cfg(), split, out, log); });
  if (*sw) return guarded([&] { return sla::cmd_sweep(grid, jobs, log); });
  if (*ec) return guarded([&] { return sla::cmd_emit_curves(log_path, out, csv, log); });
  return 2;
}
