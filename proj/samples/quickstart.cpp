// Miniature end-to-end run: synthetic data, a small base LM and its chat
// variant, projector training, beam-search decoding and scoring.
//
//   quickstart [work_dir]

#include <chrono>
#include <iostream>

#include "sla/cli/commands.hpp"

int main(int argc, char** argv) {
  using namespace sla;
  const std::filesystem::path work = argc > 1 ? argv[1] : "quickstart_work";
  try {
    DatasetSpec spec;
    spec.task.vocab_size = 12;
    spec.task.max_words = 5;
    spec.n_train = 300;
    spec.n_val = 40;
    spec.n_test = 40;
    spec.lm_train_sentences = 3000;
    spec.lm_heldout_sentences = 200;
    spec.instruct_train = 3000;
    spec.instruct_heldout = 200;
    gen_dataset(spec, work / "data");

    RunConfig cfg = run_config_from_json({{"seed", 7},
                                          {"paths", {{"data_dir", "data"}, {"out_dir", "run"}}},
                                          {"lm", {{"model_dim", 32}, {"num_layers", 2}, {"num_heads", 2},
                                                  {"max_positions", 96}, {"mlp_dim", 64}}},
                                          {"pretrain", {{"steps", 300}, {"lr", 0.003}}},
                                          {"instruct", {{"steps", 600}, {"lr", 0.003}}},
                                          {"train", {{"d_hidden", 64}, {"lr_max", 0.002}, {"warmup", 50},
                                                     {"max_steps", 600}, {"val_every", 100}}}},
                                         work);
    const auto t0 = std::chrono::steady_clock::now();
    std::ostringstream quiet;
    cmd_pretrain_lm(cfg, std::cout);
    cmd_instruction_tune(cfg, std::cout);

    const auto tok = load_vocabulary(cfg);
    const auto test = load_split(cfg, "test");
    const auto untrained = build_model(cfg, tok, true);
    const auto before = score(read_manifest((cfg.data_dir() / "test.jsonl").string()).records,
                              decode_utterances(untrained, tok, test, decode_prompts(cfg), cfg.decode));

    train_projector(cfg, std::nullopt, quiet);
    cmd_decode(cfg, "test", "", std::cout);
    cmd_score((cfg.data_dir() / "test.jsonl").string(), default_hyps_path(cfg, "test").string(), "", "", std::cout);
    std::cout << "untrained projector WER " << before.corpus_wer() << "\n";
    std::cout << "elapsed " << std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() << " s\n";
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return 1;
  }
  return 0;
}
