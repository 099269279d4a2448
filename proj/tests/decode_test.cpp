#include <gtest/gtest.h>

#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <map>
#include <optional>

#include "sla/decode/beam_search.hpp"
#include "sla/decode/perplexity.hpp"
#include "sla/decode/score_report.hpp"
#include "sla/decode/wer.hpp"
#include "sla/nn/lm_training.hpp"
#include "support/decode_oracles.hpp"
#include "support/random_tensor.hpp"
#include "support/temp_dir.hpp"

using namespace sla;
using namespace sla::testing;

namespace {

LmConfig small_lm(std::size_t vocab) {
  LmConfig c;
  c.vocab_size = vocab;
  c.model_dim = 8;
  c.num_layers = 1;
  c.num_heads = 2;
  c.max_positions = 16;
  c.mlp_dim = 8;
  return c;
}

}  // namespace

TEST(BeamSearch, WideBeamEqualsExhaustiveArgmax) {
  const auto check = check_wide_beam_is_exhaustive(100);
  EXPECT_EQ(check.failures, 0u) << check.first_failure;
  EXPECT_GT(check.checked, 10 * check.skipped);
}

TEST(BeamSearch, WiderBeamRecoversLowerFirstToken) {
  // ids: 0 = a, 1 = EOS, 2 = b
  TableLm lm;
  lm.table[{}] = {0.6, 0.0, 0.4};
  lm.table[{0}] = {0.25, 0.5, 0.25};
  lm.table[{2}] = {0.05, 0.9, 0.05};
  for (TokenId a : {0, 2})
    for (TokenId b : {0, 2}) lm.table[{a, b}] = {0.0, 1.0, 0.0};
  const auto greedy = greedy_decode(lm, {1, 3, 1});
  const auto narrow = beam_search(lm, {1, 3, 1});
  const auto wide = beam_search(lm, {2, 3, 1});
  EXPECT_EQ(greedy.tokens, (std::vector<TokenId>{0, 1}));
  EXPECT_EQ(narrow.tokens, greedy.tokens);
  EXPECT_EQ(wide.tokens, (std::vector<TokenId>{2, 1}));
  EXPECT_NEAR(std::exp(wide.log_prob), 0.36, 1e-12);
  EXPECT_EQ(wide.tokens, exhaustive_best(lm, 3, 1)->tokens);
}

TEST(BeamSearch, BeamOneEqualsGreedy) {
  const auto check = check_beam_one_is_greedy(300);
  EXPECT_EQ(check.failures, 0u) << check.first_failure;
  EXPECT_EQ(check.checked, 300u);
}

TEST(BeamSearch, WiderBeamNeverScoresWorseOnToyLms) {
  const auto check = check_beam_monotone(200);
  EXPECT_EQ(check.failures, 0u) << check.first_failure;
  EXPECT_GT(check.checked, 1000u);
}

TEST(BeamSearch, NothingFinishedReturnsBestTruncated) {
  TableLm lm;
  lm.table[{}] = {0.7, 0.0, 0.3};
  lm.table[{0}] = {0.2, 0.0, 0.8};
  lm.table[{2}] = {0.9, 0.0, 0.1};
  const auto h = beam_search(lm, {2, 2, 1});
  EXPECT_TRUE(h.truncated);
  EXPECT_FALSE(h.finished);
  EXPECT_EQ(h.tokens, (std::vector<TokenId>{0, 2}));
  EXPECT_THROW(beam_search(lm, {0, 2, 1}), ContractError);
}

TEST(BeamSearch, TiesGoToLowerTokenIds) {
  TableLm lm;
  lm.table[{}] = {0.0, 0.0, 0.5, 0.5};
  lm.table[{2}] = {0.0, 1.0, 0.0, 0.0};
  lm.table[{3}] = {0.0, 1.0, 0.0, 0.0};
  EXPECT_EQ(beam_search(lm, {4, 3, 1}).tokens, (std::vector<TokenId>{2, 1}));
  EXPECT_EQ(greedy_decode(lm, {1, 3, 1}).tokens, (std::vector<TokenId>{2, 1}));
}

TEST(LmScorer, BatchedScoresEqualSingleQueriesBitwise) {
  CausalLm<double> lm(small_lm(6), 3);
  Rng rng(1);
  const auto prefix = random_matrix(rng, 4, 8, false);
  LmScorer<double> scorer(lm, prefix);
  const std::vector<std::vector<TokenId>> queries{{}, {3}, {3, 5}, {2, 2, 2}};
  const auto batched = scorer.log_probs_batch(queries);
  for (std::size_t q = 0; q < queries.size(); ++q) EXPECT_EQ(batched[q], scorer.log_probs(queries[q]));
  EXPECT_EQ(scorer.room(), 12u);
}

TEST(LmScorer, DecodeIsRepeatableAndCappedByPositions) {
  CausalLm<double> lm(small_lm(6), 4);
  Rng rng(2);
  ComposedSequence<double> seq;
  seq.embeddings = random_matrix(rng, 13, 8, false);
  const auto a = decode_composed(lm, seq, {4, 64, 1});
  const auto b = decode_composed(lm, seq, {4, 64, 1});
  EXPECT_EQ(a.tokens, b.tokens);
  EXPECT_EQ(a.log_prob, b.log_prob);
  EXPECT_LE(a.tokens.size(), 3u);
  seq.embeddings = random_matrix(rng, 17, 8, false);
  EXPECT_THROW(decode_composed(lm, seq, {4, 64, 1}), LengthError);
}

TEST(Wer, HandExamples) {
  EXPECT_EQ(wer("a b c", "a b c").wer, 0.0);
  const auto sub = wer("a b c", "a x c");
  EXPECT_DOUBLE_EQ(sub.wer, 1.0 / 3.0);
  EXPECT_EQ(sub.substitutions, 1u);
  const auto ins = wer("x", "x y y");
  EXPECT_EQ(ins.wer, 2.0);
  EXPECT_EQ(ins.insertions, 2u);
  EXPECT_THROW(wer("", "a"), ContractError);
}

TEST(Wer, NormalizesCaseAndWhitespace) {
  EXPECT_EQ(wer("  Hello   World ", "hello world").wer, 0.0);
  const auto all_deleted = wer("a b", "");
  EXPECT_EQ(all_deleted.deletions, 2u);
  EXPECT_EQ(all_deleted.wer, 1.0);
}

TEST(Wer, EditCountEqualsGraphDistanceForAllShortPairs) {
  const auto check = check_wer_against_graph_distance(6);
  EXPECT_EQ(check.mismatches, 0u) << check.first_mismatch;
  EXPECT_EQ(check.pairs, 1092u * 1093u);
}

TEST(Wer, CountsMatchAlignmentEnumerationOnSampledPairs) {
  const auto check = check_wer_against_enumeration(3000, 3);
  EXPECT_EQ(check.failures, 0u) << check.first_failure;
}

TEST(Wer, AlignmentReproducesBothSequences) {
  Rng rng(4);
  for (int inst = 0; inst < 2000; ++inst) {
    const auto ref = as_words(static_cast<std::uint32_t>(rng.index(729)), 1 + rng.index(6));
    const auto hyp = as_words(static_cast<std::uint32_t>(rng.index(729)), rng.index(7));
    const auto r = wer(std::span<const std::string>(ref), std::span<const std::string>(hyp));
    std::vector<std::string> rr, hh;
    std::size_t s = 0, i = 0, d = 0;
    for (const auto& a : r.alignment) {
      if (a.op != EditOp::kInsert) rr.push_back(a.ref);
      if (a.op != EditOp::kDelete) hh.push_back(a.hyp);
      s += a.op == EditOp::kSubstitute;
      i += a.op == EditOp::kInsert;
      d += a.op == EditOp::kDelete;
      if (a.op == EditOp::kMatch) ASSERT_EQ(a.ref, a.hyp);
      if (a.op == EditOp::kSubstitute) ASSERT_NE(a.ref, a.hyp);
    }
    ASSERT_EQ(rr, ref);
    ASSERT_EQ(hh, hyp);
    ASSERT_EQ(s, r.substitutions);
    ASSERT_EQ(i, r.insertions);
    ASSERT_EQ(d, r.deletions);
  }
}

TEST(Wer, SwappingSidesSwapsInsertionsAndDeletions) {
  Rng rng(5);
  for (int inst = 0; inst < 5000; ++inst) {
    const auto a = as_words(static_cast<std::uint32_t>(rng.index(729)), 1 + rng.index(6));
    const auto b = as_words(static_cast<std::uint32_t>(rng.index(729)), 1 + rng.index(6));
    const auto ab = wer(std::span<const std::string>(a), std::span<const std::string>(b));
    const auto ba = wer(std::span<const std::string>(b), std::span<const std::string>(a));
    ASSERT_EQ(ab.substitutions, ba.substitutions);
    ASSERT_EQ(ab.insertions, ba.deletions);
    ASSERT_EQ(ab.deletions, ba.insertions);
  }
}

TEST(Wer, CorpusPoolsEditsOverReferenceWords) {
  CorpusWer c;
  c.add(wer("a b c d", "a b c d"));
  c.add(wer("a", "b c"));
  EXPECT_EQ(c.ref_words, 5u);
  EXPECT_DOUBLE_EQ(c.wer(), 2.0 / 5.0);
}

TEST(Perplexity, UniformLmGivesVocabularySize) {
  const std::size_t vocab = 7;
  const std::vector<TokenId> targets{3, Tokenizer::kIgnore, 5, 0, 6};
  const auto nll = masked_nll(Tensor<double>::zeros({5, vocab}), targets, Tokenizer::kIgnore);
  EXPECT_EQ(nll.supervised, 4u);
  EXPECT_NEAR(word_ppl(nll, 4), 7.0, 1e-12);
}

TEST(Perplexity, UniformCausalLmGivesVocabularySize) {
  CausalLm<double> lm(small_lm(9), 1);
  auto params = lm.parameters();
  for (auto& p : params)
    if (p.name.rfind("head.", 0) == 0) std::fill(p.tensor.mutable_values().begin(), p.tensor.mutable_values().end(), 0.0);
  const std::vector<TokenId> words{3, 4, 5};
  const auto nll = sentence_nll(lm, words, Tokenizer::kEos);
  // Two word-to-word predictions plus EOS: one supervised position per word.
  EXPECT_EQ(nll.supervised, 3u);
  EXPECT_NEAR(word_ppl(nll, 3), 9.0, 1e-12);
}

TEST(Perplexity, MemorizedStringApproachesOne) {
  LmConfig c = small_lm(6);
  c.model_dim = 16;
  c.mlp_dim = 32;
  const std::vector<std::vector<TokenId>> corpus{{3, 4, 5, 3, 4}};
  LmTrainConfig t;
  t.steps = 400;
  t.batch_size = 4;
  t.lr = 1e-2;
  t.warmup = 10;
  t.log_every = 0;
  const auto lm = pretrain_lm<double>(c, 2, corpus, {}, t);
  EXPECT_LT(word_ppl(sentence_nll(lm, corpus[0], Tokenizer::kEos), 5), 1.05);
}

TEST(Perplexity, MatchesLogSumExpRecomputation) {
  Rng rng(6);
  for (int inst = 0; inst < 100; ++inst) {
    const std::size_t rows = 1 + rng.index(10), cols = 2 + rng.index(10);
    const auto logits = random_matrix(rng, rows, cols, false, 5.0);
    std::vector<TokenId> targets(rows);
    for (auto& t : targets) t = static_cast<TokenId>(rng.index(cols));
    targets[rng.index(rows)] = Tokenizer::kIgnore;
    double expected = 0;
    std::size_t n = 0;
    for (std::size_t r = 0; r < rows; ++r) {
      if (targets[r] == Tokenizer::kIgnore) continue;
      double z = 0;
      for (std::size_t c = 0; c < cols; ++c) z += std::exp(logits.at(r, c));
      expected += std::log(z) - logits.at(r, static_cast<std::size_t>(targets[r]));
      ++n;
    }
    const auto nll = masked_nll(logits, targets, Tokenizer::kIgnore);
    ASSERT_EQ(nll.supervised, n);
    ASSERT_NEAR(nll.total, expected, 1e-12 * std::max(1.0, std::abs(expected)));
  }
}

TEST(Perplexity, RejectsDegenerateCounts) {
  EXPECT_THROW(word_ppl({1.0, 1}, 0), ContractError);
  EXPECT_THROW(word_ppl({0.0, 0}, 3), ContractError);
}

TEST(ScoreReport, PoolsPerUtteranceAndKeepsManifestOrder) {
  std::vector<UtteranceRecord> refs(2);
  refs[0].id = "u1";
  refs[0].transcript = "w1 w2 w3";
  refs[1].id = "u2";
  refs[1].transcript = "w4";
  const std::vector<HypothesisRecord> hyps{{"u2", "w4 w4", -1.0, false}, {"u1", "W1 w3", -2.0, false}};
  const auto report = score(refs, hyps);
  EXPECT_DOUBLE_EQ(report.corpus_wer(), 2.0 / 4.0);
  ASSERT_EQ(report.utterances.size(), 2u);
  EXPECT_EQ(report.utterances[0].id, "u1");
  const auto j = report.to_json("abc");
  EXPECT_EQ(j.at("per_utterance")[0].at("D"), 1);
  EXPECT_EQ(j.at("per_utterance")[1].at("I"), 1);
  EXPECT_EQ(j.at("config_hash"), "abc");
  EXPECT_NE(report.alignment_dump().find("id: u2"), std::string::npos);
}

TEST(ScoreReport, MismatchedOrDuplicateIdsAreRejected) {
  std::vector<UtteranceRecord> refs(1);
  refs[0].id = "u1";
  refs[0].transcript = "a";
  EXPECT_THROW(score(refs, {{"u9", "a", 0, false}}), ContractError);
  EXPECT_THROW(score(refs, {{"u1", "a", 0, false}, {"u1", "a", 0, false}}), ContractError);
  EXPECT_THROW(score(refs, {}), ContractError);
}

TEST(ScoreReport, HypothesesJsonRoundTrips) {
  sla::testing::TempDir dir;
  const std::vector<HypothesisRecord> hyps{{"a", "w1 w2", -0.5, false}, {"b", "", -9.25, true}};
  {
    std::ofstream out(dir.file("h.json"));
    out << hypotheses_to_json(hyps, "h").dump(2);
  }
  const auto back = read_hypotheses(dir.file("h.json"));
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].hyp, "");
  EXPECT_EQ(back[1].log_prob, -9.25);
  EXPECT_TRUE(back[1].truncated);
}
