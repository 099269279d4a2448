#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "sla/data/synthetic.hpp"
#include "sla/train/checkpoint.hpp"
#include "support/temp_dir.hpp"

namespace {

using sla::FeatureMatrix;
using sla::FormatError;
using sla::Tokenizer;
using sla::testing::TempDir;

const std::string kFixtureDir = SLA_FIXTURE_DIR;

void write_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

FeatureMatrix random_features(std::uint32_t t, std::uint32_t d, std::uint64_t seed) {
  sla::Rng rng(seed);
  FeatureMatrix m{t, d, {}};
  for (std::size_t i = 0; i < static_cast<std::size_t>(t) * d; ++i) m.values.push_back(static_cast<float>(rng.normal() * 10));
  return m;
}

Tokenizer small_vocab() { return Tokenizer({"a", "b", "c"}); }

TEST(Tokenizer, EmptyTextRoundTrips) {
  const auto tok = small_vocab();
  EXPECT_TRUE(tok.encode("").empty());
  EXPECT_EQ(tok.decode(std::vector<sla::TokenId>{}), "");
}

TEST(Tokenizer, TwoWordRoundTrip) {
  const auto tok = small_vocab();
  const auto ids = tok.encode("a b");
  ASSERT_EQ(ids.size(), 2u);
  EXPECT_EQ(ids[0], tok.id("a"));
  EXPECT_EQ(ids[1], tok.id("b"));
  EXPECT_EQ(tok.decode(ids), "a b");
}

TEST(Tokenizer, UnknownWordMapsToUnk) {
  const auto tok = small_vocab();
  const auto ids = tok.encode("a zebra");
  EXPECT_EQ(ids[1], Tokenizer::kUnk);
  EXPECT_EQ(tok.decode(ids), "a <unk>");
}

TEST(Tokenizer, RoundTripIsNormalizedText) {
  const auto tok = small_vocab();
  EXPECT_EQ(tok.decode(tok.encode("  A\tb \n C ")), "a b c");
}

TEST(Tokenizer, SpecialsAndIgnoreSentinel) {
  const auto tok = small_vocab();
  EXPECT_EQ(tok.word(Tokenizer::kPad), "<pad>");
  EXPECT_EQ(tok.word(Tokenizer::kEos), "<eos>");
  EXPECT_EQ(tok.word(Tokenizer::kUnk), "<unk>");
  EXPECT_LT(Tokenizer::kIgnore, 0);
  EXPECT_THROW(Tokenizer({"a", "A"}), sla::ContractError);
}

TEST(Tokenizer, SaveLoadPreservesIds) {
  TempDir dir;
  const auto tok = Tokenizer({"user:", "x", "y"});
  tok.save(dir.file("vocab.txt"));
  const auto back = Tokenizer::load(dir.file("vocab.txt"));
  EXPECT_EQ(back.words(), tok.words());
}

TEST(FeatureFile, RandomMatrixRoundTripIsExact) {
  TempDir dir;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto m = random_features(static_cast<std::uint32_t>(seed % 7 + 1), 16, seed);
    write_features(dir.file("f.slmf"), m);
    const auto back = sla::read_features(dir.file("f.slmf"));
    ASSERT_EQ(back.frames, m.frames);
    ASSERT_EQ(back.dim, m.dim);
    float max_diff = 0;
    for (std::size_t i = 0; i < m.values.size(); ++i) max_diff = std::max(max_diff, std::abs(back.values[i] - m.values[i]));
    EXPECT_EQ(max_diff, 0.0f);
  }
}

TEST(FeatureFile, GoldenFixtureDecodes) {
  const auto m = sla::read_features(kFixtureDir + "/golden.slmf");
  ASSERT_EQ(m.frames, 3u);
  ASSERT_EQ(m.dim, 2u);
  const std::vector<float> expected{0.5f, -1.25f, 3.0f, 0.1f, -0.0f, 65504.0f};
  for (std::size_t i = 0; i < expected.size(); ++i) {
    EXPECT_EQ(std::bit_cast<std::uint32_t>(m.values[i]), std::bit_cast<std::uint32_t>(expected[i])) << i;
  }
  EXPECT_EQ(sla::encode_features(m), sla::read_file_bytes(kFixtureDir + "/golden.slmf"));
}

TEST(FeatureFile, TruncationReportsExpectedLength) {
  const auto full = sla::encode_features(random_features(4, 3, 9));
  const std::vector<std::uint8_t> cut(full.begin(), full.end() - 5);
  try {
    sla::decode_features(cut);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), cut.size());
    EXPECT_NE(std::string(e.what()).find(std::to_string(full.size())), std::string::npos) << e.what();
  }
}

TEST(FeatureFile, PayloadLargerThanHeaderIsRejected) {
  auto bytes = sla::encode_features(random_features(2, 2, 3));
  bytes.insert(bytes.end(), 4, 0);
  try {
    sla::decode_features(bytes);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), bytes.size() - 4);
  }
}

TEST(FeatureFile, BadMagicAndVersion) {
  auto bytes = sla::encode_features(random_features(1, 1, 1));
  auto bad = bytes;
  bad[0] = 'X';
  try {
    sla::decode_features(bad);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 0u);
  }
  bad = bytes;
  bad[4] = 2;
  try {
    sla::decode_features(bad);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 4u);
  }
  EXPECT_THROW(sla::decode_features(std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + 10)), FormatError);
}

TEST(FeatureFile, MissingFileNamesPath) {
  try {
    sla::read_features("/nonexistent/x.slmf");
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/x.slmf"), std::string::npos);
  }
}

TEST(Manifest, RejectsHeaderMismatchAndEmptyTranscript) {
  TempDir dir;
  write_features(dir.file("u.slmf"), random_features(4, 3, 2));
  sla::UtteranceRecord r{"u", "a b", "u.slmf", std::nullopt, 4, 50.0, 3};
  sla::write_manifest(dir.file("ok.jsonl"), {r});
  const auto m = sla::read_manifest(dir.file("ok.jsonl"));
  ASSERT_EQ(m.records.size(), 1u);
  EXPECT_EQ(m.load_features(m.records[0]).frames, 4u);

  auto wrong = r;
  wrong.num_frames = 5;
  sla::write_manifest(dir.file("frames.jsonl"), {wrong});
  EXPECT_THROW(sla::read_manifest(dir.file("frames.jsonl")), FormatError);
  wrong = r;
  wrong.dim = 2;
  sla::write_manifest(dir.file("dim.jsonl"), {wrong});
  EXPECT_THROW(sla::read_manifest(dir.file("dim.jsonl")), FormatError);
  wrong = r;
  wrong.transcript = "";
  sla::write_manifest(dir.file("empty.jsonl"), {wrong});
  EXPECT_THROW(sla::read_manifest(dir.file("empty.jsonl"), false), FormatError);
}

TEST(Manifest, RecordJsonRoundTrip) {
  sla::UtteranceRecord r{"id-1", "w01 w02", std::nullopt, 42, 10, 50.0, 16};
  const auto back = sla::record_from_json(nlohmann::json::parse(to_json(r).dump()));
  EXPECT_EQ(back.id, r.id);
  EXPECT_EQ(back.transcript, r.transcript);
  EXPECT_FALSE(back.feature_path.has_value());
  EXPECT_EQ(back.synthetic_seed, r.synthetic_seed);
  EXPECT_EQ(back.num_frames, 10u);
}

TEST(SyntheticTask, TablesSatisfyInvariants) {
  const auto task = sla::SyntheticTask::generate({});
  EXPECT_NO_THROW(task.validate());
  for (std::size_t i = 0; i < task.vocab_size(); ++i) {
    std::size_t nonzero = 0;
    for (std::size_t j = 0; j < task.vocab_size(); ++j) nonzero += task.transition(i, j) > 0;
    EXPECT_EQ(nonzero, task.spec().successors_per_word);
  }
  const auto back = sla::SyntheticTask::from_json(nlohmann::json::parse(task.to_json().dump()));
  EXPECT_EQ(back.codebook(), task.codebook());
}

TEST(SyntheticTask, RejectsBadSpecs) {
  sla::SyntheticTaskSpec s;
  s.noise_sigma = -1;
  EXPECT_THROW(sla::SyntheticTask::generate(s), sla::ConfigError);
  s = {};
  s.jitter = {-5};
  EXPECT_THROW(sla::SyntheticTask::generate(s), sla::ConfigError);
  EXPECT_THROW(nlohmann::json({{"vocab", 3}}).get<sla::SyntheticTaskSpec>(), sla::ConfigError);
}

TEST(SyntheticTask, FrameCountIsSumOfWordCounts) {
  sla::SyntheticTaskSpec s;
  s.jitter = {-1, 0, 1};
  const auto task = sla::SyntheticTask::generate(s);
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto u = task.sample_utterance(seed);
    int total = 0;
    for (int c : u.frames_per_word) total += c;
    ASSERT_EQ(static_cast<int>(u.features.frames), total);
    ASSERT_EQ(u.features.values.size(), u.features.frames * u.features.dim);
    ASSERT_GE(u.words.size(), 3u);
    ASSERT_LE(u.words.size(), 12u);
  }
}

// Averages each word's frames (segmentation known from the renderer) and picks
// the nearest codebook row. Returns the word error fraction.
double oracle_error_rate(const sla::SyntheticTask& task, std::size_t utterances) {
  std::size_t errors = 0, words = 0;
  const std::size_t d = task.spec().feature_dim;
  for (std::uint64_t seed = 0; seed < utterances; ++seed) {
    const auto u = task.sample_utterance(seed + 1000);
    std::size_t frame = 0;
    for (std::size_t w = 0; w < u.words.size(); ++w) {
      std::vector<double> mean(d, 0.0);
      const auto count = static_cast<std::size_t>(u.frames_per_word[w]);
      for (std::size_t f = 0; f < count; ++f, ++frame)
        for (std::size_t c = 0; c < d; ++c) mean[c] += u.features.values[frame * d + c] / static_cast<double>(count);
      std::size_t best = 0;
      double best_dist = INFINITY;
      for (std::size_t v = 0; v < task.vocab_size(); ++v) {
        double dist = 0;
        const auto row = task.codebook_row(v);
        for (std::size_t c = 0; c < d; ++c) dist += (mean[c] - row[c]) * (mean[c] - row[c]);
        if (dist < best_dist) {
          best_dist = dist;
          best = v;
        }
      }
      errors += best != u.words[w];
      ++words;
    }
  }
  return static_cast<double>(errors) / static_cast<double>(words);
}

TEST(SyntheticTask, NoiselessOracleDecoderIsPerfect) {
  sla::SyntheticTaskSpec s;
  s.noise_sigma = 0;
  EXPECT_EQ(oracle_error_rate(sla::SyntheticTask::generate(s), 200), 0.0);
}

TEST(SyntheticTask, HeavyNoiseDefeatsOracleDecoder) {
  auto s = sla::SyntheticTaskSpec{};
  const auto probe = sla::SyntheticTask::generate(s);
  double max_norm = 0;
  for (std::size_t v = 0; v < probe.vocab_size(); ++v) {
    double n = 0;
    for (double c : probe.codebook_row(v)) n += c * c;
    max_norm = std::max(max_norm, std::sqrt(n));
  }
  s.noise_sigma = 10 * max_norm;
  EXPECT_GT(oracle_error_rate(sla::SyntheticTask::generate(s), 200), 0.5);
}

sla::DatasetSpec tiny_dataset() {
  sla::DatasetSpec d;
  d.n_train = 12;
  d.n_val = 4;
  d.n_test = 4;
  d.lm_train_sentences = 20;
  d.lm_heldout_sentences = 5;
  d.instruct_train = 20;
  d.instruct_heldout = 5;
  return d;
}

TEST(GenDataset, SameSeedIsByteIdentical) {
  TempDir a, b;
  sla::gen_dataset(tiny_dataset(), a.path());
  sla::gen_dataset(tiny_dataset(), b.path());
  std::size_t files = 0;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(a.path())) {
    if (!entry.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(entry.path(), a.path());
    ASSERT_EQ(sla::read_file_bytes(entry.path().string()), sla::read_file_bytes((b.path() / rel).string())) << rel;
    ++files;
  }
  EXPECT_EQ(files, 20u + 3 + 3 + 4);
}

TEST(GenDataset, SplitsAreDisjointAndManifestsValidate) {
  TempDir dir;
  sla::gen_dataset(tiny_dataset(), dir.path());
  std::set<std::string> ids;
  std::set<std::uint64_t> seeds;
  std::size_t total = 0;
  for (const char* split : {"train", "val", "test"}) {
    const auto m = sla::read_manifest(dir.file(std::string(split) + ".jsonl"));
    for (const auto& r : m.records) {
      ids.insert(r.id);
      seeds.insert(*r.synthetic_seed);
      ++total;
      const auto f = m.load_features(r);
      EXPECT_EQ(f.frames, r.num_frames);
    }
  }
  EXPECT_EQ(total, 20u);
  EXPECT_EQ(ids.size(), total);
  EXPECT_EQ(seeds.size(), total);
  const auto vocab = Tokenizer::load(dir.file("vocab.txt"));
  EXPECT_TRUE(vocab.contains("assistant:"));
  EXPECT_TRUE(vocab.contains("w49"));
}

TEST(PromptLibrary, EmptyLibraryIsRejected) {
  EXPECT_THROW(sla::PromptLibrary({}, 1), sla::ContractError);
}

TEST(PromptLibrary, SameSeedSameSequence) {
  sla::PromptLibrary a(sla::default_prompt_library(), 5), b(sla::default_prompt_library(), 5);
  for (int i = 0; i < 50; ++i) EXPECT_EQ(sla::sample_prompt(a), sla::sample_prompt(b));
  EXPECT_EQ(a.sample_at(7), b.sample_at(7));
}

TEST(PromptLibrary, FrequenciesWithinThreeSigma) {
  const auto prompts = sla::default_prompt_library();
  sla::PromptLibrary lib(prompts, 11);
  const std::size_t draws = 10000;
  std::map<std::string, std::size_t> counts;
  for (std::size_t i = 0; i < draws; ++i) ++counts[sla::sample_prompt(lib)];
  const double p = 1.0 / static_cast<double>(prompts.size());
  const double mean = draws * p;
  const double sigma = std::sqrt(draws * p * (1 - p));
  for (const auto& prompt : prompts) {
    EXPECT_LE(std::abs(static_cast<double>(counts[prompt]) - mean), 3 * sigma) << prompt;
  }
}

TEST(Checkpoint, RoundTripAndMetadata) {
  TempDir dir;
  sla::ParameterList<double> params{{"w", sla::Tensor<double>(sla::Shape{2, 3}, {1, -2, 3.5, 1e-300, 0, 7})},
                                    {"b", sla::Tensor<double>(sla::Shape{3}, {0.1, 0.2, 0.3})}};
  sla::Checkpoint c;
  c.add("proj.", params);
  sla::CheckpointMetadata meta;
  meta.step = 1500;
  meta.val_loss = 0.25;
  meta.config_hash = "abc";
  meta.extra["kind"] = "projector";
  write_checkpoint(dir.file("p.slmc"), c, meta);

  const auto back = sla::read_checkpoint(dir.file("p.slmc"));
  sla::ParameterList<double> fresh{{"w", sla::Tensor<double>::zeros({2, 3})}, {"b", sla::Tensor<double>::zeros({3})}};
  back.load_into("proj.", fresh);
  EXPECT_EQ(sla::parameter_blob(fresh), sla::parameter_blob(params));
  const auto m = sla::read_checkpoint_metadata(dir.file("p.slmc"));
  EXPECT_EQ(m.step, 1500);
  EXPECT_EQ(m.val_loss, 0.25);
  EXPECT_EQ(m.extra["kind"], "projector");

  sla::ParameterList<double> wrong{{"w", sla::Tensor<double>::zeros({3, 2})}, {"b", sla::Tensor<double>::zeros({3})}};
  EXPECT_THROW(back.load_into("proj.", wrong), sla::DimensionError);
  auto bytes = sla::encode_checkpoint(c);
  bytes.pop_back();
  EXPECT_THROW(sla::decode_checkpoint(bytes), FormatError);
}

}  // namespace
