#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>
#include <string>

#include <unistd.h>

#include <gtest/gtest.h>

#include "arn/commands.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path kData = ARN_TEST_DATA;

fs::path workdir() {
  const auto dir = fs::temp_directory_path() / ("arn_commands_test_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

void spit(const fs::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

fs::path markov_file() {
  const auto p = workdir() / "source.json";
  spit(p, R"({"states": ["a", "b", "c", "d"], "pi": [0.4, 0.3, 0.2, 0.1],
              "A": [[0.1, 0.6, 0.2, 0.1], [0.2, 0.1, 0.6, 0.1], [0.1, 0.2, 0.1, 0.6], [0.6, 0.1, 0.2, 0.1]]})");
  return p;
}

arn::RunConfig markov_run(const std::string& tag, std::size_t steps) {
  arn::RunConfig cfg;
  cfg.markov = markov_file();
  cfg.markov_samples = 64;
  cfg.seq_len = 5;
  cfg.vocab = workdir() / (tag + ".vocab");
  cfg.checkpoint = workdir() / (tag + ".arn");
  cfg.trace = workdir() / (tag + ".jsonl");
  cfg.train.steps = steps;
  cfg.train.batch_size = 4;
  cfg.train.seed = 21;
  return cfg;
}

int train(const arn::RunConfig& cfg) {
  std::ostringstream log;
  return arn::cmd_train(cfg, log);
}

}  // namespace

TEST(Train, MissingCorpusIsInputError) {
  auto cfg = markov_run("missing", 1);
  cfg.markov.reset();
  cfg.corpus = workdir() / "does_not_exist.txt";
  EXPECT_EQ(train(cfg), arn::kExitInput);
  cfg.corpus.reset();
  EXPECT_EQ(train(cfg), arn::kExitInput);
}

TEST(Train, BadSettingsAreInputErrors) {
  auto cfg = markov_run("bad", 1);
  cfg.dtype = "f16";
  EXPECT_EQ(train(cfg), arn::kExitInput);
  cfg = markov_run("bad", 1);
  cfg.preset = "huge";
  EXPECT_EQ(train(cfg), arn::kExitInput);
  cfg = markov_run("bad", 1);
  cfg.train.batch_size = 0;
  EXPECT_EQ(train(cfg), arn::kExitInput);
  cfg = markov_run("bad", 1);
  cfg.checkpoint = workdir() / "no_such_dir" / "m.arn";
  EXPECT_EQ(train(cfg), arn::kExitInput);
}

TEST(Train, ZeroStepsWritesInitialization) {
  const auto cfg = markov_run("zero", 0);
  ASSERT_EQ(train(cfg), arn::kExitOk);
  auto dims = arn::ModelDims::desk();
  dims.vocab = 4;
  dims.seq_len = 5;
  arn::RandomStreams streams(cfg.train.seed);
  const auto init = arn::ArnModel<double>::random(dims, streams.init);
  const auto loaded = arn::load_model<double>(cfg.checkpoint);
  const auto a = init.parameters();
  const auto b = loaded.model.parameters();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].name, b[i].name);
    const auto av = a[i].tensor.data();
    const auto bv = b[i].tensor.data();
    EXPECT_TRUE(std::equal(av.begin(), av.end(), bv.begin(), bv.end())) << a[i].name;
  }
  EXPECT_EQ(slurp(cfg.vocab), "a\nb\nc\nd\n");
  EXPECT_EQ(slurp(*cfg.trace), "");
}

TEST(Train, RerunIsBitIdentical) {
  const auto a = markov_run("det_a", 6), b = markov_run("det_b", 6);
  ASSERT_EQ(train(a), arn::kExitOk);
  ASSERT_EQ(train(b), arn::kExitOk);
  EXPECT_EQ(slurp(a.checkpoint), slurp(b.checkpoint));
  EXPECT_EQ(slurp(*a.trace), slurp(*b.trace));
  auto c = markov_run("det_c", 6);
  c.train.seed = 22;
  ASSERT_EQ(train(c), arn::kExitOk);
  EXPECT_NE(slurp(a.checkpoint), slurp(c.checkpoint));
}

TEST(Train, TraceSchema) {
  const auto cfg = markov_run("trace", 3);
  ASSERT_EQ(train(cfg), arn::kExitOk);
  std::istringstream is(slurp(*cfg.trace));
  std::size_t lines = 0;
  for (std::string line; std::getline(is, line); ++lines) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j.at("step").get<std::size_t>(), lines);
    for (const char* key : {"d_loss", "g_loss", "recon", "kl", "ar_loglik", "adv", "tau"})
      EXPECT_TRUE(std::isfinite(j.at(key).get<double>())) << key;
  }
  EXPECT_EQ(lines, 3u);
}

TEST(Train, TextCorpus) {
  auto cfg = markov_run("text", 2);
  cfg.markov.reset();
  cfg.corpus = kData / "test.txt";
  cfg.vocab_size = 6;
  ASSERT_EQ(train(cfg), arn::kExitOk);
  const auto vocab = arn::load_vocabulary(cfg.vocab);
  EXPECT_EQ(vocab.size(), 6u);
  EXPECT_EQ(vocab.token(2), "the");
  EXPECT_EQ(arn::load_model<double>(cfg.checkpoint).model.dims.vocab, 6u);

  auto empty = cfg;
  empty.corpus = workdir() / "blank.txt";
  spit(*empty.corpus, "\n  \n");
  EXPECT_EQ(train(empty), arn::kExitInput);
}

class Generate : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    const auto cfg = markov_run("gen", 4);
    ASSERT_EQ(train(cfg), arn::kExitOk);
  }

  static arn::GenerateConfig config() {
    arn::GenerateConfig g;
    g.checkpoint = workdir() / "gen.arn";
    g.vocab = workdir() / "gen.vocab";
    g.seed = 5;
    return g;
  }

  static std::pair<int, std::string> run(const arn::GenerateConfig& g) {
    std::ostringstream out, log;
    const int rc = arn::cmd_generate(g, out, log);
    return {rc, out.str()};
  }
};

TEST_F(Generate, CountZeroIsEmpty) {
  auto g = config();
  g.count = 0;
  const auto [rc, out] = run(g);
  EXPECT_EQ(rc, arn::kExitOk);
  EXPECT_EQ(out, "");
}

TEST_F(Generate, UnknownModeIsInputError) {
  auto g = config();
  g.mode = "beam";
  EXPECT_EQ(run(g).first, arn::kExitInput);
}

TEST_F(Generate, MissingCheckpointIsInputError) {
  auto g = config();
  g.checkpoint = workdir() / "nothing.arn";
  EXPECT_EQ(run(g).first, arn::kExitInput);
}

TEST_F(Generate, MismatchedVocabularyIsInputError) {
  auto g = config();
  g.vocab = workdir() / "short.vocab";
  spit(g.vocab, "a\nb\n");
  EXPECT_EQ(run(g).first, arn::kExitInput);
}

TEST_F(Generate, LinesAndVocabulary) {
  const std::set<std::string> vocab{"a", "b", "c", "d"};
  for (const char* mode : {"noise", "decoded-x1"}) {
    auto g = config();
    g.mode = mode;
    g.count = 25;
    const auto [rc, out] = run(g);
    ASSERT_EQ(rc, arn::kExitOk) << mode;
    std::istringstream is(out);
    std::size_t lines = 0;
    for (std::string line; std::getline(is, line); ++lines) {
      std::istringstream ws(line);
      std::size_t n = 0;
      for (std::string w; ws >> w; ++n) EXPECT_TRUE(vocab.count(w)) << w;
      EXPECT_EQ(n, 5u);
    }
    EXPECT_EQ(lines, 25u) << mode;
  }
}

TEST_F(Generate, FixedSeedIsDeterministic) {
  for (const char* mode : {"noise", "decoded-x1"}) {
    auto g = config();
    g.mode = mode;
    EXPECT_EQ(run(g).second, run(g).second);
    auto h = g;
    h.seed = 6;
    h.count = 50;
    g.count = 50;
    EXPECT_NE(run(g).second, run(h).second);
  }
}

TEST(Evaluate, GoldenFixture) {
  arn::EvaluateConfig cfg;
  cfg.generated = kData / "generated.txt";
  cfg.test = kData / "test.txt";
  std::ostringstream out, log;
  ASSERT_EQ(arn::cmd_evaluate(cfg, out, log), arn::kExitOk) << log.str();
  const auto got = nlohmann::json::parse(out.str());
  const auto want = nlohmann::json::parse(slurp(kData / "golden_report.json"));
  EXPECT_EQ(got, want) << got.dump(2);
}

TEST(Evaluate, IdenticalFilesScorePerfectBleu) {
  arn::EvaluateConfig cfg;
  cfg.generated = cfg.test = kData / "test.txt";
  std::ostringstream out, log;
  ASSERT_EQ(arn::cmd_evaluate(cfg, out, log), arn::kExitOk);
  const auto j = nlohmann::json::parse(out.str());
  EXPECT_EQ(j["bleu"]["2"], 100.0);
  EXPECT_EQ(j["bleu"]["3"], 100.0);
  EXPECT_EQ(j["fc"], j["diversity"]);
  EXPECT_EQ(j["samples"], 3);
}

TEST(Evaluate, Schema) {
  arn::EvaluateConfig cfg;
  cfg.generated = kData / "generated.txt";
  cfg.test = kData / "test.txt";
  cfg.orders = {1, 4};
  cfg.corpus_bleu = true;
  std::ostringstream out, log;
  ASSERT_EQ(arn::cmd_evaluate(cfg, out, log), arn::kExitOk);
  const auto j = nlohmann::json::parse(out.str());
  for (const char* family : {"bleu", "fc", "diversity"}) {
    ASSERT_TRUE(j.at(family).is_object());
    EXPECT_EQ(j[family].size(), 2u);
    for (const char* n : {"1", "4"}) {
      const double v = j[family].at(n);
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 100.0);
    }
  }
}

TEST(Evaluate, EmptyGeneratedIsInputError) {
  const auto empty = workdir() / "empty.txt";
  spit(empty, "");
  arn::EvaluateConfig cfg;
  cfg.generated = empty;
  cfg.test = kData / "test.txt";
  std::ostringstream out, log;
  EXPECT_EQ(arn::cmd_evaluate(cfg, out, log), arn::kExitInput);
  EXPECT_NE(log.str().find("no generated sentences"), std::string::npos);
  cfg.generated = workdir() / "absent.txt";
  EXPECT_EQ(arn::cmd_evaluate(cfg, out, log), arn::kExitInput);
}

TEST(GradCheck, DeskPresetPasses) {
  arn::GradCheckConfig cfg;
  cfg.max_coords = 6;
  std::ostringstream out, log;
  ASSERT_EQ(arn::cmd_gradcheck(cfg, out, log), arn::kExitOk) << out.str() << log.str();
  const auto j = nlohmann::json::parse(out.str());
  EXPECT_TRUE(j["pass"].get<bool>());
  EXPECT_LE(j["max_error"].get<double>(), arn::kGradCheckThreshold);
  for (const char* loss : {"elbo", "discriminator", "generator", "generator_non_saturating"})
    EXPECT_TRUE(j["losses"].contains(loss)) << loss;
}

TEST(GradCheck, UnknownPresetIsInputError) {
  arn::GradCheckConfig cfg;
  cfg.preset = "tiny";
  std::ostringstream out, log;
  EXPECT_EQ(arn::cmd_gradcheck(cfg, out, log), arn::kExitInput);
}

TEST(DivLab, TwoOutcomes) {
  std::ostringstream out, log;
  ASSERT_EQ(arn::cmd_divlab({100, 2, 7}, out, log), arn::kExitOk);
  const auto j = nlohmann::json::parse(out.str());
  EXPECT_EQ(j["trials"], 100);
  EXPECT_LE(j["identity_max_gap"].get<double>(), 1e-10);
  EXPECT_LE(j["dstar_max_err"].get<double>(), 1e-4);
  EXPECT_LE(j["nash_tv"].get<double>(), 1e-3);
}

TEST(DivLab, BadSettingsAreInputErrors) {
  std::ostringstream out, log;
  EXPECT_EQ(arn::cmd_divlab({0, 4, 0}, out, log), arn::kExitInput);
  EXPECT_EQ(arn::cmd_divlab({10, 1, 0}, out, log), arn::kExitInput);
}
