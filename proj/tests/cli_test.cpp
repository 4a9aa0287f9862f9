// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace {

namespace fs = std::filesystem;

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

const fs::path& scratch() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / "tarac_cli_test";
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Result run(const std::string& args) {
  const std::string name = ::testing::UnitTest::GetInstance()->current_test_info()->name();
  const auto out = scratch() / (name + ".stdout");
  const auto err = scratch() / (name + ".stderr");
  const std::string cmd = std::string("\"") + TARAC_CLI_PATH + "\" " + args + " >\"" +
                          out.string() + "\" 2>\"" + err.string() + "\"";
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

// Small model so each invocation stays well under a second.
const std::string kSmall =
    "--seed 5 --model.n_layers 3 --model.n_heads 2 --model.d_model 16 --model.vocab_size 64 "
    "--layers 1:3 --image-tokens 8 --prompt-tokens 4 ";

std::string line_starting(const std::string& prefix, const std::string& text) {
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    if (line.rfind(prefix, 0) == 0) return line;
  }
  return {};
}

std::size_t count_lines(const std::string& s) {
  std::size_t n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

TEST(Cli, GenerateWritesTokensAndTrace) {
  const auto trace = scratch() / "gen.jsonl";
  const auto r = run("generate " + kSmall + "--max-new-tokens 8 --trace-out " + trace.string());
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("generated: 8\n"), std::string::npos);
  EXPECT_NE(r.out.find("mean_image_mass: "), std::string::npos);
  EXPECT_NE(r.out.find("tpot_ms: "), std::string::npos);
  EXPECT_NE(r.out.find("model.seed = 5\n"), std::string::npos);
  EXPECT_EQ(count_lines(slurp(trace)), 1u + 8u * 2u);  // header + steps x layers
}

TEST(Cli, ZeroBetaOverrideReportsNoUplift) {
  const auto r = run("generate " + kSmall + "--max-new-tokens 4 --beta 0");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("uplift: 0.000000\n"), std::string::npos) << r.out;
}

TEST(Cli, MissingWeightsIsConfigError) {
  const auto r = run("generate --model.weights /no/such/file.ttwt");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("model.weights"), std::string::npos) << r.err;
}

TEST(Cli, BadValuesAreConfigErrors) {
  EXPECT_EQ(run("generate " + kSmall + "--alpha 2").code, 2);
  EXPECT_EQ(run("generate " + kSmall + "--update-rule sideways").code, 2);
  EXPECT_EQ(run("generate " + kSmall + "--tarac.nonsense 1").code, 2);
  EXPECT_EQ(run("generate --config /no/such/config.toml").code, 2);
  EXPECT_EQ(run("").code, 2);
}

TEST(Cli, ConfigFileWithOverridesAndSavedWeights) {
  const auto cfg = scratch() / "run.conf";
  const auto weights = scratch() / "w.ttwt";
  {
    std::ofstream out(cfg);
    out << "model.seed = 9\nmodel.n_layers = 2\nmodel.n_heads = 2\nmodel.d_model = 16\n"
        << "model.vocab_size = 64\nlayout.n_image_tokens = 6\nlayout.n_prompt_tokens = 3\n"
        << "tarac.layers = 0:2\nrun.max_new_tokens = 5\n";
  }
  const auto a = run("generate --config " + cfg.string() + " --beta 1.5 --save-weights " +
                     weights.string());
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_NE(a.out.find("tarac.beta = 1.5\n"), std::string::npos);
  EXPECT_NE(a.out.find("generated: 5\n"), std::string::npos);

  const auto b = run("generate --model.weights " + weights.string() +
                     " --layers 0:2 --image-tokens 6 --prompt-tokens 3 --max-new-tokens 5 "
                     "--beta 1.5 --run.seed 9");
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_EQ(line_starting("tokens: ", a.out), line_starting("tokens: ", b.out));
}

TEST(Cli, CompareAndAnalyze) {
  const auto trace = scratch() / "cmp.jsonl";
  const auto labels = scratch() / "labels.csv";
  const auto r = run("compare " + kSmall + "--max-new-tokens 6 --beta 1 --trace-out " + trace.string());
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("divergence_step: "), std::string::npos);

  const auto series = run("analyze --trace " + trace.string() + " --run tarac");
  ASSERT_EQ(series.code, 0) << series.err;
  EXPECT_EQ(count_lines(series.out), 7u);

  {
    std::ofstream out(labels);
    out << "step,word,class,multi_token\n1,cat,correct,false\n2,dog,hallucinated,false\n"
        << "4,cat,correct,false\n5,sky,correct,false\n";
  }
  const auto dens = run("analyze --mode densities --grid 16 --trace " + trace.string() +
                        " --labels " + labels.string());
  ASSERT_EQ(dens.code, 0) << dens.err;
  EXPECT_EQ(dens.out.rfind("kind,x,correct,hallucinated\n", 0), 0u);
  EXPECT_EQ(count_lines(dens.out), 1u + 2u * 16u);

  EXPECT_EQ(run("analyze --trace /no/such/trace.jsonl").code, 3);
  EXPECT_EQ(run("analyze --mode densities --trace " + trace.string()).code, 3);
}

TEST(Cli, BenchSelfComparison) {
  const auto r = run("bench " + kSmall + "--tarac.enabled false --repeats 2 --max-new-tokens 4");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("tpot_ratio: "), std::string::npos);
  EXPECT_NE(r.out.find("state_bytes: 0\n"), std::string::npos);
}

TEST(Cli, InitConfigTemplate) {
  const auto r = run("init-config");
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("model.seed = 0"), std::string::npos);
  EXPECT_NE(r.out.find("tarac.layers = 2:6"), std::string::npos);
}

}  // namespace
