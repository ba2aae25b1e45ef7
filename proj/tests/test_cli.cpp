#include "piano/cli.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace piano::cli {
namespace {

namespace fs = std::filesystem;

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "piano_cli");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("piano_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  fs::path dir_;
};

int count_lines(const std::string& s) { return static_cast<int>(std::count(s.begin(), s.end(), '\n')); }

TEST_F(CliTest, IncompatibleSolverAndRegularizer) {
  const auto r = invoke({"train", "--synth", "n=20,d=3,m=2", "--solver", "irls", "--reg", "l1",
                         "--lambda", "0.5"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("incompatible"), std::string::npos) << r.err;
}

TEST_F(CliTest, UsageErrors) {
  EXPECT_EQ(invoke({"train"}).code, 1);
  EXPECT_EQ(invoke({"train", "--synth", "n=5,d=2"}).code, 1);
  EXPECT_EQ(invoke({"train", "--synth", "n=5,d=2,m=2", "--reg", "l1"}).code, 1);
  EXPECT_EQ(invoke({"train", "--synth", "n=5,d=2,m=2", "--solver", "coord-l1"}).code, 1);
  EXPECT_EQ(invoke({"train", "--synth", "n=5,d=2,m=2", "--solver", "piano,irls"}).code, 1);
  EXPECT_EQ(invoke({"compare", "--synth", "n=5,d=2,m=2", "--reg", "l0", "--beta", "1"}).code, 1);
  EXPECT_EQ(invoke({"train", "--data", path("nope.csv")}).code, 1);
  EXPECT_EQ(invoke({"bogus"}).code, 1);
}

TEST_F(CliTest, HelpExitsZero) {
  const auto r = invoke({"train", "--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("--solver"), std::string::npos);
}

TEST_F(CliTest, TrainWritesWeightsAndTrace) {
  const auto r = invoke({"train", "--synth", "n=60,d=4,m=3", "--seed", "3", "--out", path("w.json"),
                         "--trace", path("t.csv")});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("converged=yes"), std::string::npos);
  std::ifstream wf(path("w.json"));
  const auto j = nlohmann::json::parse(wf);
  EXPECT_EQ(j.at("shape")[0], 3);
  EXPECT_EQ(j.at("shape")[1], 4);
  EXPECT_EQ(j.at("solver"), "piano");
  const auto trace = read_trace(path("t.csv"), TraceFormat::csv);
  ASSERT_GE(trace.size(), 2u);
  EXPECT_EQ(trace.front().iter, 0);
}

TEST_F(CliTest, TrainHitsIterationLimit) {
  const auto r = invoke({"train", "--synth", "n=60,d=4,m=3", "--max-iter", "2", "--tol", "1e-12",
                         "--trace", path("t.json")});
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(read_trace(path("t.json"), TraceFormat::json).size(), 3u);
}

TEST_F(CliTest, TrainFromCsvFile) {
  std::ofstream(path("d.csv")) << "x1,x2,y\n1,0,a\n0,1,b\n1,1,a\n-1,0,b\n";
  const auto r = invoke({"train", "--data", path("d.csv"), "--header", "--bias", "--reg", "l1",
                         "--lambda", "0.1", "--out", path("w.json")});
  EXPECT_NE(r.code, 1) << r.err;
  std::ifstream wf(path("w.json"));
  const auto j = nlohmann::json::parse(wf);
  EXPECT_EQ(j.at("shape")[1], 3);
  EXPECT_EQ(j.at("classes")[0], "a");
}

TEST_F(CliTest, NoOutputOnValidationFailure) {
  const auto r = invoke({"train", "--synth", "n=20,d=3,m=2", "--reg", "l0", "--beta", "7", "--out",
                         path("w.json")});
  EXPECT_EQ(r.code, 1);
  EXPECT_FALSE(fs::exists(path("w.json")));
  EXPECT_EQ(invoke({"train", "--synth", "n=20,d=3,m=2", "--out", path("missing/w.json")}).code, 1);
}

TEST_F(CliTest, BenchProducesOneRowPerSolverAndSize) {
  const auto r = invoke({"bench", "--synth", "n=50,d=5,m=3", "--solver", "piano,bohning",
                         "--sweep-d", "5,10,20", "--out", path("b.csv")});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(count_lines(r.out), 7);
  EXPECT_EQ(r.out.rfind("solver,n,d,m,iters,time_ms,reached\n", 0), 0u);
  std::ifstream f(path("b.csv"));
  std::string all((std::istreambuf_iterator<char>(f)), {});
  EXPECT_EQ(all, r.out);
}

TEST_F(CliTest, BenchTargetAtStartIsReachedImmediately) {
  const auto r = invoke({"bench", "--synth", "n=50,d=5,m=3", "--target-frac", "1.0"});
  EXPECT_EQ(r.code, 0) << r.err;
  std::istringstream rows(r.out);
  std::string line;
  std::getline(rows, line);
  while (std::getline(rows, line)) {
    EXPECT_NE(line.find(",0,"), std::string::npos) << line;
    EXPECT_NE(line.find("true"), std::string::npos) << line;
  }
}

TEST_F(CliTest, BenchIterationsAreDeterministic) {
  auto strip_time = [](const std::string& s) {
    std::istringstream in(s);
    std::string line, keep;
    while (std::getline(in, line)) {
      const auto f = detail::split(line, ',');
      keep += f[0] + f[4] + f[6] + "\n";
    }
    return keep;
  };
  const std::vector<std::string> args{"bench", "--synth", "n=50,d=5,m=3", "--seed", "4"};
  EXPECT_EQ(strip_time(invoke(args).out), strip_time(invoke(args).out));
}

TEST_F(CliTest, CompareConvexSolversAgree) {
  const auto r = invoke({"compare", "--synth", "n=100,d=10,m=3"});
  EXPECT_EQ(r.code, 0) << r.out << r.err;
  EXPECT_EQ(count_lines(r.out), 6);
}

TEST_F(CliTest, CompareL1AgainstCoordinateMM) {
  const auto r = invoke({"compare", "--synth", "n=50,d=10,m=2", "--reg", "l1", "--lambda", "0.5",
                         "--init", "zero"});
  EXPECT_EQ(r.code, 0) << r.out << r.err;
}

TEST_F(CliTest, CompareGateViolation) {
  const auto r = invoke({"compare", "--synth", "n=100,d=10,m=3", "--solver", "piano,irls", "--tol",
                         "1e-2", "--gate", "1e-15"});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.out.find("FAIL"), std::string::npos);
}

TEST_F(CliTest, ThreadsFallBackToEnvironment) {
  ::setenv("PIANO_THREADS", "3", 1);
  EXPECT_EQ(parse_command(4, std::array<const char*, 4>{"x", "train", "--synth", "n=5,d=2,m=2"}.data())
                .config.thread_count,
            3);
  ::setenv("PIANO_THREADS", "zero", 1);
  EXPECT_EQ(invoke({"train", "--synth", "n=5,d=2,m=2"}).code, 1);
  ::unsetenv("PIANO_THREADS");
  EXPECT_EQ(parse_command(4, std::array<const char*, 4>{"x", "train", "--synth", "n=5,d=2,m=2"}.data())
                .config.thread_count,
            1);
}

TEST_F(CliTest, SynthSpecParsing) {
  const auto s = detail::parse_synth("n=10,d=3,m=4,labels=uniform,bias=1");
  EXPECT_EQ(s.n, 10);
  EXPECT_EQ(s.d, 3);
  EXPECT_EQ(s.m, 4);
  EXPECT_EQ(s.label_mode, LabelMode::uniform_random);
  EXPECT_TRUE(s.append_bias);
  EXPECT_THROW(detail::parse_synth("n=10,d=3,m=1"), UsageError);
  EXPECT_THROW(detail::parse_synth("n=ten,d=3,m=2"), UsageError);
  EXPECT_THROW(detail::parse_synth("n=10,d=3,m=2,q=1"), UsageError);
}

}  // namespace
}  // namespace piano::cli
