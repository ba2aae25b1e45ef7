#include "piano/data_io.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

namespace piano {
namespace {

namespace fs = std::filesystem;

class TempDir : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("piano_io_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string write(const std::string& name, const std::string& body) {
    const auto path = (dir_ / name).string();
    std::ofstream(path) << body;
    return path;
  }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

using CsvTest = TempDir;
using LibsvmTest = TempDir;
using TraceTest = TempDir;

TEST_F(CsvTest, LabelsEncodedInFirstAppearanceOrder) {
  const auto data = load_csv(write("a.csv", "1.0,a\n2.0,b\n3.0,a\n"), -1, false);
  EXPECT_EQ(data.samples(), 3);
  EXPECT_EQ(data.dims(), 1);
  EXPECT_EQ(data.class_names, (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(data.class_indices(), (std::vector<int>{0, 1, 0}));
  EXPECT_EQ(data.features(2, 0), 3.0);
}

TEST_F(CsvTest, HeaderAndLeadingLabelColumn) {
  const auto data = load_csv(write("h.csv", "y,x1,x2\nup,1,2\ndown,3,4\n"), 0, true);
  EXPECT_EQ(data.samples(), 2);
  EXPECT_EQ(data.dims(), 2);
  EXPECT_EQ(data.features(1, 1), 4.0);
  EXPECT_EQ(data.class_names[0], "up");
}

TEST_F(CsvTest, IrisShapedFile) {
  std::string body = "sepal_length,sepal_width,petal_length,petal_width,species\n";
  const char* names[] = {"setosa", "versicolor", "virginica"};
  for (int k = 0; k < 150; ++k)
    body += std::to_string(4.0 + k * 0.01) + ",3.0,1.5,0.2," + names[k / 50] + "\n";
  const auto data = load_csv(write("iris.csv", body), -1, true, true);
  EXPECT_EQ(data.samples(), 150);
  EXPECT_EQ(data.dims(), 5);
  EXPECT_EQ(data.classes(), 3);
  EXPECT_TRUE((data.features.col(4).array() == 1.0).all());
  EXPECT_EQ(data.labels.colwise().sum(), (Eigen::RowVectorXd(3) << 50, 50, 50).finished());
}

TEST_F(CsvTest, QuotedFields) {
  const auto data = load_csv(write("q.csv", "\"1.5\",\"class, one\"\n2,two\n"), -1, false);
  EXPECT_EQ(data.class_names[0], "class, one");
  EXPECT_EQ(data.features(0, 0), 1.5);
}

TEST_F(CsvTest, SingleClassRejected) {
  EXPECT_THROW(load_csv(write("one.csv", "1,a\n2,a\n"), -1, false), ParseError);
}

TEST_F(CsvTest, DiagnosticsNameRowAndColumn) {
  try {
    load_csv(write("bad.csv", "1,2,a\n3,oops,b\n"), -1, false);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find(":2:"), std::string::npos) << what;
    EXPECT_NE(what.find("column 2"), std::string::npos) << what;
  }
  EXPECT_THROW(load_csv(write("ragged.csv", "1,2,a\n3,b\n"), -1, false), ParseError);
  EXPECT_THROW(load_csv(path("missing.csv"), -1, false), Error);
}

TEST_F(LibsvmTest, SparseLineExpands) {
  const auto data = load_libsvm(write("a.svm", "2 1:0.5 3:1.0\n1 2:-1\n"));
  EXPECT_EQ(data.dims(), 3);
  EXPECT_EQ(data.features(0, 0), 0.5);
  EXPECT_EQ(data.features(0, 1), 0.0);
  EXPECT_EQ(data.features(0, 2), 1.0);
  EXPECT_EQ(data.class_names, (std::vector<std::string>{"2", "1"}));
}

TEST_F(LibsvmTest, EmptyFeatureLineAndComments) {
  const auto data = load_libsvm(write("e.svm", "# header comment\n0\n1 2:3 # trailing\n"), 4);
  EXPECT_EQ(data.samples(), 2);
  EXPECT_EQ(data.dims(), 4);
  EXPECT_TRUE((data.features.row(0).array() == 0.0).all());
  EXPECT_EQ(data.features(1, 1), 3.0);
}

TEST_F(LibsvmTest, RejectsBadIndices) {
  EXPECT_THROW(load_libsvm(write("d.svm", "0 3:1 2:1\n1 1:1\n")), ParseError);
  EXPECT_THROW(load_libsvm(write("z.svm", "0 0:1\n1 1:1\n")), ParseError);
  EXPECT_THROW(load_libsvm(write("c.svm", "0 1-1\n1 1:1\n")), ParseError);
  EXPECT_THROW(load_libsvm(write("big.svm", "0 5:1\n1 1:1\n"), 3), ParseError);
}

TEST_F(LibsvmTest, WriteThenLoadIsBitExact) {
  SyntheticSpec spec;
  spec.n = 40;
  spec.d = 6;
  spec.m = 4;
  spec.seed = 9;
  auto data = synth_generate(spec).data;
  data.features(3, 2) = 0.0;
  data.features(5, 1) = 1.0 / 3.0;
  const auto p = path("round.svm");
  write_libsvm(data, p);
  const auto back = load_libsvm(p, data.dims());
  EXPECT_TRUE(back.features == data.features);
  EXPECT_EQ(back.class_indices().size(), data.class_indices().size());
  for (std::size_t j = 0; j < back.class_indices().size(); ++j)
    EXPECT_EQ(back.class_names[static_cast<std::size_t>(back.class_indices()[j])],
              data.class_names[static_cast<std::size_t>(data.class_indices()[j])]);
}

TEST(Synthetic, DeterministicPerSeed) {
  SyntheticSpec spec;
  spec.seed = 42;
  const auto a = synth_generate(spec);
  const auto b = synth_generate(spec);
  EXPECT_TRUE(a.data.features == b.data.features);
  EXPECT_TRUE(a.data.labels == b.data.labels);
  ASSERT_TRUE(a.true_weights);
  EXPECT_TRUE(*a.true_weights == *b.true_weights);
  spec.seed = 43;
  EXPECT_FALSE(synth_generate(spec).data.features == a.data.features);
}

TEST(Synthetic, UniformLabelsHaveExpectedFrequencies) {
  SyntheticSpec spec;
  spec.n = 20000;
  spec.d = 1;
  spec.m = 5;
  spec.label_mode = LabelMode::uniform_random;
  const auto prob = synth_generate(spec);
  EXPECT_FALSE(prob.true_weights);
  const double p = 0.2;
  const double sigma = std::sqrt(spec.n * p * (1 - p));
  for (Index i = 0; i < 5; ++i) EXPECT_NEAR(prob.data.labels.col(i).sum(), spec.n * p, 3 * sigma);
}

TEST(Synthetic, ZeroTruthGivesUniformLabels) {
  SyntheticSpec spec;
  spec.n = 20000;
  spec.d = 3;
  spec.m = 4;
  spec.truth = WeightMatrix::zeros(4, 3);
  const auto prob = synth_generate(spec);
  const double sigma = std::sqrt(spec.n * 0.25 * 0.75);
  for (Index i = 0; i < 4; ++i) EXPECT_NEAR(prob.data.labels.col(i).sum(), spec.n * 0.25, 3 * sigma);
}

TEST(Synthetic, ModelLabelsFollowTruth) {
  // A dominant class-0 weight on a positive feature should win most samples.
  SyntheticSpec spec;
  spec.n = 2000;
  spec.d = 1;
  spec.m = 2;
  WeightMatrix truth(2, 1);
  truth(0, 0) = 8.0;
  spec.truth = truth;
  const auto prob = synth_generate(spec);
  int agree = 0;
  for (Index j = 0; j < spec.n; ++j) {
    const int expected = prob.data.features(j, 0) > 0 ? 0 : 1;
    agree += prob.data.labels(j, expected) == 1.0;
  }
  EXPECT_GT(agree, 0.9 * spec.n);
}

TEST(Synthetic, BiasAndValidation) {
  SyntheticSpec spec;
  spec.append_bias = true;
  spec.d = 2;
  const auto data = synth_generate(spec).data;
  EXPECT_EQ(data.dims(), 3);
  EXPECT_TRUE((data.features.col(2).array() == 1.0).all());
  spec.m = 1;
  EXPECT_THROW(synth_generate(spec), Error);
}

TEST_F(TraceTest, EmptyTraceIsHeaderOnly) {
  const auto p = path("empty.csv");
  write_trace({}, p, TraceFormat::csv);
  std::ifstream in(p);
  std::string all((std::istreambuf_iterator<char>(in)), {});
  EXPECT_EQ(all, "iter,objective,wall_ms,nnz\n");
  EXPECT_TRUE(read_trace(p, TraceFormat::csv).empty());
}

TEST_F(TraceTest, CsvAndJsonRoundTrip) {
  const std::vector<TraceRecord> trace{{0, 76.07518257426588, 0.0, 30}, {1, 1.0 / 3.0, 0.125, 7}};
  for (auto fmt : {TraceFormat::csv, TraceFormat::json}) {
    const auto p = path(fmt == TraceFormat::csv ? "t.csv" : "t.json");
    write_trace(trace, p, fmt);
    EXPECT_EQ(read_trace(p, fmt), trace);
  }
  write_trace({trace[0]}, path("one.csv"), TraceFormat::csv);
  EXPECT_EQ(read_trace(path("one.csv"), TraceFormat::csv).size(), 1u);
}

TEST_F(TraceTest, BadRowsRejected) {
  EXPECT_THROW(read_trace(write("b.csv", "iter,objective,wall_ms,nnz\n1,x,0,0\n"), TraceFormat::csv),
               ParseError);
  EXPECT_THROW(read_trace(write("h.csv", "1,2,3,4\n"), TraceFormat::csv), ParseError);
}

TEST(WeightsJson, RoundTrip) {
  WeightMatrix W(2, 3);
  W(0, 1) = 0.1;
  W(1, 2) = -2.5;
  const auto j = weights_to_json(W, {"a", "b"});
  EXPECT_EQ(j.at("stacking"), "class-major");
  EXPECT_EQ(j.at("flat").size(), 6u);
  EXPECT_EQ(j.at("flat")[1].get<double>(), 0.1);
  EXPECT_TRUE(weights_from_json(j) == W);
}

}  // namespace
}  // namespace piano
