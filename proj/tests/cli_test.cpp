#include "sbi/cli.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

namespace sbi::cli {
namespace {

namespace fs = std::filesystem;

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("sbi_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string p(const char* name) const { return (dir_ / name).string(); }

  static Outcome run(std::vector<std::string> args) {
    args.insert(args.begin(), "sbi");
    std::ostringstream out, err;
    const int code = dispatch(args, out, err);
    return {code, out.str(), err.str()};
  }

  void write(const char* name, const std::string& text) const { std::ofstream(p(name)) << text; }

  std::string slurp(const char* name) const {
    std::ifstream in(p(name), std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
  }

  // Key for n=2, theta=5 with three enrolled templates.
  void pipeline(bool test_mode = false) {
    std::vector<std::string> kg{"keygen", "--n", "2", "--theta", "5", "--seed", "3", "--out", p("key")};
    if (test_mode) kg.push_back("--test-mode");
    ASSERT_EQ(run(kg).code, kExitOk);
    write("db.csv", "id,f1,f2\n11,0,0\n12,3,3\n13,100,100\n");
    ASSERT_EQ(run({"enroll", "--key", p("key"), "--db", p("db"), "--in", p("db.csv")}).code, kExitOk);
    write("q.csv", "id,f1,f2\n1,1,1\n2,200,200\n");
  }

  fs::path dir_;
};

TEST_F(CliTest, KeygenIsDeterministicPerSeed) {
  ASSERT_EQ(run({"keygen", "--n", "4", "--theta", "9", "--seed", "5", "--out", p("a")}).code, kExitOk);
  ASSERT_EQ(run({"keygen", "--n", "4", "--theta", "9", "--seed", "5", "--out", p("b")}).code, kExitOk);
  ASSERT_EQ(run({"keygen", "--n", "4", "--theta", "9", "--seed", "6", "--out", p("c")}).code, kExitOk);
  EXPECT_EQ(slurp("a"), slurp("b"));
  EXPECT_NE(slurp("a"), slurp("c"));
}

TEST_F(CliTest, EnrollTokenizeIdentify) {
  pipeline();
  ASSERT_EQ(run({"tokenize", "--key", p("key"), "--in", p("q.csv"), "--id", "1", "--out", p("tok")}).code,
            kExitOk);
  const Outcome r = run({"identify", "--db", p("db"), "--token", p("tok")});
  EXPECT_EQ(r.code, kExitOk);
  EXPECT_EQ(r.out, "11\n12\n");

  const Outcome par = run({"identify", "--db", p("db"), "--token", p("tok"), "--jobs", "2"});
  EXPECT_EQ(par.out, r.out);
}

TEST_F(CliTest, NoMatchAndStrict) {
  pipeline();
  ASSERT_EQ(run({"tokenize", "--key", p("key"), "--in", p("q.csv"), "--id", "2", "--out", p("tok")}).code,
            kExitOk);
  const Outcome plain = run({"identify", "--db", p("db"), "--token", p("tok")});
  EXPECT_EQ(plain.code, kExitOk);
  EXPECT_EQ(plain.out, "");
  EXPECT_EQ(run({"identify", "--db", p("db"), "--token", p("tok"), "--strict"}).code, kExitNoMatch);
}

TEST_F(CliTest, TokenizeNeedsIdForSeveralRows) {
  pipeline();
  EXPECT_NE(run({"tokenize", "--key", p("key"), "--in", p("q.csv"), "--out", p("tok")}).code, kExitOk);
  EXPECT_NE(run({"tokenize", "--key", p("key"), "--in", p("q.csv"), "--id", "9", "--out", p("tok")}).code,
            kExitOk);
}

TEST_F(CliTest, UsageErrors) {
  EXPECT_EQ(run({}).code, kExitUsage);
  EXPECT_EQ(run({"frobnicate"}).code, kExitUsage);
  EXPECT_EQ(run({"keygen", "--n", "4"}).code, kExitUsage);
  EXPECT_EQ(run({"keygen", "--n", "0", "--theta", "1", "--out", p("k")}).code, kExitUsage);
  EXPECT_EQ(run({"--help"}).code, kExitOk);
}

TEST_F(CliTest, DataErrors) {
  pipeline();
  write("bad.csv", "id,f1,f2,f3\n1,1,1,1\n");
  EXPECT_EQ(run({"enroll", "--key", p("key"), "--db", p("db"), "--in", p("bad.csv")}).code, kExitData);

  std::string key = slurp("key");
  key[0] = 'Z';
  std::ofstream(p("key"), std::ios::binary) << key;
  EXPECT_EQ(run({"tokenize", "--key", p("key"), "--in", p("q.csv"), "--id", "1", "--out", p("t")}).code,
            kExitData);
  EXPECT_EQ(run({"identify", "--db", p("missing"), "--token", p("t")}).code, kExitData);
}

TEST_F(CliTest, UnsafeDebugOnlyForTestModeFiles) {
  pipeline(false);
  ASSERT_EQ(run({"tokenize", "--key", p("key"), "--in", p("q.csv"), "--id", "1", "--out", p("tok")}).code,
            kExitOk);
  EXPECT_EQ(run({"identify", "--db", p("db"), "--token", p("tok"), "--unsafe-debug"}).code, kExitData);

  fs::remove(p("db"));
  pipeline(true);
  ASSERT_EQ(run({"tokenize", "--key", p("key"), "--in", p("q.csv"), "--id", "1", "--out", p("tok")}).code,
            kExitOk);
  const Outcome r = run({"identify", "--db", p("db"), "--token", p("tok"), "--unsafe-debug"});
  EXPECT_EQ(r.code, kExitOk);
  std::istringstream lines(r.out);
  std::string line;
  std::getline(lines, line);
  EXPECT_EQ(line, "id,lambda,value");
  int rows = 0;
  while (std::getline(lines, line)) ++rows;
  EXPECT_EQ(rows, 3);
}

TEST_F(CliTest, InspectDescribesFiles) {
  pipeline();
  const Outcome r = run({"inspect", p("key"), p("db")});
  EXPECT_EQ(r.code, kExitOk);
  EXPECT_NE(r.out.find("type: key"), std::string::npos);
  EXPECT_NE(r.out.find("records: 3"), std::string::npos);
}

TEST_F(CliTest, AttackCommandsRun) {
  const Outcome ae = run({"attack-enroll", "--n", "4", "--trials", "3", "--disable-type1", "--csv", p("ae.csv")});
  EXPECT_EQ(ae.code, kExitOk);
  EXPECT_TRUE(fs::exists(p("ae.csv")));
  const Outcome ad = run({"attack-distinguish", "--n", "4", "--trials", "50", "--csv", p("ad.csv")});
  EXPECT_EQ(ad.code, kExitOk);
  EXPECT_NE(ad.out.find("token-norm"), std::string::npos);
}

TEST_F(CliTest, BenchWritesCsv) {
  const Outcome r = run({"bench", "--ns", "1,2", "--reps", "3", "--ops", "evaluate,token_gen", "--warm",
                     "--out", p("b.csv")});
  EXPECT_EQ(r.code, kExitOk) << r.err;
  const std::string csv = slurp("b.csv");
  EXPECT_NE(csv.find("n,op,reps,median_s,mean_s,stddev_s"), std::string::npos);
}

}  // namespace
}  // namespace sbi::cli
