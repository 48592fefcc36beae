#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "bilevel/cli.hpp"

using namespace bilevel;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "bilevel_cli");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string l;
  while (std::getline(ss, l)) out.push_back(l);
  return out;
}

std::vector<std::string> cells(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string c;
  while (std::getline(ss, c, ',')) out.push_back(c);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

TEST(CliParse, NumberLists) {
  EXPECT_EQ(cli::parse_number_list("1,2.5,-3e-1"), (std::vector<double>{1.0, 2.5, -0.3}));
  for (const char* bad : {"", "1,,2", "1,x", "1,", "nan", "1 2"}) EXPECT_THROW(cli::parse_number_list(bad), std::invalid_argument) << bad;
}

TEST(CliParse, Sweep) {
  const auto s = cli::parse_sweep("alpha=6,8");
  EXPECT_EQ(s.field, "alpha");
  EXPECT_EQ(s.values.size(), 2u);
  EXPECT_THROW(cli::parse_sweep("alpha"), std::invalid_argument);
  EXPECT_THROW(cli::parse_sweep("=1"), std::invalid_argument);
  EXPECT_THROW(cli::parse_sweep("omega=1"), std::invalid_argument);
}

TEST(CliParse, Overrides) {
  const auto c = cli::apply_overrides(SolverConfig{}, {{"alpha", 4.0}, {"n_first", 3.0}, {"alpha", 5.0}});
  EXPECT_EQ(c.alpha, 5.0);
  EXPECT_EQ(c.n_first, 3);
  EXPECT_THROW(cli::apply_overrides(SolverConfig{}, {{"bogus", 1.0}}), std::invalid_argument);
  EXPECT_THROW(cli::apply_overrides(SolverConfig{}, {{"alpha", 0.5}}), std::invalid_argument);
}

TEST(CliRun, UnknownOverrideRejectedAtParse) {
  const auto r = run({"check", "--bogus", "1"});
  EXPECT_EQ(r.code, 2);
  EXPECT_TRUE(r.out.empty());
}

TEST(CliRun, BadOverrideValues) {
  EXPECT_EQ(run({"check", "--n_first", "2.5"}).code, 2);
  EXPECT_EQ(run({"check", "--alpha", "abc"}).code, 2);
  EXPECT_EQ(run({"check", "--alpha", "1"}).code, 2);
}

TEST(CliRun, MissingSubcommand) { EXPECT_EQ(run({}).code, 2); }

TEST(CliRun, HelpExitsZero) {
  const auto r = run({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("stackelberg"), std::string::npos);
}

TEST(CliRun, CheckPassesAndIsDeterministic) {
  const auto a = run({"check", "--seed", "5"});
  const auto b = run({"check", "--seed", "5"});
  EXPECT_EQ(a.code, 0) << a.out;
  EXPECT_EQ(a.out, b.out);
  EXPECT_EQ(lines(a.out).size(), 6u);
  for (const auto& l : lines(a.out)) EXPECT_EQ(l.rfind("FAIL", 0), std::string::npos) << l;
}

TEST(CliRun, CheckWithZeroShift) {
  const auto r = run({"check", "--eps", "0"});
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("PASS damping"), std::string::npos);
}

TEST(CliRun, StackelbergAlphaSweep) {
  const auto r = run({"stackelberg", "--sweep", "alpha=6,8,10,12"});
  EXPECT_EQ(r.code, 0) << r.err;
  const auto ls = lines(r.out);
  ASSERT_EQ(ls.size(), 5u);
  EXPECT_EQ(ls[0], "alpha,q_l_closed_form,q_l_bilevel,abs_error,lower_solve_count,status");
  for (std::size_t i = 1; i < ls.size(); ++i) {
    const auto c = cells(ls[i]);
    ASSERT_EQ(c.size(), 6u);
    EXPECT_LE(std::stod(c[3]), 1e-3);
    EXPECT_EQ(c[5], "ok");
  }
}

TEST(CliRun, StackelbergSingletonAndDeterminism) {
  const auto a = run({"stackelberg", "--sweep", "delta_f=2"});
  const auto b = run({"stackelberg", "--sweep", "delta_f=2"});
  EXPECT_EQ(lines(a.out).size(), 2u);
  EXPECT_EQ(a.out, b.out);
}

TEST(CliRun, StackelbergRejectsInvalidRow) {
  const auto r = run({"stackelberg", "--sweep", "beta=-1,1"});
  EXPECT_EQ(r.code, 1);
  const auto ls = lines(r.out);
  ASSERT_EQ(ls.size(), 3u);
  const auto bad = cells(ls[1]);
  ASSERT_EQ(bad.size(), 6u);
  EXPECT_EQ(bad[5].rfind("rejected", 0), 0u) << ls[1];
  EXPECT_EQ(cells(ls[2])[5], "ok");
}

TEST(CliRun, RobustNoneWritesOneProfile) {
  const auto r = run({"robust", "--mode", "none"});
  EXPECT_EQ(r.code, 0) << r.err;
  const auto ls = lines(r.out);
  ASSERT_EQ(ls.size(), 22u);
  EXPECT_EQ(ls[0], "mode,sample,theta,u,worst_case");
  EXPECT_EQ(cells(ls[1])[0], "none");
}

TEST(CliRun, RobustBadMode) { EXPECT_EQ(run({"robust", "--mode", "gust"}).code, 2); }

TEST(CliRun, EstimateSingleRowScalesToOne) {
  const auto r = run({"estimate", "--mu", "0.19", "--samples", "6", "--repetitions", "1"});
  EXPECT_EQ(r.code, 0) << r.err;
  const auto ls = lines(r.out);
  ASSERT_EQ(ls.size(), 2u);
  const auto c = cells(ls[1]);
  ASSERT_EQ(c.size(), 10u);
  EXPECT_EQ(c[0], "0.19");
  EXPECT_EQ(c[1], "6");
  EXPECT_NEAR(std::stod(c[2]), 0.19, 0.01);
  EXPECT_EQ(c[4], "1.000");
  EXPECT_NEAR(std::stod(c[5]), 0.19, 0.01);
  EXPECT_EQ(c[7], "1.000");
  EXPECT_EQ(c[8], "25");
  EXPECT_EQ(c[9], "ok");
}

TEST(CliRun, EstimateRejectsBadCounts) {
  EXPECT_EQ(run({"estimate", "--mu", "0.19", "--samples", "0"}).code, 2);
  EXPECT_EQ(run({"estimate", "--mu", "0.19", "--samples", "2.5"}).code, 2);
  EXPECT_EQ(run({"estimate", "--mu", "0.19"}).code, 2);
}

TEST(CliRun, EstimateBadMuRowFailsButRunContinues) {
  const auto r = run({"estimate", "--mu", "1.5,0.19", "--samples", "4", "--repetitions", "1"});
  EXPECT_EQ(r.code, 1);
  const auto ls = lines(r.out);
  ASSERT_EQ(ls.size(), 3u);
  EXPECT_NE(ls[1].find("failed"), std::string::npos);
  EXPECT_EQ(cells(ls[1]).size(), 10u);
  EXPECT_EQ(cells(ls[2])[9], "ok");
}

TEST(CliRun, OutPathWritesFile) {
  const auto path = std::filesystem::temp_directory_path() / "bilevel_cli_test_out.csv";
  const auto r = run({"stackelberg", "--sweep", "alpha=10", "--out", path.string()});
  EXPECT_EQ(r.code, 0);
  EXPECT_TRUE(r.out.empty());
  std::ifstream f(path);
  std::stringstream ss;
  ss << f.rdbuf();
  EXPECT_EQ(lines(ss.str()).size(), 2u);
  std::filesystem::remove(path);
}
