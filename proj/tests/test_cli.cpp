// Copyright 2026 The GPA Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cli_runner.hpp"
#include "gpa/tensor_io.hpp"

namespace gpa {
namespace {

using testing::run_cli;
using testing::ScratchDir;
using testing::slurp;

const std::string kCli = GPA_CLI_PATH;

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    std::vector<std::string> fields;
    std::stringstream ls(line);
    std::string f;
    while (std::getline(ls, f, ',')) fields.push_back(f);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    rows.push_back(fields);
  }
  return rows;
}

std::size_t column(const std::vector<std::string>& header, const std::string& name) {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  ADD_FAILURE() << "missing column " << name;
  return 0;
}

TEST(CliGen, DeterministicBytesAndHeader) {
  ScratchDir dir("cli_gen");
  ASSERT_EQ(run_cli(kCli, "gen --c 1 --h 8 --w 8 --seed 7 --out " + (dir / "a.gpat"), dir).exit_code, 0);
  ASSERT_EQ(run_cli(kCli, "gen --c 1 --h 8 --w 8 --seed 7 --out " + (dir / "b.gpat"), dir).exit_code, 0);
  EXPECT_EQ(slurp(dir / "a.gpat"), slurp(dir / "b.gpat"));

  ASSERT_EQ(run_cli(kCli, "gen --c 1 --h 64 --w 64 --out " + (dir / "c.gpat"), dir).exit_code, 0);
  const std::string bytes = slurp(dir / "c.gpat");
  ASSERT_EQ(bytes.size(), 31u + 4096u * 8u);
  EXPECT_EQ(bytes.substr(0, 4), "GPAT");
  EXPECT_EQ(bytes[4], 1);
  EXPECT_EQ(bytes[5], 1);
  EXPECT_EQ(bytes[6], 3);
  const auto raw = io::load_raw(dir / "c.gpat");
  EXPECT_EQ(raw.dims, (std::vector<std::uint64_t>{1, 64, 64}));
}

TEST(CliGen, UnwritablePathFails) {
  ScratchDir dir("cli_gen_bad");
  const auto r = run_cli(kCli, "gen --h 2 --w 2 --out " + (dir / "missing/dir/x.gpat"), dir);
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.err.find("cannot open"), std::string::npos);
}

TEST(CliBench, DivisibilityErrorSurfaces) {
  ScratchDir dir("cli_div");
  const std::string f = dir / "x.gpat";
  ASSERT_EQ(run_cli(kCli, "gen --c 1 --h 7 --w 8 --out " + f, dir).exit_code, 0);
  const auto r = run_cli(kCli, "bench --q " + f + " --k " + f + " --v " + f + " --d 2", dir);
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.err.find("height (7) is not divisible by 2"), std::string::npos) << r.err;
}

TEST(CliBench, PivotPresetAt128) {
  ScratchDir dir("cli_pivot");
  const auto r = run_cli(kCli, "bench --preset pivot --synthetic 128 --csv " + (dir / "b.csv"), dir);
  ASSERT_EQ(r.exit_code, 0) << r.err;
  EXPECT_NE(r.out.find("GPA1024_12_64"), std::string::npos);
  EXPECT_NE(r.out.find("16,777,216"), std::string::npos);
  EXPECT_NE(r.out.find("786,432"), std::string::npos);
  EXPECT_NE(r.out.find("268,435,456"), std::string::npos);

  const auto rows = parse_csv(slurp(dir / "b.csv"));
  ASSERT_EQ(rows.size(), 3u);
  const auto& h = rows[0];
  EXPECT_EQ(rows[1][column(h, "phase1_affinity_elems")], "16777216");
  EXPECT_EQ(rows[1][column(h, "phase2_affinity_elems")], "786432");
  EXPECT_EQ(rows[2][0], "full_attention_baseline");
  EXPECT_EQ(rows[2][column(h, "phase2_affinity_elems")], "268435456");
  const double predicted = std::stod(rows[1][column(h, "predicted_peak_elems")]);
  const double measured = std::stod(rows[1][column(h, "measured_peak_elems")]);
  EXPECT_LE(measured, 2 * predicted);
  EXPECT_GE(2 * measured, predicted);
}

TEST(CliBench, DegenerateConfigPredictsFullAttention) {
  ScratchDir dir("cli_degen");
  const auto r = run_cli(kCli, "bench --synthetic 16 --d 1 --kappa 256 --m 1x1 --csv -", dir);
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const auto csv = r.out.substr(r.out.find("name,h,w"));
  const auto rows = parse_csv(csv);
  ASSERT_EQ(rows.size(), 3u);
  const auto col = column(rows[0], "phase2_affinity_elems");
  EXPECT_EQ(rows[1][col], "65536");
  EXPECT_EQ(rows[1][col], rows[2][col]);
}

TEST(CliBench, RerunIsByteIdenticalAndReadsFloatFiles) {
  ScratchDir dir("cli_bench_det");
  for (const char* n : {"q", "k", "v"}) {
    ASSERT_EQ(run_cli(kCli, std::string("gen --c 2 --h 16 --w 16 --dtype f32 --seed ") + (n[0] == 'q' ? "1" : n[0] == 'k' ? "2" : "3") +
                                " --out " + (dir / (std::string(n) + ".gpat")),
                      dir)
                  .exit_code,
              0);
  }
  const std::string args = "bench --q " + (dir / "q.gpat") + " --k " + (dir / "k.gpat") + " --v " + (dir / "v.gpat") +
                           " --d 2 --m 2x2 --kappa 3";
  const auto a = run_cli(kCli, args, dir);
  const auto b = run_cli(kCli, args, dir);
  ASSERT_EQ(a.exit_code, 0) << a.err;
  EXPECT_EQ(a.out, b.out);
  EXPECT_NE(a.out.find("GPA4_3_8"), std::string::npos);
}

TEST(CliBench, ConflictingFlagsAreUsageErrors) {
  ScratchDir dir("cli_usage");
  EXPECT_EQ(run_cli(kCli, "bench --synthetic 8 --preset pivot --d 2", dir).exit_code, 2);
  EXPECT_EQ(run_cli(kCli, "bench --synthetic 8 --kappa 999", dir).exit_code, 2);
  EXPECT_EQ(run_cli(kCli, "bench", dir).exit_code, 2);
  EXPECT_EQ(run_cli(kCli, "", dir).exit_code, 2);
  EXPECT_EQ(run_cli(kCli, "frobnicate", dir).exit_code, 2);
  EXPECT_EQ(run_cli(kCli, "bench --synthetic 8 --m 3x", dir).exit_code, 2);
  EXPECT_EQ(run_cli(kCli, "--help", dir).exit_code, 0);
}

TEST(CliBench, ConfigFile) {
  ScratchDir dir("cli_cfg");
  {
    std::ofstream c(dir / "c.txt");
    c << "d=2\nm_h=2\nm_w=2\nkappa=3\n";
  }
  const auto a = run_cli(kCli, "bench --synthetic 16 --config " + (dir / "c.txt"), dir);
  const auto b = run_cli(kCli, "bench --synthetic 16 --d 2 --m 2x2 --kappa 3", dir);
  ASSERT_EQ(a.exit_code, 0) << a.err;
  EXPECT_EQ(a.out, b.out);
}

TEST(CliError, OversizeIsOracleInfeasible) {
  ScratchDir dir("cli_err_big");
  const auto r = run_cli(kCli, "error --size 128x128", dir);
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.err.find("oracle infeasible"), std::string::npos);
}

TEST(CliError, ExactRowIsZeroAndRerunIsIdentical) {
  ScratchDir dir("cli_err_det");
  const std::string args = "error --size 16x16 --d 2 --m 2x2 --kappa 1,exact --seeds 3 --csv ";
  ASSERT_EQ(run_cli(kCli, args + (dir / "a.csv"), dir).exit_code, 0);
  ASSERT_EQ(run_cli(kCli, args + (dir / "b.csv"), dir).exit_code, 0);
  const std::string a = slurp(dir / "a.csv");
  EXPECT_EQ(a, slurp(dir / "b.csv"));
  const auto rows = parse_csv(a);
  ASSERT_EQ(rows.size(), 7u);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i][0] != "GPA4_64_8") continue;
    EXPECT_LT(std::stod(rows[i][column(rows[0], "l2_error")]), 1e-10);
    EXPECT_LT(std::stod(rows[i][column(rows[0], "max_abs_error")]), 1e-10);
  }
}

TEST(CliError, KappaTrendOverTwentySeeds) {
  ScratchDir dir("cli_err_trend");
  const auto r = run_cli(kCli, "error --size 64x64 --d 2 --m 32x32 --kappa 1,2,4 --seeds 20", dir);
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const auto rows = parse_csv(r.out);
  ASSERT_EQ(rows.size(), 61u);
  const auto l2 = column(rows[0], "l2_error");
  std::map<std::string, double> mean;
  for (std::size_t i = 1; i < rows.size(); ++i) mean[rows[i][column(rows[0], "kappa")]] += std::stod(rows[i][l2]) / 20;
  EXPECT_LE(mean["2"], mean["1"]);
  EXPECT_LE(mean["4"], mean["2"]);
  EXPECT_EQ(rows[1][0], "GPA1024_1_32");
}

TEST(CliGradcheck, FullPassesAndThresholdFails) {
  ScratchDir dir("cli_grad");
  const auto r = run_cli(kCli, "gradcheck --which full --shape 2x3x3", dir);
  EXPECT_EQ(r.exit_code, 0) << r.out;
  EXPECT_NE(r.out.find("result: PASS"), std::string::npos);
  const auto pos = r.out.find("max_rel_error: ");
  ASSERT_NE(pos, std::string::npos);
  EXPECT_LT(std::stod(r.out.substr(pos + 15)), 1e-6);

  const auto f = run_cli(kCli, "gradcheck --which full --shape 2x3x3 --threshold 1e-30", dir);
  EXPECT_EQ(f.exit_code, 1);
  EXPECT_NE(f.out.find("result: FAIL"), std::string::npos);
}

TEST(CliGradcheck, GpaExactMatchesFull) {
  ScratchDir dir("cli_grad_gpa");
  const auto r = run_cli(kCli, "gradcheck --which gpa --shape 1x8x8 --d 2 --m 2x2 --kappa 16", dir);
  ASSERT_EQ(r.exit_code, 0) << r.out << r.err;
  const auto pos = r.out.find("gpa_vs_full_max_rel_diff: ");
  ASSERT_NE(pos, std::string::npos);
  EXPECT_LT(std::stod(r.out.substr(pos + 26)), 1e-9);
}

TEST(CliGradcheck, ZeroCotangentReportsZeroGradients) {
  ScratchDir dir("cli_grad_zero");
  const auto r = run_cli(kCli, "gradcheck --which full --shape 2x2x2 --zero-cotangent --csv -", dir);
  ASSERT_EQ(r.exit_code, 0);
  const auto csv = r.out.substr(r.out.find("input,channel"));
  const auto rows = parse_csv(csv);
  ASSERT_EQ(rows.size(), 25u);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    EXPECT_EQ(std::stod(rows[i][4]), 0.0);
    EXPECT_EQ(std::stod(rows[i][5]), 0.0);
  }
  EXPECT_EQ(run_cli(kCli, "gradcheck --which both", dir).exit_code, 2);
}

TEST(CliViz, CsvJsonAndErrors) {
  ScratchDir dir("cli_viz");
  const auto c = run_cli(kCli, "viz --synthetic 8 --d 2 --m 2x2 --kappa 1 --positions '0,0;7,7' --top 4", dir);
  ASSERT_EQ(c.exit_code, 0) << c.err;
  const auto rows = parse_csv(c.out);
  ASSERT_EQ(rows.size(), 9u);
  EXPECT_EQ(rows[0][0], "query_row");
  double sum = 0.0;
  for (std::size_t i = 1; i <= 4; ++i) sum += std::stod(rows[i][6]);
  EXPECT_NEAR(sum, 1.0, 1e-12);  // top-n equals the dictionary size

  const auto j = run_cli(kCli, "viz --synthetic 8 --d 2 --m 2x2 --kappa 1 --positions '0,0;7,7' --top 4 --format json --out " +
                                   (dir / "v.json"),
                         dir);
  ASSERT_EQ(j.exit_code, 0);
  const auto doc = nlohmann::json::parse(slurp(dir / "v.json"));
  ASSERT_EQ(doc.size(), 2u);
  EXPECT_EQ(doc[1]["query"]["row"], 7);
  EXPECT_EQ(doc[1]["keys"].size(), 4u);
  EXPECT_EQ(doc[0]["keys"][0]["weight"].get<double>(), std::stod(rows[1][6]));

  const auto bad = run_cli(kCli, "viz --synthetic 8 --positions '2,2;9,0'", dir);
  EXPECT_EQ(bad.exit_code, 2);
  EXPECT_NE(bad.err.find("(9,0)"), std::string::npos);
  EXPECT_EQ(run_cli(kCli, "viz --synthetic 8 --positions 'a,b'", dir).exit_code, 2);
}

TEST(CliThreads, EnvironmentDoesNotChangeOutput) {
  ScratchDir dir("cli_threads");
  const std::string args = "viz --synthetic 16 --d 2 --m 4x4 --kappa 3 --positions '0,0;5,9;15,15' --top 12";
  const auto a = run_cli(kCli, args, dir, "GPA_THREADS=1");
  const auto b = run_cli(kCli, args, dir, "GPA_THREADS=8");
  const auto c = run_cli(kCli, args, dir, "GPA_THREADS=0");
  ASSERT_EQ(a.exit_code, 0);
  EXPECT_EQ(a.out, b.out);
  EXPECT_EQ(a.out, c.out);
}

}  // namespace
}  // namespace gpa
