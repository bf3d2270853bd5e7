// Copyright 2026 The postsel Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"

namespace postsel::cli {
namespace {

namespace fs = std::filesystem;

struct Result {
  int status = 0;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "postsel");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Result r;
  r.status = main(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream ss(text);
  for (std::string l; std::getline(ss, l);) out.push_back(l);
  return out;
}

std::string header_line(const std::string& csv) {
  for (const auto& l : lines(csv)) {
    if (!l.empty() && l[0] != '#') return l;
  }
  return "";
}

std::string without_timestamp(const std::string& text) {
  std::string out;
  for (const auto& l : lines(text)) {
    if (l.find("generated_at") == std::string::npos) out += l + "\n";
  }
  return out;
}

fs::path temp_dir() {
  const fs::path dir = fs::temp_directory_path() / ("postsel_cli_test_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TEST(CliSchema, GoldenHeaders) {
  EXPECT_EQ(header_line(run({"sweep-weak-value", "--kappa", "0.335", "--theta-step", "30"}).out),
            "theta_deg,sigma_w_minus,sigma_w_plus,anomalous_minus,anomalous_plus");
  EXPECT_EQ(header_line(run({"sweep-weak-value", "--kappa", "0.335", "--theta-step", "30", "--postselect", "plus"}).out),
            "theta_deg,sigma_w_plus,anomalous_plus");
  EXPECT_EQ(header_line(run({"sweep-weak-value", "--kappa", "0.335", "--theta-step", "30", "--simulate"}).out),
            "theta_deg,sigma_w_minus,sigma_w_plus,anomalous_minus,anomalous_plus,sigma_hat_minus,sigma_hat_minus_sd,"
            "n_ps_minus,sigma_hat_plus,sigma_hat_plus_sd,n_ps_plus");
  EXPECT_EQ(header_line(run({"sweep-pusey", "--kappa", "0.335", "--postselect", "both", "--theta-step", "30"}).out),
            "theta_deg,i0_minus,i1_minus,i0_plus,i1_plus");
  EXPECT_EQ(header_line(run({"sweep-pusey", "--kappa", "0.335", "--theta-step", "30", "--simulate"}).out),
            "theta_deg,i0_minus,i1_minus,i0_plus,i1_plus,i0_hat_minus,i0_hat_minus_sd,i1_hat_minus,i1_hat_minus_sd,"
            "i0_hat_plus,i0_hat_plus_sd,i1_hat_plus,i1_hat_plus_sd");
  EXPECT_EQ(header_line(run({"sweep-fisher", "--kappa", "0.335", "--theta-start", "1", "--theta-step", "30"}).out),
            "theta_deg,f_ps_minus,f_ps_plus,budget_minus,budget_plus,q");
  EXPECT_EQ(header_line(run({"simulate-counts", "--kappa", "0.335", "--theta-step", "30"}).out),
            "theta_deg,repetition,seed,n_mm,n_mp,n_pm,n_pp");
  EXPECT_EQ(header_line(run({"table1", "--kappa", "0.335", "--repetitions", "2"}).out),
            "postselect,theta_deg,theta_hat_deg,delta2_theta_deg2,empirical_delta2_theta_deg2,sigma_cr_deg2,mean_m_ps,"
            "f_ps,budget_lhs,budget_ok,repetitions,failures,baseline_delta2_theta_deg2,baseline_sigma_cr_deg2,error");
  EXPECT_EQ(header_line(run({"decompose", "--kappa", "0.2"}).out), "matrix,row,col,re,im");
}

TEST(CliSchema, MetadataHeader) {
  const auto out = lines(run({"sweep-pusey", "--kappa", "0.335", "--theta-step", "45", "--visibility", "0.78",
                              "--t-h", "0.98", "--t-v", "0.34", "--p-phi", "inferred"})
                             .out);
  const std::vector<std::string> expected = {
      "# schema: pusey",         "# schema_version: 1",  "# command: sweep-pusey",
      "# kappa: 0.335",          "# postselect: both",   "# theta_start_deg: 0",
      "# theta_end_deg: 90",     "# theta_step_deg: 45", "# visibility: 0.78",
      "# t_h: 0.98",             "# t_v: 0.34",          "# rate: 2000",
      "# duration: 5",           "# seed: 1",            "# kappa_uncertainty: 0.008",
      "# repetitions: 1",        "# p_phi_convention: inferred",
      "# visibility_model: coherent-dephased-mixture/v1", "# transmission_convention: intensity"};
  ASSERT_GT(out.size(), expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_EQ(out[i], expected[i]);
  EXPECT_EQ(out[expected.size()].rfind("# generated_at: ", 0), 0u);
}

TEST(CliSchema, ReferenceSweepValues) {
  const auto out = lines(run({"sweep-weak-value", "--kappa", "0.335", "--theta-start", "0", "--theta-end", "90",
                              "--theta-step", "0.5", "--postselect", "both", "--format", "csv"})
                             .out);
  std::vector<std::string> data;
  for (const auto& l : out) {
    if (!l.empty() && l[0] != '#') data.push_back(l);
  }
  ASSERT_EQ(data.size(), 182u);
  EXPECT_EQ(data[1], "0,1,1,false,false");
  EXPECT_EQ(data[46].substr(0, 5), "22.5,");
  EXPECT_EQ(data.back(), "90,1,1,false,false");
}

TEST(CliFormat, Numbers) {
  EXPECT_EQ(format_number(0.1), "0.1");
  EXPECT_EQ(format_number(1.0 / 3.0), "0.333333333333");
  EXPECT_EQ(format_number(-0.0), "0");
  EXPECT_EQ(format_number(1e-20), "1e-20");
  EXPECT_EQ(format_number(123456789012345.0), "1.23456789012e+14");
  EXPECT_EQ(format_number(std::numeric_limits<double>::quiet_NaN()), "nan");
}

TEST(CliDeterminism, IdenticalApartFromTimestamp) {
  for (const char* fmt : {"csv", "json"}) {
    const std::vector<std::string> args = {"simulate-counts", "--kappa", "0.335", "--theta-step", "5",
                                           "--repetitions", "4", "--seed", "99", "--format", fmt};
    const Result a = run(args);
    const Result b = run(args);
    ASSERT_EQ(a.status, 0) << a.err;
    EXPECT_EQ(without_timestamp(a.out), without_timestamp(b.out));
  }
  const std::vector<std::string> t = {"table1", "--kappa", "0.335", "--repetitions", "20", "--seed", "5"};
  EXPECT_EQ(without_timestamp(run(t).out), without_timestamp(run(t).out));
  auto other = t;
  other.back() = "6";
  EXPECT_NE(without_timestamp(run(t).out), without_timestamp(run(other).out));
}

TEST(CliRoundTrip, JsonAndCsvCountsFeedEstimate) {
  const fs::path dir = temp_dir();
  const std::string json_path = (dir / "counts.json").string();
  const std::string csv_path = (dir / "counts.csv").string();
  const std::vector<std::string> sim = {"simulate-counts", "--kappa", "0.335", "--theta-start", "20", "--theta-end",
                                        "25", "--theta-step", "2.5", "--repetitions", "5", "--seed", "3"};
  auto with = [&](std::vector<std::string> a, std::vector<std::string> extra) {
    a.insert(a.end(), extra.begin(), extra.end());
    return a;
  };
  ASSERT_EQ(run(with(sim, {"--format", "json", "--output", json_path})).status, 0);
  ASSERT_EQ(run(with(sim, {"--format", "csv", "--output", csv_path})).status, 0);

  const Result from_json = run({"estimate", "--input", json_path, "--postselect", "minus", "--format", "json"});
  ASSERT_EQ(from_json.status, 0) << from_json.err;
  const auto j = nlohmann::json::parse(from_json.out);
  EXPECT_EQ(j["schema"], "estimate");
  EXPECT_EQ(j["metadata"]["kappa"], "0.335");
  ASSERT_EQ(j["records"].size(), 15u);
  for (const auto& r : j["records"]) {
    EXPECT_EQ(r["status"], "ok");
    EXPECT_NEAR(r["theta_hat_deg"].get<double>(), r["theta_deg"].get<double>(), 1.0);
  }
  const Result from_csv = run({"estimate", "--input", csv_path, "--postselect", "minus", "--format", "json"});
  ASSERT_EQ(from_csv.status, 0) << from_csv.err;
  auto strip = [](nlohmann::json x) {
    x["metadata"].erase("generated_at");
    x["metadata"].erase("input");
    return x;
  };
  EXPECT_EQ(strip(j), strip(nlohmann::json::parse(from_csv.out)));

  // An explicit branch spanning a turning point is reported per row.
  const Result ambiguous = run({"estimate", "--input", json_path, "--postselect", "minus", "--branch-start", "5",
                                "--branch-end", "25", "--format", "json"});
  ASSERT_EQ(ambiguous.status, 0);
  EXPECT_EQ(nlohmann::json::parse(ambiguous.out)["records"][0]["status"], "AmbiguousBranch");
  fs::remove_all(dir);
}

TEST(CliDecompose, Unmeasured) {
  const Result r = run({"decompose", "--kappa", "0", "--phi", "minus", "--format", "json"});
  ASSERT_EQ(r.status, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["p_d"].get<double>(), 0.0);
  const auto& s = j["s_matrix"];
  EXPECT_NEAR(s[0][0][0].get<double>(), 0.5, 1e-15);
  EXPECT_NEAR(s[0][1][0].get<double>(), -0.5, 1e-15);
  EXPECT_NEAR(s[1][1][0].get<double>(), 0.5, 1e-15);
  EXPECT_LE(j["reconstruction_error"].get<double>(), 1e-12);
}

TEST(CliTable, Baseline) {
  const Result r = run({"table1", "--kappa", "0.335", "--repetitions", "20", "--baseline",
                        std::string(POSTSEL_DATA_DIR) + "/reference_variances.csv", "--format", "json"});
  ASSERT_EQ(r.status, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  ASSERT_EQ(j["records"].size(), 8u);
  const auto& row = j["records"][1];
  EXPECT_EQ(row["postselect"], "minus");
  EXPECT_EQ(row["theta_deg"].get<double>(), 22.5);
  EXPECT_EQ(row["baseline_delta2_theta_deg2"].get<double>(), 0.036);
  EXPECT_EQ(row["baseline_sigma_cr_deg2"].get<double>(), 0.33);
  for (const auto& rec : j["records"]) EXPECT_TRUE(rec["budget_ok"].get<bool>());
}

TEST(CliErrors, ExitCodes) {
  EXPECT_EQ(run({"sweep-weak-value"}).status, 2);
  EXPECT_EQ(run({"sweep-weak-value", "--kappa", "0.3", "--mu", "3"}).status, 2);
  EXPECT_EQ(run({"no-such-command", "--kappa", "0.3"}).status, 2);
  EXPECT_EQ(run({"sweep-weak-value", "--kappa", "0.3", "--theta-step", "0"}).status, 2);
  EXPECT_EQ(run({"sweep-weak-value", "--kappa", "0.3", "--bogus"}).status, 2);
  EXPECT_EQ(run({"sweep-weak-value", "--kappa", "0.3", "--visibility", "1.5"}).status, 2);
  EXPECT_EQ(run({"estimate", "--kappa", "0.3"}).status, 2);
  EXPECT_EQ(run({"estimate", "--input", "/nonexistent/counts.json"}).status, 3);
  EXPECT_EQ(run({"decompose", "--kappa", "0.3", "--output", "/nonexistent/dir/out.csv"}).status, 3);
  const Result inner = run({"sweep-fisher", "--kappa", "1", "--theta-end", "10", "--theta-step", "5"});
  EXPECT_EQ(inner.status, 4);
  EXPECT_NE(inner.err.find("DegenerateConditional"), std::string::npos);
  EXPECT_NE(inner.err.find("theta_deg=0"), std::string::npos);
  EXPECT_EQ(run({"--help"}).status, 0);
}

TEST(CliPusey, OrthogonalPointsAreNan) {
  const Result r = run({"sweep-pusey", "--kappa", "0.335", "--theta-start", "22.5", "--theta-end", "23",
                        "--postselect", "minus"});
  ASSERT_EQ(r.status, 0) << r.err;
  const auto l = lines(r.out);
  EXPECT_EQ(l[l.size() - 2], "22.5,nan,nan");
}

TEST(CliEnvironment, OutputDirectoryAndConfigFile) {
  const fs::path dir = temp_dir();
  ::setenv("POSTSEL_OUTPUT_DIR", dir.c_str(), 1);
  ASSERT_EQ(run({"decompose", "--kappa", "0.5"}).status, 0);
  ::unsetenv("POSTSEL_OUTPUT_DIR");
  EXPECT_TRUE(fs::exists(dir / "decompose.csv"));

  const fs::path ini = dir / "run.ini";
  std::ofstream(ini) << "kappa = 0.5\ntheta-step = 30\npostselect = minus\n";
  const Result from_file = run({"sweep-weak-value", "--config", ini.string()});
  ASSERT_EQ(from_file.status, 0) << from_file.err;
  EXPECT_NE(from_file.out.find("# kappa: 0.5\n"), std::string::npos);
  EXPECT_EQ(header_line(from_file.out), "theta_deg,sigma_w_minus,anomalous_minus");
  const Result flags_win = run({"sweep-weak-value", "--config", ini.string(), "--kappa", "0.2"});
  EXPECT_NE(flags_win.out.find("# kappa: 0.2\n"), std::string::npos);
  fs::remove_all(dir);
}

}  // namespace
}  // namespace postsel::cli
