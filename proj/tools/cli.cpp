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

#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include "postsel/contextuality.hpp"
#include "postsel/counting.hpp"
#include "postsel/estimation.hpp"
#include "postsel/units.hpp"
#include "postsel/weak.hpp"

namespace postsel::cli {

using json = nlohmann::ordered_json;

namespace {

const std::vector<std::pair<std::string, Command>> kCommands = {
    {"sweep-weak-value", Command::sweep_weak_value}, {"sweep-pusey", Command::sweep_pusey},
    {"sweep-fisher", Command::sweep_fisher},         {"simulate-counts", Command::simulate_counts},
    {"estimate", Command::estimate},                 {"table1", Command::table1},
    {"decompose", Command::decompose},
};

[[noreturn]] void config_error(const std::string& msg) { throw Error(ErrorCode::ConfigError, msg); }

std::string_view sign_name(Sign s) { return s == Sign::minus ? "minus" : "plus"; }

std::vector<Sign> signs_of(Postselect p) {
  switch (p) {
    case Postselect::minus:
      return {Sign::minus};
    case Postselect::plus:
      return {Sign::plus};
    default:
      return {Sign::minus, Sign::plus};
  }
}

std::vector<double> theta_grid_deg(const RunConfig& c) {
  const auto n = static_cast<std::size_t>(std::floor((c.theta_end - c.theta_start) / c.theta_step + 1e-9)) + 1;
  std::vector<double> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(c.theta_start + static_cast<double>(i) * c.theta_step);
  return out;
}

// Re-raises inner errors with the grid point attached.
template <typename Fn>
auto at_point(double theta_deg, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    throw Error(e.code(), e.message() + " (at theta_deg=" + format_number(theta_deg) + ")");
  }
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string postselect_name(Postselect p) {
  return p == Postselect::both ? "both" : (p == Postselect::minus ? "minus" : "plus");
}

Output make_output(const RunConfig& c, std::string schema) {
  Output out;
  out.schema = std::move(schema);
  auto& m = out.metadata;
  m.emplace_back("schema", out.schema);
  m.emplace_back("schema_version", std::to_string(kSchemaVersion));
  m.emplace_back("command", std::string(to_string(c.command)));
  if (c.kappa || c.mu_deg) {
    m.emplace_back("kappa", format_number(c.strength()));
    if (c.mu_deg) m.emplace_back("mu_deg", format_number(*c.mu_deg));
  }
  m.emplace_back("postselect", postselect_name(c.postselect));
  m.emplace_back("theta_start_deg", format_number(c.theta_start));
  m.emplace_back("theta_end_deg", format_number(c.theta_end));
  m.emplace_back("theta_step_deg", format_number(c.theta_step));
  if (c.imperfections) {
    m.emplace_back("visibility", format_number(c.imperfections->visibility));
    m.emplace_back("t_h", format_number(c.imperfections->t_h));
    m.emplace_back("t_v", format_number(c.imperfections->t_v));
  } else {
    m.emplace_back("imperfections", "none");
  }
  m.emplace_back("rate", format_number(c.acquisition.rate));
  m.emplace_back("duration", format_number(c.acquisition.duration));
  m.emplace_back("seed", std::to_string(c.acquisition.seed));
  m.emplace_back("kappa_uncertainty", format_number(c.acquisition.kappa_uncertainty));
  m.emplace_back("repetitions", std::to_string(c.repetitions));
  m.emplace_back("p_phi_convention", std::string(to_string(c.p_phi)));
  m.emplace_back("visibility_model", std::string(kVisibilityModel));
  m.emplace_back("transmission_convention", std::string(kTransmissionConvention));
  return out;
}

void stamp(Output& out) { out.metadata.emplace_back("generated_at", utc_timestamp()); }

double nan() { return std::numeric_limits<double>::quiet_NaN(); }

ProbabilityRecord model_probabilities(const RunConfig& c, double theta) {
  const Strength s(c.strength());
  if (c.imperfections) return imperfect_joint_probs(theta, s.meter_angle(), *c.imperfections);
  return kraus_probabilities(theta, s);
}

AcquisitionConfig point_acquisition(const RunConfig& c, std::size_t index) {
  AcquisitionConfig a = c.acquisition;
  a.seed = derive_seed(c.acquisition.seed, index);
  return a;
}

Output sweep_weak_value(const RunConfig& c) {
  Output out = make_output(c, c.simulate ? "weak_value_counts" : "weak_value");
  const auto signs = signs_of(c.postselect);
  out.columns.push_back("theta_deg");
  for (Sign s : signs) out.columns.push_back("sigma_w_" + std::string(sign_name(s)));
  for (Sign s : signs) out.columns.push_back("anomalous_" + std::string(sign_name(s)));
  if (c.simulate) {
    for (Sign s : signs) {
      const std::string n(sign_name(s));
      out.columns.insert(out.columns.end(), {"sigma_hat_" + n, "sigma_hat_" + n + "_sd", "n_ps_" + n});
    }
  }
  std::vector<SigmaModel> models;
  for (Sign s : signs) models.emplace_back(ModelParams{c.strength(), s, c.imperfections});
  const auto grid = theta_grid_deg(c);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double deg = grid[i];
    out.rows.push_back(at_point(deg, [&] {
      const double theta = deg_to_rad(deg);
      std::vector<Cell> row{deg};
      std::vector<double> values;
      for (const SigmaModel& m : models) values.push_back(m.value(theta));
      for (double v : values) row.emplace_back(v);
      for (double v : values) row.emplace_back(is_anomalous(v));
      if (c.simulate) {
        const CountRecord counts = simulate_counts(model_probabilities(c, theta), point_acquisition(c, i));
        for (Sign s : signs) {
          try {
            const WeakValueEstimate e = weak_value_from_counts(counts, c.strength(), s);
            row.insert(row.end(), {e.sigma_w, std::sqrt(e.variance), static_cast<std::int64_t>(e.postselected())});
          } catch (const Error& e) {
            if (e.code() != ErrorCode::EmptyChannel) throw;
            row.insert(row.end(), {nan(), nan(), std::int64_t{0}});
          }
        }
      }
      return row;
    }));
  }
  return out;
}

Output sweep_pusey(const RunConfig& c) {
  Output out = make_output(c, c.simulate ? "pusey_counts" : "pusey");
  const auto signs = signs_of(c.postselect);
  const Strength strength(c.strength());
  out.columns.push_back("theta_deg");
  for (Sign s : signs) {
    const std::string n(sign_name(s));
    out.columns.insert(out.columns.end(), {"i0_" + n, "i1_" + n});
  }
  if (c.simulate) {
    for (Sign s : signs) {
      const std::string n(sign_name(s));
      out.columns.insert(out.columns.end(), {"i0_hat_" + n, "i0_hat_" + n + "_sd", "i1_hat_" + n, "i1_hat_" + n + "_sd"});
    }
  }
  const auto grid = theta_grid_deg(c);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double deg = grid[i];
    out.rows.push_back(at_point(deg, [&] {
      const double theta = deg_to_rad(deg);
      const PureQubit psi = make_signal_state(theta);
      const ProbabilityRecord probs = model_probabilities(c, theta);
      std::vector<Cell> row{deg};
      for (Sign s : signs) {
        const PureQubit phi = PureQubit::diagonal(s);
        const double p_phi = c.p_phi == OverlapConvention::direct
                                 ? std::norm(phi.inner(psi))
                                 : infer_overlap_from_postselection(probs.postselection(s), strength);
        // Points with vanishing overlap are reported as nan, not dropped.
        if (!(p_phi > kProbabilityFloor)) {
          row.insert(row.end(), {nan(), nan()});
        } else if (!c.imperfections && c.p_phi == OverlapConvention::direct) {
          const PuseyRecord r = pusey_record(psi, phi, strength);
          row.insert(row.end(), {r.i0, r.i1});
        } else {
          row.insert(row.end(), {pusey_from_joint(probs.p0(s), p_phi, strength),
                                 pusey_from_joint(probs.p1(s), p_phi, strength)});
        }
      }
      if (c.simulate) {
        const CountRecord counts = simulate_counts(probs, point_acquisition(c, i));
        for (Sign s : signs) {
          try {
            const PuseyEstimate e = pusey_from_counts(counts, strength, s, c.p_phi,
                                                      std::norm(PureQubit::diagonal(s).inner(psi)), c.kappa_term);
            row.insert(row.end(), {e.i0, std::sqrt(e.var_i0), e.i1, std::sqrt(e.var_i1)});
          } catch (const Error& e) {
            if (e.code() != ErrorCode::OrthogonalPostselection && e.code() != ErrorCode::EmptyChannel) throw;
            row.insert(row.end(), {nan(), nan(), nan(), nan()});
          }
        }
      }
      return row;
    }));
  }
  return out;
}

Output sweep_fisher(const RunConfig& c) {
  Output out = make_output(c, "fisher");
  const auto signs = signs_of(c.postselect);
  out.columns.push_back("theta_deg");
  for (Sign s : signs) out.columns.push_back("f_ps_" + std::string(sign_name(s)));
  for (Sign s : signs) out.columns.push_back("budget_" + std::string(sign_name(s)));
  out.columns.push_back("q");
  std::vector<SigmaModel> models;
  for (Sign s : signs) models.emplace_back(ModelParams{c.strength(), s, c.imperfections});
  for (double deg : theta_grid_deg(c)) {
    out.rows.push_back(at_point(deg, [&] {
      const double theta = deg_to_rad(deg);
      std::vector<Cell> row{deg};
      std::vector<double> f;
      for (const SigmaModel& m : models) f.push_back(m.fisher(theta));
      for (double v : f) row.emplace_back(v);
      for (std::size_t k = 0; k < models.size(); ++k) row.emplace_back(f[k] * models[k].postselection_fraction(theta));
      row.emplace_back(quantum_fisher_information(theta));
      return row;
    }));
  }
  return out;
}

Output simulate(const RunConfig& c) {
  Output out = make_output(c, "counts");
  out.columns = {"theta_deg", "repetition", "seed", "n_mm", "n_mp", "n_pm", "n_pp"};
  const auto grid = theta_grid_deg(c);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double deg = grid[i];
    at_point(deg, [&] {
      const ProbabilityRecord probs = model_probabilities(c, deg_to_rad(deg));
      const AcquisitionConfig base = point_acquisition(c, i);
      const auto records = simulate_repetitions(probs, base, c.repetitions);
      for (std::size_t r = 0; r < records.size(); ++r) {
        const CountRecord& rec = records[r];
        out.rows.push_back({deg, static_cast<std::int64_t>(r), std::to_string(derive_seed(base.seed, r)),
                            static_cast<std::int64_t>(rec.n_mm), static_cast<std::int64_t>(rec.n_mp),
                            static_cast<std::int64_t>(rec.n_pm), static_cast<std::int64_t>(rec.n_pp)});
      }
      return 0;
    });
  }
  return out;
}

// ---- input ingestion ----

struct CountsInput {
  std::map<std::string, std::string> metadata;
  struct Row {
    std::optional<double> theta_deg;
    std::int64_t repetition = 0;
    CountRecord counts;
  };
  std::vector<Row> rows;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read input file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

double parse_double(const std::string& s, const std::string& what) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) config_error("cannot parse " + what + " from '" + s + "'");
  return v;
}

std::uint64_t parse_count(const std::string& s, const std::string& what) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) config_error("cannot parse " + what + " from '" + s + "'");
  return v;
}

CountsInput parse_counts_json(const std::string& text) {
  CountsInput in;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    config_error(std::string("input is not valid JSON: ") + e.what());
  }
  if (!j.contains("records") || !j["records"].is_array()) config_error("input JSON has no 'records' array");
  if (j.contains("metadata")) {
    for (auto& [k, v] : j["metadata"].items()) in.metadata[k] = v.is_string() ? v.get<std::string>() : v.dump();
  }
  for (const auto& r : j["records"]) {
    CountsInput::Row row;
    try {
      if (r.contains("theta_deg") && r["theta_deg"].is_number()) row.theta_deg = r["theta_deg"].get<double>();
      if (r.contains("repetition")) row.repetition = r["repetition"].get<std::int64_t>();
      row.counts.n_mm = r.at("n_mm").get<std::uint64_t>();
      row.counts.n_mp = r.at("n_mp").get<std::uint64_t>();
      row.counts.n_pm = r.at("n_pm").get<std::uint64_t>();
      row.counts.n_pp = r.at("n_pp").get<std::uint64_t>();
    } catch (const json::exception& e) {
      config_error(std::string("malformed count record: ") + e.what());
    }
    in.rows.push_back(row);
  }
  return in;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, sep)) out.push_back(field);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

CountsInput parse_counts_csv(const std::string& text) {
  CountsInput in;
  std::istringstream ss(text);
  std::string line;
  std::vector<std::string> header;
  while (std::getline(ss, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto colon = line.find(':');
      if (colon != std::string::npos) {
        std::string key = line.substr(1, colon - 1);
        std::string value = line.substr(colon + 1);
        key.erase(0, key.find_first_not_of(' '));
        value.erase(0, value.find_first_not_of(' '));
        in.metadata[key] = value;
      }
      continue;
    }
    if (header.empty()) {
      header = split(line, ',');
      continue;
    }
    const auto fields = split(line, ',');
    if (fields.size() != header.size()) config_error("CSV row has " + std::to_string(fields.size()) + " fields");
    std::map<std::string, std::string> f;
    for (std::size_t i = 0; i < header.size(); ++i) f[header[i]] = fields[i];
    auto need = [&](const char* k) {
      if (!f.count(k)) config_error(std::string("CSV input lacks column ") + k);
      return f[k];
    };
    CountsInput::Row row;
    if (f.count("theta_deg")) row.theta_deg = parse_double(f["theta_deg"], "theta_deg");
    if (f.count("repetition")) row.repetition = static_cast<std::int64_t>(parse_count(f["repetition"], "repetition"));
    row.counts.n_mm = parse_count(need("n_mm"), "n_mm");
    row.counts.n_mp = parse_count(need("n_mp"), "n_mp");
    row.counts.n_pm = parse_count(need("n_pm"), "n_pm");
    row.counts.n_pp = parse_count(need("n_pp"), "n_pp");
    in.rows.push_back(row);
  }
  if (header.empty()) config_error("CSV input has no header line");
  return in;
}

CountsInput read_counts(const std::string& path) {
  const std::string text = read_file(path);
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') return parse_counts_json(text);
  return parse_counts_csv(text);
}

Output estimate(const RunConfig& config) {
  if (config.input_path.empty()) config_error("estimate requires --input");
  const CountsInput input = read_counts(config.input_path);
  RunConfig c = config;
  if (!c.kappa && !c.mu_deg) {
    if (!input.metadata.count("kappa")) config_error("no --kappa/--mu given and the input carries no kappa");
    c.kappa = parse_double(input.metadata.at("kappa"), "kappa");
  }
  if (input.metadata.count("kappa_uncertainty")) {
    c.acquisition.kappa_uncertainty = parse_double(input.metadata.at("kappa_uncertainty"), "kappa_uncertainty");
  }
  if (c.branch_start.has_value() != c.branch_end.has_value()) {
    config_error("--branch-start and --branch-end go together");
  }
  Output out = make_output(c, "estimate");
  out.metadata.emplace_back("input", c.input_path);
  out.columns = {"theta_deg",     "repetition", "postselect",        "n0",   "n1",
                 "sigma_w",       "var_sigma_w", "theta_hat_deg",    "delta2_theta_deg2",
                 "m_ps",          "sigma_cr_deg2", "branch_start_deg", "branch_end_deg", "status"};
  for (Sign s : signs_of(c.postselect)) {
    const ModelParams model{c.strength(), s, c.imperfections};
    const CalibrationCurve curve = build_calibration(model, 0.0, deg_to_rad(90.0), deg_to_rad(0.1));
    const SigmaModel sigma = curve.sigma_model();
    for (const auto& row : input.rows) {
      std::optional<Branch> branch;
      if (c.branch_start) {
        branch = Branch{deg_to_rad(*c.branch_start), deg_to_rad(*c.branch_end), true};
      } else if (row.theta_deg) {
        branch = branch_containing(curve, deg_to_rad(*row.theta_deg));
      }
      if (!branch) config_error("no inversion branch: give --branch-start/--branch-end");
      CountRecord counts = row.counts;
      counts.config.kappa_uncertainty = c.acquisition.kappa_uncertainty;
      std::vector<Cell> cells{row.theta_deg ? *row.theta_deg : nan(), row.repetition, std::string(sign_name(s)),
                              static_cast<std::int64_t>(counts.n0(s)), static_cast<std::int64_t>(counts.n1(s))};
      try {
        const WeakValueEstimate wv = weak_value_from_counts(counts, c.strength(), s);
        const double theta_hat = estimate_theta(curve, wv.sigma_w, *branch);
        const double var = propagate_variance(curve, theta_hat, wv.variance);
        const double m_ps = static_cast<double>(wv.postselected());
        cells.insert(cells.end(), {wv.sigma_w, wv.variance, rad_to_deg(theta_hat), var, m_ps,
                                   cramer_rao_variance(sigma, theta_hat, m_ps), rad_to_deg(branch->lo),
                                   rad_to_deg(branch->hi), std::string("ok")});
      } catch (const Error& e) {
        cells.insert(cells.end(), {nan(), nan(), nan(), nan(), nan(), nan(), rad_to_deg(branch->lo),
                                   rad_to_deg(branch->hi), std::string(to_string(e.code()))});
      }
      out.rows.push_back(std::move(cells));
    }
  }
  return out;
}

struct Baseline {
  double delta2 = nan();
  double sigma_cr = nan();
};

std::map<std::pair<std::string, long>, Baseline> read_baseline(const std::string& path) {
  std::map<std::pair<std::string, long>, Baseline> out;
  if (path.empty()) return out;
  std::istringstream ss(read_file(path));
  std::string line;
  std::vector<std::string> header;
  while (std::getline(ss, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto f = split(line, ',');
    if (header.empty()) {
      header = f;
      continue;
    }
    std::map<std::string, std::string> m;
    for (std::size_t i = 0; i < header.size() && i < f.size(); ++i) m[header[i]] = f[i];
    for (const char* k : {"postselect", "theta_deg", "delta2_theta_deg2", "sigma_cr_deg2"}) {
      if (!m.count(k)) config_error(std::string("baseline file lacks column ") + k);
    }
    const long key = std::lround(parse_double(m["theta_deg"], "theta_deg") * 1000);
    out[{m["postselect"], key}] = {parse_double(m["delta2_theta_deg2"], "baseline"),
                                   parse_double(m["sigma_cr_deg2"], "baseline")};
  }
  return out;
}

Output table1(const RunConfig& c) {
  Output out = make_output(c, "table1");
  const auto baseline = read_baseline(c.baseline_path);
  if (!c.baseline_path.empty()) out.metadata.emplace_back("baseline", c.baseline_path);
  out.columns = {"postselect",    "theta_deg",  "theta_hat_deg",  "delta2_theta_deg2",
                 "empirical_delta2_theta_deg2", "sigma_cr_deg2",  "mean_m_ps",
                 "f_ps",          "budget_lhs", "budget_ok",      "repetitions",
                 "failures",      "baseline_delta2_theta_deg2",   "baseline_sigma_cr_deg2", "error"};
  std::vector<TableRowSpec> specs;
  for (const TableRowSpec& r : reference_table_rows()) {
    if (c.postselect == Postselect::both || signs_of(c.postselect)[0] == r.postselect) specs.push_back(r);
  }
  const auto rows = table1_pipeline(specs, c.strength(), c.imperfections, c.acquisition, c.repetitions);
  for (const TableRow& row : rows) {
    const double deg = rad_to_deg(row.spec.theta);
    const std::string sign(sign_name(row.spec.postselect));
    Baseline b;
    if (auto it = baseline.find({sign, std::lround(deg * 1000)}); it != baseline.end()) b = it->second;
    const bool any = row.ok();
    out.rows.push_back({sign, deg, any ? rad_to_deg(row.result.theta_hat) : nan(),
                        any ? row.result.variance_theta : nan(), row.empirical_variance,
                        any ? row.result.sigma_cr : nan(), any ? row.result.m_ps : nan(), row.result.f_ps,
                        row.budget_lhs, row.budget_ok, static_cast<std::int64_t>(row.repetitions),
                        static_cast<std::int64_t>(row.failures), b.delta2, b.sigma_cr, row.error});
  }
  return out;
}

PureQubit parse_phi(const std::string& s) {
  if (s == "minus" || s == "-") return PureQubit::minus();
  if (s == "plus" || s == "+") return PureQubit::plus();
  if (s == "zero" || s == "0" || s == "h") return PureQubit::zero();
  if (s == "one" || s == "1" || s == "v") return PureQubit::one();
  const auto parts = split(s, ',');
  if (parts.size() != 2) config_error("--phi takes plus, minus, zero, one or 'a0,a1'");
  return PureQubit::normalized(parse_double(parts[0], "phi"), parse_double(parts[1], "phi"));
}

json matrix_json(const Matrix2c& m) {
  json rows = json::array();
  for (int i = 0; i < 2; ++i) {
    json r = json::array();
    for (int j = 0; j < 2; ++j) r.push_back({m(i, j).real(), m(i, j).imag()});
    rows.push_back(r);
  }
  return rows;
}

Output decompose(const RunConfig& c) {
  Output out = make_output(c, "decomposition");
  const PureQubit phi = parse_phi(c.phi);
  const Strength s(c.strength());
  const SDecomposition d = decompose_consolidated(phi, s);
  out.metadata.emplace_back("phi", c.phi);
  out.columns = {"matrix", "row", "col", "re", "im"};
  const Matrix2c proj = phi.vector() * phi.vector().adjoint();
  for (const auto& [name, m] : {std::pair<std::string, Matrix2c>{"s", d.s_matrix}, {"e_d", d.e_d}, {"projector", proj}}) {
    for (int i = 0; i < 2; ++i) {
      for (int j = 0; j < 2; ++j) {
        out.rows.push_back({name, std::int64_t{i}, std::int64_t{j}, m(i, j).real(), m(i, j).imag()});
      }
    }
  }
  Eigen::SelfAdjointEigenSolver<Matrix2c> eig(d.e_d, Eigen::EigenvaluesOnly);
  json extra;
  extra["kappa"] = s.kappa();
  extra["p_d"] = d.p_d;
  extra["phi"] = {{phi.a0().real(), phi.a0().imag()}, {phi.a1().real(), phi.a1().imag()}};
  extra["s_matrix"] = matrix_json(d.s_matrix);
  extra["e_d"] = matrix_json(d.e_d);
  extra["e_d_eigenvalues"] = {eig.eigenvalues()(0), eig.eigenvalues()(1)};
  extra["reconstruction_error"] = (d.reconstruct(phi) - d.s_matrix).cwiseAbs().maxCoeff();
  out.extra_json = extra.dump();
  return out;
}

json cell_json(const Cell& cell) {
  return std::visit(
      [](const auto& v) -> json {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, double>) {
          if (!std::isfinite(v)) return nullptr;
        }
        return v;
      },
      cell);
}

std::string cell_csv(const Cell& cell) {
  return std::visit(
      [](const auto& v) -> std::string {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, double>) {
          return format_number(v);
        } else if constexpr (std::is_same_v<T, bool>) {
          return v ? "true" : "false";
        } else if constexpr (std::is_same_v<T, std::int64_t>) {
          return std::to_string(v);
        } else {
          return v;
        }
      },
      cell);
}

}  // namespace

std::string_view to_string(Command c) {
  for (const auto& [name, cmd] : kCommands) {
    if (cmd == c) return name;
  }
  return "unknown";
}

double RunConfig::strength() const {
  if (kappa) return *kappa;
  if (mu_deg) return std::sin(4.0 * deg_to_rad(*mu_deg));
  config_error("one of --kappa or --mu is required");
}

void RunConfig::validate() const {
  if (kappa && mu_deg) config_error("--kappa and --mu are mutually exclusive");
  if (!kappa && !mu_deg && command != Command::estimate) config_error("one of --kappa or --mu is required");
  if (kappa && !(*kappa >= 0.0 && *kappa <= 1.0)) config_error("--kappa must lie in [0, 1]");
  if (mu_deg && !(*mu_deg >= 0.0 && *mu_deg <= 22.5)) config_error("--mu must lie in [0, 22.5] degrees");
  if (!(theta_step > 0.0)) config_error("--theta-step must be > 0");
  if (!(theta_start < theta_end)) config_error("--theta-start must be below --theta-end");
  if (repetitions == 0) config_error("--repetitions must be >= 1");
  try {
    acquisition.validate();
    if (imperfections) imperfections->validate();
  } catch (const Error& e) {
    config_error(e.message());
  }
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0.0) v = 0.0;  // drop the sign of negative zero
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 12);
  std::string s(buf, res.ptr);
  // Trim trailing zeros of the mantissa for a compact, stable form.
  const auto e = s.find('e');
  std::string mant = s.substr(0, e);
  const std::string exp = e == std::string::npos ? "" : s.substr(e);
  if (mant.find('.') != std::string::npos) {
    while (mant.back() == '0') mant.pop_back();
    if (mant.back() == '.') mant.pop_back();
  }
  return mant + exp;
}

void write_csv(const Output& out, std::ostream& os) {
  for (const auto& [k, v] : out.metadata) os << "# " << k << ": " << v << '\n';
  for (std::size_t i = 0; i < out.columns.size(); ++i) os << (i ? "," : "") << out.columns[i];
  os << '\n';
  for (const auto& row : out.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << cell_csv(row[i]);
    os << '\n';
  }
}

void write_json(const Output& out, std::ostream& os) {
  json j;
  j["schema"] = out.schema;
  j["schema_version"] = kSchemaVersion;
  json meta = json::object();
  for (const auto& [k, v] : out.metadata) meta[k] = v;
  j["metadata"] = meta;
  j["columns"] = out.columns;
  json records = json::array();
  for (const auto& row : out.rows) {
    json r = json::object();
    for (std::size_t i = 0; i < row.size(); ++i) r[out.columns[i]] = cell_json(row[i]);
    records.push_back(std::move(r));
  }
  j["records"] = std::move(records);
  if (!out.extra_json.empty()) {
    const json extra = json::parse(out.extra_json);
    for (const auto& [k, v] : extra.items()) j[k] = v;
  }
  os << j.dump(2) << '\n';
}

RunConfig parse_args(int argc, const char* const* argv) {
  RunConfig c;
  CLI::App app{"Weak-measurement postselection simulator", "postsel"};
  app.set_config("--config", "", "INI-style key = value file with the same fields as the flags; flags win");

  std::string command;
  std::vector<std::string> names;
  for (const auto& [n, cmd] : kCommands) names.push_back(n);
  app.add_option("command", command, "What to run")->required()->check(CLI::IsMember(names));

  double kappa = 0.0, mu = 0.0;
  auto* kappa_opt = app.add_option("--kappa", kappa, "Measurement strength in [0, 1]");
  auto* mu_opt = app.add_option("--mu", mu, "Meter angle in degrees (kappa = sin 4mu)");
  kappa_opt->excludes(mu_opt);
  app.add_option("--theta-start", c.theta_start, "First signal angle, degrees");
  app.add_option("--theta-end", c.theta_end, "Last signal angle, degrees");
  app.add_option("--theta-step", c.theta_step, "Signal angle step, degrees");
  std::string post = "both";
  app.add_option("--postselect", post, "plus, minus or both")->check(CLI::IsMember({"plus", "minus", "both"}));

  ImperfectionParams imp;
  auto* vis_opt = app.add_option("--visibility", imp.visibility, "Two-photon interference visibility");
  auto* th_opt = app.add_option("--t-h", imp.t_h, "Central PPBS intensity transmission for H");
  auto* tv_opt = app.add_option("--t-v", imp.t_v, "Central PPBS intensity transmission for V");

  app.add_option("--rate", c.acquisition.rate, "Mean detected coincidences per second");
  app.add_option("--duration", c.acquisition.duration, "Acquisition time per point, seconds");
  app.add_option("--seed", c.acquisition.seed, "Root RNG seed");
  app.add_option("--kappa-uncertainty", c.acquisition.kappa_uncertainty, "One-sigma uncertainty on kappa");
  app.add_option("--repetitions", c.repetitions, "Repeated acquisitions per point");
  app.add_flag("--simulate", c.simulate, "Add simulated-count columns to sweeps");
  app.add_flag("--kappa-term", c.kappa_term, "Include the kappa uncertainty in contextuality error bars");

  std::string format = "csv";
  app.add_option("--format", format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
  app.add_option("--output", c.output_path, "Output file (default: stdout, or $POSTSEL_OUTPUT_DIR/<command>.<ext>)");
  app.add_option("--phi", c.phi, "Postselection state for decompose: plus, minus, zero, one or 'a0,a1'");
  std::string p_phi = "direct";
  app.add_option("--p-phi", p_phi, "Overlap convention: direct or inferred")
      ->check(CLI::IsMember({"direct", "inferred"}));
  app.add_option("--input", c.input_path, "Counts file (JSON or CSV from simulate-counts) for estimate");
  double bs = 0.0, be = 0.0;
  auto* bs_opt = app.add_option("--branch-start", bs, "Inversion branch start, degrees");
  auto* be_opt = app.add_option("--branch-end", be, "Inversion branch end, degrees");
  app.add_option("--baseline", c.baseline_path, "Reference variances CSV for table1");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    throw HelpRequested{app.help()};
  } catch (const CLI::ParseError& e) {
    config_error(e.what());
  }

  for (const auto& [n, cmd] : kCommands) {
    if (n == command) c.command = cmd;
  }
  if (kappa_opt->count()) c.kappa = kappa;
  if (mu_opt->count()) c.mu_deg = mu;
  c.postselect = post == "both" ? Postselect::both : (post == "minus" ? Postselect::minus : Postselect::plus);
  if (vis_opt->count() || th_opt->count() || tv_opt->count()) c.imperfections = imp;
  c.format = format == "json" ? Format::json : Format::csv;
  c.p_phi = p_phi == "inferred" ? OverlapConvention::inferred : OverlapConvention::direct;
  if (bs_opt->count()) c.branch_start = bs;
  if (be_opt->count()) c.branch_end = be;
  c.validate();
  return c;
}

Output execute(const RunConfig& c) {
  Output out;
  switch (c.command) {
    case Command::sweep_weak_value:
      out = sweep_weak_value(c);
      break;
    case Command::sweep_pusey:
      out = sweep_pusey(c);
      break;
    case Command::sweep_fisher:
      out = sweep_fisher(c);
      break;
    case Command::simulate_counts:
      out = simulate(c);
      break;
    case Command::estimate:
      out = estimate(c);
      break;
    case Command::table1:
      out = table1(c);
      break;
    case Command::decompose:
      out = decompose(c);
      break;
  }
  stamp(out);
  return out;
}

int main(int argc, const char* const* argv, std::ostream& stdout_stream, std::ostream& err) {
  try {
    const RunConfig c = parse_args(argc, argv);
    const Output out = execute(c);
    std::string path = c.output_path;
    if (path.empty()) {
      if (const char* dir = std::getenv("POSTSEL_OUTPUT_DIR"); dir && *dir) {
        path = std::string(dir) + "/" + std::string(to_string(c.command)) + (c.format == Format::json ? ".json" : ".csv");
      }
    }
    std::ostringstream buffer;
    if (c.format == Format::json) {
      write_json(out, buffer);
    } else {
      write_csv(out, buffer);
    }
    if (path.empty()) {
      stdout_stream << buffer.str();
    } else {
      std::ofstream f(path, std::ios::binary);
      if (!f) throw Error(ErrorCode::IoError, "cannot open output file '" + path + "'");
      f << buffer.str();
      f.close();
      if (!f) throw Error(ErrorCode::IoError, "failed writing output file '" + path + "'");
    }
    return 0;
  } catch (const HelpRequested& h) {
    stdout_stream << h.text;
    return 0;
  } catch (const Error& e) {
    err << "postsel: error: " << e.what() << '\n';
    switch (e.code()) {
      case ErrorCode::ConfigError:
        return 2;
      case ErrorCode::IoError:
        return 3;
      default:
        return 4;
    }
  } catch (const std::exception& e) {
    err << "postsel: error: " << e.what() << '\n';
    return 4;
  }
}

}  // namespace postsel::cli
