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

#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "postsel/counting.hpp"
#include "postsel/imperfections.hpp"
#include "postsel/qubit.hpp"

namespace postsel::cli {

inline constexpr int kSchemaVersion = 1;

enum class Command { sweep_weak_value, sweep_pusey, sweep_fisher, simulate_counts, estimate, table1, decompose };
enum class Format { csv, json };
enum class Postselect { plus, minus, both };

std::string_view to_string(Command c);

/// Everything a run needs. Angles are degrees, as on the command line.
struct RunConfig {
  Command command = Command::sweep_weak_value;
  std::optional<double> kappa;
  std::optional<double> mu_deg;
  double theta_start = 0.0;
  double theta_end = 90.0;
  double theta_step = 0.5;
  Postselect postselect = Postselect::both;
  std::optional<ImperfectionParams> imperfections;
  AcquisitionConfig acquisition{2000.0, 5.0, 1, 0.008};
  std::size_t repetitions = 1;
  Format format = Format::csv;
  std::string output_path;  // empty: POSTSEL_OUTPUT_DIR/<command>.<ext>, else stdout
  std::string phi = "minus";
  OverlapConvention p_phi = OverlapConvention::direct;
  bool simulate = false;     // add simulated-count columns to sweeps
  bool kappa_term = false;   // fold κ uncertainty into contextuality error bars
  std::string input_path;
  std::optional<double> branch_start;
  std::optional<double> branch_end;
  std::string baseline_path;

  /// Measurement strength; estimate may fill it from its input instead.
  double strength() const;
  void validate() const;
};

/// A cell of tabular output.
using Cell = std::variant<double, std::int64_t, bool, std::string>;

/// Tabular result with a metadata header; `extra` holds structured JSON
/// (serialized) for outputs that are not purely tabular.
struct Output {
  std::string schema;
  std::vector<std::pair<std::string, std::string>> metadata;
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;
  std::string extra_json;
};

/// Raised by parse_args for --help; carries the usage text.
struct HelpRequested {
  std::string text;
};

/// Parses argv (argv[0] is the program name). Throws Error(ConfigError).
RunConfig parse_args(int argc, const char* const* argv);

/// Builds the output for a config; throws postsel::Error on failure.
Output execute(const RunConfig& config);

std::string format_number(double v);
void write_csv(const Output& out, std::ostream& os);
void write_json(const Output& out, std::ostream& os);

/// Parse, execute, write. Returns the process exit status:
/// 0 ok, 2 configuration error, 3 I/O error, 4 computation error.
int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace postsel::cli
