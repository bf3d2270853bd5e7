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

#include <boost/math/tools/toms748_solve.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "postsel/counting.hpp"
#include "postsel/errors.hpp"
#include "postsel/imperfections.hpp"
#include "postsel/parallel.hpp"
#include "postsel/qubit.hpp"
#include "postsel/units.hpp"
#include "postsel/weak.hpp"

namespace postsel {

/// The model linking θ to the postselected value: strength, postselection,
/// and optionally the imperfect gate (meter angle then follows from κ).
struct ModelParams {
  double kappa = 0.335;
  Sign postselect = Sign::minus;
  std::optional<ImperfectionParams> imperfections;
};

/// σ_w(θ) and derived quantities for a model, written as quadratic forms
/// q_x(θ) = <ψ(θ)|A_x|ψ(θ)> of the per-attempt postselected elements.
class SigmaModel {
 public:
  explicit SigmaModel(const ModelParams& params) : params_(params), strength_(params.kappa) {
    if (!(params.kappa > 0.0)) throw Error(ErrorCode::ZeroStrength, "model requires kappa > 0");
    if (params.imperfections) {
      const SignalPovm povm = signal_povm(strength_.meter_angle(), *params.imperfections);
      a0_ = povm(params.postselect, Sign::plus);
      a1_ = povm(params.postselect, Sign::minus);
    } else {
      const KrausPair m = kraus_operators(strength_);
      const Vector2c phi = PureQubit::diagonal(params.postselect).vector();
      const Matrix2c proj = phi * phi.adjoint();
      a0_ = m.m0.cast<Complex>() * proj * m.m0.cast<Complex>();
      a1_ = m.m1.cast<Complex>() * proj * m.m1.cast<Complex>();
    }
  }

  const ModelParams& params() const { return params_; }
  Strength strength() const { return strength_; }

  double value(double theta) const {
    const Forms f = forms(theta);
    return (f.q0 - f.q1) / (strength_.kappa() * f.total());
  }

  double slope(double theta) const {
    const Forms f = forms(theta);
    const double n = f.q0 - f.q1;
    const double dn = f.dq0 - f.dq1;
    const double d = f.total();
    const double dd = f.dq0 + f.dq1;
    return (dn * d - n * dd) / (strength_.kappa() * d * d);
  }

  ConditionalProbabilities conditional(double theta) const {
    const Forms f = forms(theta);
    return conditional_probabilities(f.q0, f.q1);
  }

  /// p_0 + p_1 per attempt.
  double postselection_fraction(double theta) const {
    const Forms f = forms(theta);
    return f.q0 + f.q1;
  }

  /// Fisher information of the conditional pair, rad^-2.
  double fisher(double theta) const {
    const Forms f = forms(theta);
    const auto pc = conditional_probabilities(f.q0, f.q1);
    if (!(pc.pc0 > kProbabilityFloor && pc.pc1 > kProbabilityFloor)) {
      throw Error(ErrorCode::DegenerateConditional, "a conditional probability vanishes; Fisher information undefined");
    }
    const double d = f.total();
    const double dpc0 = (f.dq0 * d - f.q0 * (f.dq0 + f.dq1)) / (d * d);
    return dpc0 * dpc0 / (pc.pc0 * pc.pc1);
  }

 private:
  struct Forms {
    double q0, q1, dq0, dq1;
    double total() const { return q0 + q1; }
  };

  Forms forms(double theta) const {
    const Vector2c psi(std::cos(2.0 * theta), std::sin(2.0 * theta));
    const Vector2c dpsi(-2.0 * std::sin(2.0 * theta), 2.0 * std::cos(2.0 * theta));
    Forms f;
    f.q0 = psi.dot(a0_ * psi).real();
    f.q1 = psi.dot(a1_ * psi).real();
    f.dq0 = 2.0 * dpsi.dot(a0_ * psi).real();
    f.dq1 = 2.0 * dpsi.dot(a1_ * psi).real();
    if (!(f.total() > kProbabilityFloor)) {
      throw Error(ErrorCode::ZeroPostselection, "postselection probability vanishes at this theta");
    }
    return f;
  }

  ModelParams params_;
  Strength strength_;
  Matrix2c a0_;
  Matrix2c a1_;
};

/// Interval of θ (rad) on which σ_w(θ) is strictly monotone.
struct Branch {
  double lo = 0.0;
  double hi = 0.0;
  bool increasing = true;

  bool contains(double theta) const { return theta >= lo && theta <= hi; }
};

struct CalibrationCurve {
  ModelParams model;
  double step = 0.0;
  std::vector<double> theta_grid;    // rad, strictly increasing
  std::vector<double> sigma_values;  // σ_w at theta_grid
  std::vector<Branch> branches;      // monotone sub-branches covering the grid

  SigmaModel sigma_model() const { return SigmaModel(model); }
};

namespace detail {

// Root of the slope between a and b (sign change assumed), by bisection.
inline double turning_point(const SigmaModel& m, double a, double b) {
  double fa = m.slope(a);
  for (int it = 0; it < 200 && b - a > 1e-14; ++it) {
    const double mid = 0.5 * (a + b);
    const double fm = m.slope(mid);
    if ((fm > 0.0) == (fa > 0.0) && fm != 0.0) {
      a = mid;
      fa = fm;
    } else {
      b = mid;
    }
  }
  return 0.5 * (a + b);
}

inline int slope_sign(double v) { return (v > 0.0) - (v < 0.0); }

}  // namespace detail

/// Tabulates σ_w over [theta_lo, theta_hi] (rad) and splits the range at
/// the turning points of the model curve.
inline CalibrationCurve build_calibration(const ModelParams& model, double theta_lo, double theta_hi, double step) {
  if (!(step > 0.0)) throw Error(ErrorCode::InvalidArgument, "calibration step must be > 0");
  if (!(theta_hi > theta_lo)) throw Error(ErrorCode::InvalidArgument, "calibration range is empty");
  const SigmaModel m(model);
  CalibrationCurve curve;
  curve.model = model;
  curve.step = step;
  const auto n = static_cast<std::size_t>(std::floor((theta_hi - theta_lo) / step + 1e-9)) + 1;
  curve.theta_grid.reserve(n + 1);
  for (std::size_t i = 0; i < n; ++i) curve.theta_grid.push_back(theta_lo + static_cast<double>(i) * step);
  if (theta_hi - curve.theta_grid.back() > 1e-12) curve.theta_grid.push_back(theta_hi);
  curve.sigma_values.reserve(curve.theta_grid.size());
  std::vector<double> slopes;
  slopes.reserve(curve.theta_grid.size());
  for (double t : curve.theta_grid) {
    curve.sigma_values.push_back(m.value(t));
    slopes.push_back(m.slope(t));
  }

  double start = curve.theta_grid.front();
  int direction = detail::slope_sign(slopes.front());
  for (std::size_t i = 0; i + 1 < slopes.size(); ++i) {
    const int next = detail::slope_sign(slopes[i + 1]);
    if (direction == 0) {
      direction = next;
      continue;
    }
    if (next == 0 || next == direction) continue;
    const double tp = detail::turning_point(m, curve.theta_grid[i], curve.theta_grid[i + 1]);
    curve.branches.push_back({start, tp, direction > 0});
    start = tp;
    direction = next;
  }
  curve.branches.push_back({start, curve.theta_grid.back(), direction >= 0});
  return curve;
}

/// The tabulated branch containing theta, if any.
inline std::optional<Branch> branch_containing(const CalibrationCurve& curve, double theta) {
  for (const Branch& b : curve.branches) {
    if (b.contains(theta)) return b;
  }
  return std::nullopt;
}

/// Inverts σ_w(θ̂) = sigma_measured on [lo, hi] (rad) by bracketed
/// root-finding. The caller picks the branch; it must be monotone.
inline double estimate_theta(const CalibrationCurve& curve, double sigma_measured, double lo, double hi) {
  if (!(hi > lo)) throw Error(ErrorCode::InvalidArgument, "branch interval is empty");
  const SigmaModel m = curve.sigma_model();

  // Dense slope scan: a sign change means the interval spans a turning point.
  const double scan_step = std::min(curve.step > 0.0 ? curve.step : hi - lo, (hi - lo) / 64.0);
  const auto samples = static_cast<std::size_t>(std::ceil((hi - lo) / scan_step));
  int direction = 0;
  for (std::size_t i = 0; i <= samples; ++i) {
    const double t = std::min(hi, lo + static_cast<double>(i) * scan_step);
    const double sl = m.slope(t);
    if (std::abs(sl) < 1e-9) continue;  // flat endpoint of a branch
    const int sgn = detail::slope_sign(sl);
    if (direction == 0) {
      direction = sgn;
    } else if (sgn != direction) {
      throw Error(ErrorCode::AmbiguousBranch, "branch spans a turning point of sigma_w(theta)");
    }
  }

  const double f_lo = m.value(lo) - sigma_measured;
  const double f_hi = m.value(hi) - sigma_measured;
  if (f_lo == 0.0) return lo;
  if (f_hi == 0.0) return hi;
  if ((f_lo > 0.0) == (f_hi > 0.0)) {
    throw Error(ErrorCode::OutOfRange, "measured sigma_w " + std::to_string(sigma_measured) +
                                           " lies outside the branch range");
  }
  std::uintmax_t max_iter = 200;
  auto f = [&](double t) { return m.value(t) - sigma_measured; };
  auto tol = [](double a, double b) { return std::abs(b - a) <= 1e-13; };
  const auto [a, b] = boost::math::tools::toms748_solve(f, lo, hi, f_lo, f_hi, tol, max_iter);
  return 0.5 * (a + b);
}

inline double estimate_theta(const CalibrationCurve& curve, double sigma_measured, const Branch& branch) {
  return estimate_theta(curve, sigma_measured, branch.lo, branch.hi);
}

// Slopes below this make the inversion singular.
inline constexpr double kFlatSlope = 1e-9;

/// Δ²θ = Δ²σ_w/(∂σ_w/∂θ)², returned in deg².
inline double propagate_variance(const CalibrationCurve& curve, double theta_hat, double variance_sigma) {
  if (!(variance_sigma >= 0.0)) throw Error(ErrorCode::InvalidArgument, "variance must be >= 0");
  const double slope = curve.sigma_model().slope(theta_hat);
  if (!(std::abs(slope) >= kFlatSlope)) {
    throw Error(ErrorCode::FlatCurve, "sigma_w(theta) is flat at the estimate; variance propagation singular");
  }
  return rad2_to_deg2(variance_sigma / (slope * slope));
}

/// 1/(F_ps M_ps) in deg² for the ideal model.
inline double cramer_rao_variance(double theta, Strength s, Sign postselect, double m_ps) {
  if (!(m_ps > 0.0)) throw Error(ErrorCode::InvalidArgument, "m_ps must be > 0");
  return rad2_to_deg2(1.0 / (fisher_ps_definition(theta, s, postselect) * m_ps));
}

inline double cramer_rao_variance(const SigmaModel& model, double theta, double m_ps) {
  if (!(m_ps > 0.0)) throw Error(ErrorCode::InvalidArgument, "m_ps must be > 0");
  return rad2_to_deg2(1.0 / (model.fisher(theta) * m_ps));
}

struct EstimateResult {
  double theta_hat = 0.0;       // rad
  double variance_theta = 0.0;  // deg²
  double sigma_cr = 0.0;        // deg²
  double f_ps = 0.0;            // rad^-2
  double m_ps = 0.0;            // postselected events
  Sign postselect = Sign::minus;
};

struct TableRowSpec {
  double theta = 0.0;  // rad
  Sign postselect = Sign::minus;
};

/// θ rows of the comparison table: four per postselection.
inline std::vector<TableRowSpec> reference_table_rows() {
  std::vector<TableRowSpec> rows;
  for (double d : {20.0, 22.5, 25.0, 27.5}) rows.push_back({deg_to_rad(d), Sign::minus});
  for (double d : {67.5, 70.0, 72.5, 75.0}) rows.push_back({deg_to_rad(d), Sign::plus});
  return rows;
}

struct TableRow {
  TableRowSpec spec;
  EstimateResult result;  // averages over successful repetitions
  double empirical_variance = std::numeric_limits<double>::quiet_NaN();  // of θ̂, deg²
  std::size_t repetitions = 0;
  std::size_t failures = 0;
  double budget_lhs = 0.0;  // f_ps(θ) * per-attempt postselection fraction
  bool budget_ok = false;
  std::optional<Branch> branch;
  std::string error;  // first failure, empty if none

  bool ok() const { return repetitions > failures; }
};

/// One simulated acquisition turned into an estimate.
struct SingleRun {
  bool ok = false;
  double theta_hat = 0.0;
  double variance_theta = 0.0;
  double sigma_cr = 0.0;
  double m_ps = 0.0;
  std::string error;
};

/// For every row: simulate counts, estimate σ̂_w and its variance, invert on
/// the monotone branch containing the prepared θ, propagate Δ²θ, and compare
/// with the Cramér-Rao variance for the realised number of postselected
/// events. Failed repetitions are counted and reported, never dropped.
inline std::vector<TableRow> table1_pipeline(std::span<const TableRowSpec> rows, double kappa,
                                             const std::optional<ImperfectionParams>& imperfections,
                                             const AcquisitionConfig& acquisition, std::size_t repetitions) {
  acquisition.validate();
  if (repetitions == 0) throw Error(ErrorCode::InvalidArgument, "repetitions must be >= 1");
  const Strength strength(kappa);
  std::vector<TableRow> out;
  out.reserve(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    TableRow row;
    row.spec = rows[r];
    row.repetitions = repetitions;
    row.failures = repetitions;
    row.result.postselect = rows[r].postselect;
    try {
      const ModelParams model{kappa, rows[r].postselect, imperfections};
      const SigmaModel sigma(model);
      const CalibrationCurve curve = build_calibration(model, 0.0, deg_to_rad(90.0), deg_to_rad(0.1));
      const double theta = rows[r].theta;
      row.branch = branch_containing(curve, theta);
      if (!row.branch) throw Error(ErrorCode::OutOfRange, "theta outside the calibration range");
      row.result.f_ps = sigma.fisher(theta);
      row.budget_lhs = row.result.f_ps * sigma.postselection_fraction(theta);
      row.budget_ok = row.budget_lhs <= kQuantumFisher + 1e-9;

      const ProbabilityRecord probs = imperfections
                                          ? imperfect_joint_probs(theta, strength.meter_angle(), *imperfections)
                                          : kraus_probabilities(theta, strength);
      AcquisitionConfig row_config = acquisition;
      row_config.seed = derive_seed(acquisition.seed, r);
      const Branch branch = *row.branch;
      const std::vector<SingleRun> runs = parallel_map(repetitions, [&](std::size_t k) {
        SingleRun run;
        try {
          AcquisitionConfig c = row_config;
          c.seed = derive_seed(row_config.seed, k);
          const CountRecord counts = simulate_counts(probs, c);
          const WeakValueEstimate wv = weak_value_from_counts(counts, kappa, rows[r].postselect);
          run.theta_hat = estimate_theta(curve, wv.sigma_w, branch);
          run.variance_theta = propagate_variance(curve, run.theta_hat, wv.variance);
          run.m_ps = static_cast<double>(wv.postselected());
          run.sigma_cr = cramer_rao_variance(sigma, theta, run.m_ps);
          run.ok = true;
        } catch (const Error& e) {
          run.error = e.what();
        }
        return run;
      });

      double sum_theta = 0.0, sum_var = 0.0, sum_cr = 0.0, sum_m = 0.0;
      std::size_t good = 0;
      for (const SingleRun& run : runs) {
        if (!run.ok) {
          if (row.error.empty()) row.error = run.error;
          continue;
        }
        ++good;
        sum_theta += run.theta_hat;
        sum_var += run.variance_theta;
        sum_cr += run.sigma_cr;
        sum_m += run.m_ps;
      }
      row.failures = repetitions - good;
      if (good > 0) {
        const double g = static_cast<double>(good);
        row.result.theta_hat = sum_theta / g;
        row.result.variance_theta = sum_var / g;
        row.result.sigma_cr = sum_cr / g;
        row.result.m_ps = sum_m / g;
        if (good > 1) {
          double ss = 0.0;
          for (const SingleRun& run : runs) {
            if (run.ok) ss += (run.theta_hat - row.result.theta_hat) * (run.theta_hat - row.result.theta_hat);
          }
          row.empirical_variance = rad2_to_deg2(ss / (g - 1.0));
        }
      }
    } catch (const Error& e) {
      row.error = e.what();
    }
    out.push_back(std::move(row));
  }
  return out;
}

}  // namespace postsel
