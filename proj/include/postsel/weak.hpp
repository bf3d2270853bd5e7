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

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "postsel/errors.hpp"
#include "postsel/qubit.hpp"

namespace postsel {

// Quantum Fisher information of cos 2θ|0> + sin 2θ|1>, in rad^-2. The
// generator has unit variance and the phase advances at rate 2, so Q = 4·2².
inline constexpr double kQuantumFisher = 16.0;

// Pole guard for the closed-form Fisher information.
inline constexpr double kSaturationGuard = 1e-9;

// Values within this of ±1 count as on the spectrum boundary.
inline constexpr double kAnomalyTolerance = 1e-12;

struct WeakValueResult {
  double sigma_w = 0.0;
  double pc0 = 0.0;
  double pc1 = 0.0;
  Sign postselect = Sign::minus;

  /// Outside the spectrum [−1, 1] of Z.
  bool anomalous() const { return std::abs(sigma_w) > 1.0 + kAnomalyTolerance; }
};

struct FisherReport {
  double f_ps = 0.0;           // rad^-2
  double q = kQuantumFisher;   // rad^-2
  double m_ps_fraction = 0.0;  // p_0 + p_1
  double budget_lhs = 0.0;     // f_ps * m_ps_fraction
  double budget_rhs = 0.0;     // q * 1

  bool within_budget(double tol = 1e-9) const { return budget_lhs <= budget_rhs + tol; }
};

inline bool is_anomalous(double sigma_w) { return std::abs(sigma_w) > 1.0 + kAnomalyTolerance; }

inline void require_positive_strength(Strength s) {
  if (!(s.kappa() > 0.0)) throw Error(ErrorCode::ZeroStrength, "weak value undefined for kappa = 0");
}

/// (pc0 − pc1)/κ.
inline double weak_value(double pc0, double pc1, Strength s) {
  require_positive_strength(s);
  if (std::abs(pc0 + pc1 - 1.0) > 1e-9) {
    throw Error(ErrorCode::InvalidArgument, "conditional probabilities must sum to 1");
  }
  return (pc0 - pc1) / s.kappa();
}

/// Joint probabilities -> conditionals -> weak value, evaluated on states.
inline WeakValueResult weak_value_pipeline(double theta, Strength s, Sign postselect) {
  require_positive_strength(s);
  const PureQubit psi = make_signal_state(theta);
  const PureQubit phi = PureQubit::diagonal(postselect);
  const auto pc = conditional_probabilities(joint_probability(psi, phi, s, 0), joint_probability(psi, phi, s, 1));
  return {weak_value(pc.pc0, pc.pc1, s), pc.pc0, pc.pc1, postselect};
}

namespace detail {

// 1 ± √(1−κ²) sin 4θ: twice the postselection probability.
inline double postselection_denominator(double theta, Strength s, Sign postselect) {
  return 1.0 + sign_value(postselect) * s.coherence() * std::sin(4.0 * theta);
}

}  // namespace detail

/// Postselection probability p_0 + p_1 = (1 ± √(1−κ²) sin 4θ)/2.
inline double postselection_probability(double theta, Strength s, Sign postselect) {
  return 0.5 * detail::postselection_denominator(theta, s, postselect);
}

/// σ_w(θ) = cos 4θ / (1 ± √(1−κ²) sin 4θ); − for <−| postselection.
inline double weak_value_curve(double theta, Strength s, Sign postselect) {
  require_positive_strength(s);
  const double d = detail::postselection_denominator(theta, s, postselect);
  if (!(0.5 * d > kProbabilityFloor)) {
    throw Error(ErrorCode::ZeroPostselection, "postselection probability vanishes at this theta");
  }
  return std::cos(4.0 * theta) / d;
}

/// ∂σ_w/∂θ in rad^-1: −4 (sin 4θ ± √(1−κ²)) / (1 ± √(1−κ²) sin 4θ)².
inline double weak_value_slope(double theta, Strength s, Sign postselect) {
  require_positive_strength(s);
  const double d = detail::postselection_denominator(theta, s, postselect);
  if (!(0.5 * d > kProbabilityFloor)) {
    throw Error(ErrorCode::ZeroPostselection, "postselection probability vanishes at this theta");
  }
  const double g = sign_value(postselect) * s.coherence();
  return -4.0 * (std::sin(4.0 * theta) + g) / (d * d);
}

/// Conditional probabilities and their θ-derivatives from the closed-form
/// postselected amplitudes <±|M_x|ψ(θ)>.
struct ConditionalDerivatives {
  double pc0;
  double pc1;
  double dpc0;
  double dpc1;
};

inline ConditionalDerivatives conditional_derivatives(double theta, Strength s, Sign postselect) {
  const double k = s.kappa();
  const double a = std::sqrt((1.0 + k) / 2.0);
  const double b = std::sqrt((1.0 - k) / 2.0);
  const double g = sign_value(postselect);
  const double c = std::cos(2.0 * theta);
  const double sn = std::sin(2.0 * theta);
  const double h = std::sqrt(0.5);
  // Amplitudes and derivatives (d cos2θ = −2 sin2θ, d sin2θ = 2 cos2θ).
  const double amp0 = h * (a * c + g * b * sn);
  const double amp1 = h * (b * c + g * a * sn);
  const double damp0 = 2.0 * h * (-a * sn + g * b * c);
  const double damp1 = 2.0 * h * (-b * sn + g * a * c);
  const double p0 = amp0 * amp0;
  const double p1 = amp1 * amp1;
  const double dp0 = 2.0 * amp0 * damp0;
  const double dp1 = 2.0 * amp1 * damp1;
  const auto pc = conditional_probabilities(p0, p1);
  const double total = p0 + p1;
  const double dpc0 = (dp0 * total - p0 * (dp0 + dp1)) / (total * total);
  return {pc.pc0, pc.pc1, dpc0, -dpc0};
}

/// F_ps = (∂pc0)²/pc0 + (∂pc1)²/pc1, in rad^-2.
inline double fisher_ps_definition(double theta, Strength s, Sign postselect) {
  const ConditionalDerivatives d = conditional_derivatives(theta, s, postselect);
  if (!(d.pc0 > kProbabilityFloor && d.pc1 > kProbabilityFloor)) {
    throw Error(ErrorCode::DegenerateConditional, "a conditional probability vanishes; Fisher information undefined");
  }
  return d.dpc0 * d.dpc0 / d.pc0 + d.dpc1 * d.dpc1 / d.pc1;
}

/// F_ps = κ² (∂σ_w)² / (1 − κ² σ_w²).
inline double fisher_ps_closed_form(double sigma_w, double dsigma_dtheta, Strength s) {
  const double ks = s.kappa() * sigma_w;
  if (!(std::abs(ks) < 1.0 - kSaturationGuard)) {
    throw Error(ErrorCode::SaturatedWeakValue, "|kappa * sigma_w| reached 1; postselected Fisher information diverges");
  }
  const double k = s.kappa();
  return k * k * dsigma_dtheta * dsigma_dtheta / ((1.0 - ks) * (1.0 + ks));
}

/// Q for the signal family; θ-independent.
inline double quantum_fisher_information(double /*theta*/) { return kQuantumFisher; }

inline FisherReport fisher_report(double theta, Strength s, Sign postselect) {
  FisherReport r;
  r.f_ps = fisher_ps_definition(theta, s, postselect);
  r.q = quantum_fisher_information(theta);
  const PureQubit psi = make_signal_state(theta);
  const PureQubit phi = PureQubit::diagonal(postselect);
  r.m_ps_fraction = joint_probability(psi, phi, s, 0) + joint_probability(psi, phi, s, 1);
  r.budget_lhs = r.f_ps * r.m_ps_fraction;
  r.budget_rhs = r.q;
  return r;
}

/// One outcome of the signal ⊗ meter readout seen as a four-outcome
/// measurement on the signal alone.
struct OutcomeDirection {
  Sign signal = Sign::plus;
  Sign meter = Sign::plus;
  Matrix2c element;           // POVM element A_{signal,meter}
  Eigen::Vector3d bloch;      // unit Bloch direction of the rank-one element
  double signed_angle = 0.0;  // angle from +Z toward +X, in (−π, π]
  double polar = 0.0;         // polar angle in [0, π]
  double azimuth = 0.0;       // in (−π, π]
};

inline Eigen::Vector3d bloch_direction(const Matrix2c& element) {
  const double tr = element.trace().real();
  if (!(tr > kProbabilityFloor)) throw Error(ErrorCode::InvalidArgument, "POVM element has zero trace");
  const Complex off = element(0, 1);
  return Eigen::Vector3d(2.0 * off.real(), -2.0 * off.imag(), (element(0, 0) - element(1, 1)).real()) / tr;
}

/// Builds A_{s,m} = k†k with k_j = <s m| CZ (|j> ⊗ |μ>) and reports the
/// Bloch direction of each element.
inline std::array<OutcomeDirection, 4> four_outcome_bloch_angles(double mu) {
  const double four_mu = 4.0 * mu;
  if (!(four_mu >= 0.0 && four_mu <= std::numbers::pi / 2 + kExactTolerance)) {
    throw Error(ErrorCode::InvalidArgument, "meter angle must satisfy 0 <= 4 mu <= pi/2");
  }
  const PureQubit meter = make_meter_state(mu);
  std::array<OutcomeDirection, 4> out;
  std::size_t idx = 0;
  for (Sign signal : {Sign::plus, Sign::minus}) {
    for (Sign m : {Sign::plus, Sign::minus}) {
      const Vector4c bra = product_basis(signal, m);
      Eigen::RowVector2cd k;
      for (int j = 0; j < 2; ++j) {
        Vector4c in = tensor(j == 0 ? PureQubit::zero() : PureQubit::one(), meter);
        in(3) = -in(3);  // controlled sign
        k(j) = bra.dot(in);
      }
      OutcomeDirection& o = out[idx++];
      o.signal = signal;
      o.meter = m;
      o.element = k.adjoint() * k;
      o.bloch = bloch_direction(o.element);
      o.signed_angle = std::atan2(o.bloch.x(), o.bloch.z());
      o.polar = std::acos(std::clamp(o.bloch.z() / o.bloch.norm(), -1.0, 1.0));
      o.azimuth = std::atan2(o.bloch.y(), o.bloch.x());
    }
  }
  return out;
}

}  // namespace postsel
