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
#include <string>
#include <string_view>

#include "postsel/errors.hpp"
#include "postsel/qubit.hpp"
#include "postsel/units.hpp"

namespace postsel {

inline constexpr std::string_view kVisibilityModel = "coherent-dephased-mixture/v1";
inline constexpr std::string_view kTransmissionConvention = "intensity";

/// Non-idealities of the linear-optics controlled-sign gate.
///
/// `visibility` weights coherent gate action against full dephasing in the
/// computational basis. `t_h` and `t_v` are intensity transmissions of the
/// central partially polarizing beamsplitter; the textbook gate uses
/// (1, 1/3).
struct ImperfectionParams {
  double visibility = 1.0;
  double t_h = 1.0;
  double t_v = 1.0 / 3.0;

  static ImperfectionParams ideal() { return {}; }

  void validate() const {
    auto unit = [](double v, const char* name) {
      if (!(v >= 0.0 && v <= 1.0)) {
        throw Error(ErrorCode::InvalidArgument, std::string(name) + " must lie in [0, 1], got " + std::to_string(v));
      }
    };
    unit(visibility, "visibility");
    unit(t_h, "t_h");
    unit(t_v, "t_v");
  }
};

/// Linear operators making up the imperfect gate.
struct GateModel {
  Matrix4c gate;     // postselected amplitude operator of the central PPBS
  Matrix4c balance;  // compensating PPBS on both photons
  double visibility = 1.0;
  // Largest transmission of a computational basis state through gate and
  // balancing; one attempt succeeds at most with this probability.
  double max_success = 1.0;
};

inline GateModel gate_model(const ImperfectionParams& params) {
  params.validate();
  const double th = params.t_h;
  const double tv = params.t_v;
  GateModel m;
  // H components are only transmitted (reflected H light leaves the detected
  // modes); both V photons reflected picks up a relative sign.
  m.gate = Matrix4c::Zero();
  m.gate(0, 0) = th;
  m.gate(1, 1) = std::sqrt(th * tv);
  m.gate(2, 2) = std::sqrt(th * tv);
  m.gate(3, 3) = tv - (1.0 - tv);
  // Each photon's H and V transmissions are equalised to the weaker one.
  const double floor = std::min(th, tv);
  const double bh = th > 0.0 ? std::sqrt(floor / th) : 0.0;
  const double bv = tv > 0.0 ? std::sqrt(floor / tv) : 0.0;
  m.balance = Matrix4c::Zero();
  m.balance(0, 0) = bh * bh;
  m.balance(1, 1) = bh * bv;
  m.balance(2, 2) = bv * bh;
  m.balance(3, 3) = bv * bv;
  m.visibility = params.visibility;
  const Matrix4c net = m.balance * m.gate;
  m.max_success = 0.0;
  for (int i = 0; i < 4; ++i) m.max_success = std::max(m.max_success, std::norm(net(i, i)));
  return m;
}

namespace detail {

inline Matrix4c dephase(const Matrix4c& x) {
  Matrix4c out = Matrix4c::Zero();
  out.diagonal() = x.diagonal();
  return out;
}

inline Matrix4c apply_gate(const GateModel& m, const Matrix4c& x) { return m.gate * x * m.gate.adjoint(); }

inline Matrix4c apply_visibility(const GateModel& m, const Matrix4c& x) {
  return m.visibility * x + (1.0 - m.visibility) * dephase(x);
}

inline Matrix4c apply_balance(const GateModel& m, const Matrix4c& x) { return m.balance * x * m.balance.adjoint(); }

// The whole map before renormalization; linear in x.
inline Matrix4c apply_pipeline(const GateModel& m, const Matrix4c& x) {
  return apply_balance(m, apply_visibility(m, apply_gate(m, x)));
}

}  // namespace detail

/// Density operator after every stage, for inspection and positivity checks.
struct PipelineStages {
  TwoQubitDensity input;
  TwoQubitDensity after_gate;
  TwoQubitDensity after_visibility;
  TwoQubitDensity after_balance;
  TwoQubitDensity detected;  // renormalized on coincidences
  double coincidence = 0.0;  // trace before renormalization
};

inline PipelineStages imperfect_pipeline(double theta, double mu, const ImperfectionParams& params) {
  const GateModel m = gate_model(params);
  const Matrix4c input = TwoQubitDensity::pure(tensor(make_signal_state(theta), make_meter_state(mu))).matrix();
  const Matrix4c gated = detail::apply_gate(m, input);
  auto starved = [](const Matrix4c& x) { return !(x.trace().real() > kProbabilityFloor); };
  if (starved(gated)) throw Error(ErrorCode::GateStarved, "no coincidences survive the gate");
  const Matrix4c mixed = detail::apply_visibility(m, gated);
  const Matrix4c balanced = detail::apply_balance(m, mixed);
  if (starved(balanced)) throw Error(ErrorCode::GateStarved, "no coincidences survive loss balancing");
  const double coincidence = balanced.trace().real();
  return PipelineStages{TwoQubitDensity(input),
                        TwoQubitDensity(gated),
                        TwoQubitDensity(mixed),
                        TwoQubitDensity(balanced),
                        TwoQubitDensity(balanced / coincidence),
                        coincidence};
}

/// Four diagonal-basis outcome probabilities of the imperfect gate,
/// normalized over detected coincidences.
inline ProbabilityRecord imperfect_joint_probs(double theta, double mu, const ImperfectionParams& params) {
  const PipelineStages st = imperfect_pipeline(theta, mu, params);
  const GateModel m = gate_model(params);
  ProbabilityRecord rec;
  rec.p_mm = st.detected.expectation(product_basis(Sign::minus, Sign::minus));
  rec.p_mp = st.detected.expectation(product_basis(Sign::minus, Sign::plus));
  rec.p_pm = st.detected.expectation(product_basis(Sign::plus, Sign::minus));
  rec.p_pp = st.detected.expectation(product_basis(Sign::plus, Sign::plus));
  rec.kappa = std::sin(4.0 * mu);
  const PureQubit psi = make_signal_state(theta);
  rec.p_phi_minus = std::norm(PureQubit::minus().inner(psi));
  rec.p_phi_plus = std::norm(PureQubit::plus().inner(psi));
  rec.attempt_fraction = st.coincidence / m.max_success;
  return rec;
}

/// Effective measurement on the signal alone: p(s, m) = <ψ|A_{s,m}|ψ> per
/// attempt, obtained by pushing |i><j| ⊗ |μ><μ| through the linear part of
/// the pipeline. Elements are scaled so that Σ A ≤ I.
struct SignalPovm {
  std::array<Matrix2c, 4> elements;  // index 2*(signal==minus) + (meter==minus)

  static std::size_t index(Sign signal, Sign meter) {
    return 2 * static_cast<std::size_t>(signal == Sign::minus) + static_cast<std::size_t>(meter == Sign::minus);
  }
  const Matrix2c& operator()(Sign signal, Sign meter) const { return elements[index(signal, meter)]; }
  Matrix2c total() const { return elements[0] + elements[1] + elements[2] + elements[3]; }
};

inline SignalPovm signal_povm(double mu, const ImperfectionParams& params) {
  const GateModel m = gate_model(params);
  if (!(m.max_success > kProbabilityFloor)) throw Error(ErrorCode::GateStarved, "gate transmits nothing");
  const Vector2c meter = make_meter_state(mu).vector();
  const Matrix2c meter_proj = meter * meter.adjoint();
  SignalPovm out;
  for (auto& e : out.elements) e = Matrix2c::Zero();
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      Matrix2c unit = Matrix2c::Zero();
      unit(i, j) = 1.0;
      const Matrix4c x = kron(unit, meter_proj);
      const Matrix4c y = detail::apply_pipeline(m, x) / m.max_success;
      for (Sign s : {Sign::plus, Sign::minus}) {
        for (Sign mm : {Sign::plus, Sign::minus}) {
          const Vector4c v = product_basis(s, mm);
          // p = Σ_ij ψ_i conj(ψ_j) <v|Λ(|i><j|)|v> = <ψ|A|ψ> with A(j, i) = <v|Λ(|i><j|)|v>.
          out.elements[SignalPovm::index(s, mm)](j, i) = v.dot(y * v);
        }
      }
    }
  }
  return out;
}

/// κ that a calibration would report: least-squares fit of the meter
/// marginal P(meter +|θ) to (1 + κ cos 4θ)/2 over θ = 0°, 1°, …, 89°.
inline double effective_kappa(const ImperfectionParams& params, double mu) {
  double num = 0.0;
  double den = 0.0;
  for (int deg = 0; deg < 90; ++deg) {
    const double theta = deg_to_rad(static_cast<double>(deg));
    const ProbabilityRecord r = imperfect_joint_probs(theta, mu, params);
    const double c = std::cos(4.0 * theta);
    num += (2.0 * (r.p_mp + r.p_pp) - 1.0) * c;
    den += c * c;
  }
  return num / den;
}

}  // namespace postsel
