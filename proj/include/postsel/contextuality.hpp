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

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "postsel/errors.hpp"
#include "postsel/qubit.hpp"

namespace postsel {

/// Weight p_d = 1 − √(1−κ²) of the residual POVM element in the
/// decomposition of the consolidated postselection operator. Written as
/// κ²/(1 + √(1−κ²)) to keep precision at small κ.
inline double detection_weight(Strength s) {
  const double k = s.kappa();
  return k * k / (1.0 + s.coherence());
}

/// Functional I_x = p_x/p_φ − (1+κ)/2 − p_d/p_φ from joint probabilities.
/// Positive values cannot be produced by a non-contextual ontic model.
inline double pusey_from_joint(double p_x, double p_phi, Strength s) {
  if (!(p_phi > kProbabilityFloor)) {
    throw Error(ErrorCode::OrthogonalPostselection, "p_phi = |<phi|psi>|^2 vanishes");
  }
  return (p_x - detection_weight(s)) / p_phi - (1.0 + s.kappa()) / 2.0;
}

struct PuseyRecord {
  double i0 = 0.0;
  double i1 = 0.0;
  double p0 = 0.0;
  double p1 = 0.0;
  double p_phi = 0.0;
  double p_d = 0.0;
  double kappa = 0.0;

  double max() const { return i0 > i1 ? i0 : i1; }
  bool violates() const { return max() > 0.0; }
};

namespace detail {

// State-level I_x with the (1+κ)/2 p_φ term cancelled analytically:
// p_x − (1+κ)/2 p_φ = −κ|c_{1−x}|² + (r − 1 − κ) Re(c0* c1), c_i = φ_i* ψ_i.
inline double pusey_state(const PureQubit& psi, const PureQubit& phi, Strength s, int x) {
  const Complex c0 = std::conj(phi.a0()) * psi.a0();
  const Complex c1 = std::conj(phi.a1()) * psi.a1();
  const double p_phi = std::norm(c0 + c1);
  if (!(p_phi > kProbabilityFloor)) {
    throw Error(ErrorCode::OrthogonalPostselection, "postselection state orthogonal to the signal (p_phi = 0)");
  }
  const double k = s.kappa();
  const double cross = (std::conj(c0) * c1).real();
  const double excess = -k * std::norm(x == 0 ? c1 : c0) + (s.coherence() - 1.0 - k) * cross;
  return (excess - detection_weight(s)) / p_phi;
}

}  // namespace detail

inline PuseyRecord pusey_record(const PureQubit& psi, const PureQubit& phi, Strength s) {
  PuseyRecord r;
  r.p_phi = std::norm(phi.inner(psi));
  r.p0 = joint_probability(psi, phi, s, 0);
  r.p1 = joint_probability(psi, phi, s, 1);
  r.p_d = detection_weight(s);
  r.kappa = s.kappa();
  r.i0 = detail::pusey_state(psi, phi, s, 0);
  r.i1 = detail::pusey_state(psi, phi, s, 1);
  return r;
}

inline double pusey_functional(const PureQubit& psi, const PureQubit& phi, Strength s, int x) {
  return detail::pusey_state(psi, phi, s, checked_outcome(x));
}

/// S = Σ_x M_x|φ><φ|M_x†: postselection on φ with the weak outcome ignored.
inline Matrix2c consolidated_S(const PureQubit& phi, Strength s) {
  const KrausPair m = kraus_operators(s);
  const Matrix2c proj = phi.vector() * phi.vector().adjoint();
  Matrix2c out = Matrix2c::Zero();
  for (int x = 0; x < 2; ++x) {
    const Matrix2c mx = m[x].cast<Complex>();
    out += mx * proj * mx.adjoint();
  }
  return out;
}

/// S = (1 − p_d)|φ><φ| + p_d E_d.
struct SDecomposition {
  Matrix2c s_matrix;
  double p_d = 0.0;
  Matrix2c e_d;

  Matrix2c reconstruct(const PureQubit& phi) const {
    return (1.0 - p_d) * (phi.vector() * phi.vector().adjoint()) + p_d * e_d;
  }
};

namespace detail {

// Below this p_d the quotient defining E_d is dominated by rounding; the
// continuous limit diag(|φ0|², |φ1|²) is used instead.
inline constexpr double kDetectionWeightFloor = 1e-5;

}  // namespace detail

inline SDecomposition decompose_consolidated(const PureQubit& phi, Strength s) {
  SDecomposition d;
  d.s_matrix = consolidated_S(phi, s);
  d.p_d = detection_weight(s);
  if (d.p_d < detail::kDetectionWeightFloor) {
    d.e_d = Matrix2c::Zero();
    d.e_d(0, 0) = std::norm(phi.a0());
    d.e_d(1, 1) = std::norm(phi.a1());
  } else {
    const Matrix2c proj = phi.vector() * phi.vector().adjoint();
    d.e_d = (d.s_matrix - (1.0 - d.p_d) * proj) / d.p_d;
    d.e_d = 0.5 * (d.e_d + d.e_d.adjoint()).eval();
  }
  if ((d.reconstruct(phi) - d.s_matrix).cwiseAbs().maxCoeff() > kExactTolerance) {
    throw Error(ErrorCode::InvalidArgument, "consolidated operator decomposition failed to reconstruct S");
  }
  Eigen::SelfAdjointEigenSolver<Matrix2c> eig(d.e_d, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() < -kEigenTolerance || eig.eigenvalues().maxCoeff() > 1.0 + kEigenTolerance) {
    throw Error(ErrorCode::InvalidArgument, "residual element E_d is not a valid POVM element");
  }
  return d;
}

struct ViolationScan {
  double max_value = 0.0;      // max over grid of max(I_0, I_1)
  double argmax_theta = 0.0;   // rad
  int argmax_outcome = 0;      // which functional attained it
  double max_i0 = 0.0;
  double argmax_i0 = 0.0;
  double max_i1 = 0.0;
  double argmax_i1 = 0.0;
  std::vector<std::size_t> skipped;  // grid indices with p_phi = 0
};

/// Maximum of the contextuality functional over a θ grid (rad) for
/// postselection on |±>. Ties resolve to the lowest grid index.
inline ViolationScan scan_violation(double kappa, Sign postselect, std::span<const double> theta_grid) {
  const Strength s(kappa);
  const PureQubit phi = PureQubit::diagonal(postselect);
  ViolationScan scan;
  bool any = false;
  for (std::size_t i = 0; i < theta_grid.size(); ++i) {
    const PureQubit psi = make_signal_state(theta_grid[i]);
    if (!(std::norm(phi.inner(psi)) > kProbabilityFloor)) {
      scan.skipped.push_back(i);
      continue;
    }
    const PuseyRecord r = pusey_record(psi, phi, s);
    if (!any || r.i0 > scan.max_i0) {
      scan.max_i0 = r.i0;
      scan.argmax_i0 = theta_grid[i];
    }
    if (!any || r.i1 > scan.max_i1) {
      scan.max_i1 = r.i1;
      scan.argmax_i1 = theta_grid[i];
    }
    if (!any || r.max() > scan.max_value) {
      scan.max_value = r.max();
      scan.argmax_theta = theta_grid[i];
      scan.argmax_outcome = r.i1 > r.i0 ? 1 : 0;
    }
    any = true;
  }
  if (!any) throw Error(ErrorCode::EmptyGrid, "every grid point has vanishing p_phi");
  return scan;
}

/// p_φ recovered from the measured postselection fraction f = p_0 + p_1
/// for φ = |±>, using p_0 + p_1 = (1 − p_d) p_φ + p_d/2 (E_d = I/2 there).
inline double infer_overlap_from_postselection(double fraction, Strength s) {
  const double pd = detection_weight(s);
  if (!(pd < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "p_phi cannot be inferred from the postselection rate at kappa = 1");
  }
  return (fraction - pd / 2.0) / (1.0 - pd);
}

}  // namespace postsel
