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

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <string>
#include <string_view>

#include "postsel/errors.hpp"

namespace postsel {

using Complex = std::complex<double>;
using Vector2c = Eigen::Vector2cd;
using Vector4c = Eigen::Matrix<Complex, 4, 1>;
using Matrix2c = Eigen::Matrix2cd;
using Matrix4c = Eigen::Matrix4cd;
using Matrix2r = Eigen::Matrix2d;

// Exact-algebra tolerance and the eigenvalue slack allowed for positivity.
inline constexpr double kExactTolerance = 1e-12;
inline constexpr double kEigenTolerance = 1e-10;

/// Outcome of a measurement in the diagonal basis |±> = (|0> ± |1>)/√2.
/// Used for the signal postselection and for the meter readout.
enum class Sign { plus, minus };

constexpr double sign_value(Sign s) { return s == Sign::plus ? 1.0 : -1.0; }

constexpr std::string_view to_string(Sign s) { return s == Sign::plus ? "plus" : "minus"; }

/// Normalized qubit state a0|0> + a1|1>, with |0> the horizontal and |1>
/// the vertical polarisation.
class PureQubit {
 public:
  PureQubit(Complex a0, Complex a1) : a0_(a0), a1_(a1) {
    const double norm2 = std::norm(a0) + std::norm(a1);
    if (!std::isfinite(norm2) || std::abs(norm2 - 1.0) > kExactTolerance) {
      throw Error(ErrorCode::InvalidArgument,
                  "qubit amplitudes not normalized (|a0|^2+|a1|^2 = " + std::to_string(norm2) + ")");
    }
  }

  static PureQubit normalized(Complex a0, Complex a1) {
    const double n = std::sqrt(std::norm(a0) + std::norm(a1));
    if (!(n > 0.0) || !std::isfinite(n)) {
      throw Error(ErrorCode::InvalidArgument, "cannot normalize a zero or non-finite vector");
    }
    return PureQubit(a0 / n, a1 / n);
  }

  static PureQubit zero() { return {1.0, 0.0}; }
  static PureQubit one() { return {0.0, 1.0}; }
  static PureQubit diagonal(Sign s) {
    const double h = std::sqrt(0.5);
    return {h, sign_value(s) * h};
  }
  static PureQubit plus() { return diagonal(Sign::plus); }
  static PureQubit minus() { return diagonal(Sign::minus); }

  Complex a0() const { return a0_; }
  Complex a1() const { return a1_; }
  Vector2c vector() const { return Vector2c(a0_, a1_); }

  /// <this|other>
  Complex inner(const PureQubit& other) const {
    return std::conj(a0_) * other.a0_ + std::conj(a1_) * other.a1_;
  }

 private:
  Complex a0_;
  Complex a1_;
};

/// Measurement strength κ in [0, 1]: 0 leaves the state untouched, 1 is a
/// projective measurement of Z = Π0 − Π1.
class Strength {
 public:
  explicit Strength(double kappa) : kappa_(kappa) {
    if (!(kappa >= 0.0 && kappa <= 1.0)) {
      throw Error(ErrorCode::InvalidArgument, "strength kappa must lie in [0, 1], got " + std::to_string(kappa));
    }
  }

  /// Strength realised by a meter prepared at angle mu: κ = sin 4μ, 0 ≤ 4μ ≤ π/2.
  static Strength from_meter_angle(double mu) {
    const double four_mu = 4.0 * mu;
    if (!(four_mu >= -kExactTolerance && four_mu <= std::numbers::pi / 2 + kExactTolerance)) {
      throw Error(ErrorCode::InvalidArgument, "meter angle must satisfy 0 <= 4 mu <= pi/2");
    }
    return Strength(std::clamp(std::sin(four_mu), 0.0, 1.0));
  }

  double kappa() const { return kappa_; }

  /// √(1−κ²), the factor by which the measurement scales off-diagonal coherences.
  double coherence() const { return std::sqrt((1.0 - kappa_) * (1.0 + kappa_)); }

  /// Meter angle mu in [0, π/8] with sin 4μ = κ.
  double meter_angle() const { return std::asin(kappa_) / 4.0; }

 private:
  double kappa_;
};

struct KrausPair {
  Matrix2r m0;
  Matrix2r m1;

  const Matrix2r& operator[](int x) const { return x == 0 ? m0 : m1; }
};

struct QubitPovm {
  Matrix2r e0;
  Matrix2r e1;

  const Matrix2r& operator[](int x) const { return x == 0 ? e0 : e1; }
};

/// Density operator on signal ⊗ meter, basis index 2*signal + meter.
/// Sub-normalized traces are allowed (lossy elements before renormalization).
class TwoQubitDensity {
 public:
  explicit TwoQubitDensity(const Matrix4c& rho) : rho_(rho) {
    if (!rho.allFinite()) throw Error(ErrorCode::InvalidArgument, "density matrix has non-finite entries");
    if ((rho - rho.adjoint()).cwiseAbs().maxCoeff() > kExactTolerance) {
      throw Error(ErrorCode::InvalidArgument, "density matrix is not Hermitian");
    }
    const double tr = trace();
    if (!(tr > 0.0 && tr <= 1.0 + kExactTolerance)) {
      throw Error(ErrorCode::InvalidArgument, "density trace outside (0, 1]: " + std::to_string(tr));
    }
    if (min_eigenvalue() < -kEigenTolerance) {
      throw Error(ErrorCode::InvalidArgument, "density matrix is not positive semidefinite");
    }
  }

  static TwoQubitDensity pure(const Vector4c& psi) { return TwoQubitDensity(psi * psi.adjoint()); }

  const Matrix4c& matrix() const { return rho_; }
  double trace() const { return rho_.trace().real(); }

  double min_eigenvalue() const {
    Eigen::SelfAdjointEigenSolver<Matrix4c> solver(rho_, Eigen::EigenvaluesOnly);
    return solver.eigenvalues().minCoeff();
  }

  /// <v|rho|v>
  double expectation(const Vector4c& v) const { return (v.adjoint() * rho_ * v)(0, 0).real(); }

 private:
  Matrix4c rho_;
};

inline Vector4c tensor(const PureQubit& signal, const PureQubit& meter) {
  Vector4c out;
  out << signal.a0() * meter.a0(), signal.a0() * meter.a1(), signal.a1() * meter.a0(), signal.a1() * meter.a1();
  return out;
}

/// a ⊗ b for operators on signal and meter.
inline Matrix4c kron(const Matrix2c& a, const Matrix2c& b) {
  Matrix4c out;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) out.block<2, 2>(2 * i, 2 * j) = a(i, j) * b;
  return out;
}

/// cos 2θ |0> + sin 2θ |1>.
inline PureQubit make_signal_state(double theta) {
  if (!std::isfinite(theta)) throw Error(ErrorCode::InvalidArgument, "theta must be finite");
  return {std::cos(2.0 * theta), std::sin(2.0 * theta)};
}

/// cos 2μ |0> + sin 2μ |1>.
inline PureQubit make_meter_state(double mu) {
  if (!std::isfinite(mu)) throw Error(ErrorCode::InvalidArgument, "mu must be finite");
  return {std::cos(2.0 * mu), std::sin(2.0 * mu)};
}

inline KrausPair kraus_operators(Strength s) {
  const double k = s.kappa();
  const double strong = std::sqrt((1.0 + k) / 2.0);
  const double weak = std::sqrt((1.0 - k) / 2.0);
  KrausPair out;
  out.m0 << strong, 0.0, 0.0, weak;
  out.m1 << weak, 0.0, 0.0, strong;
  return out;
}

inline QubitPovm povm_elements(Strength s) {
  const KrausPair m = kraus_operators(s);
  return {m.m0.transpose() * m.m0, m.m1.transpose() * m.m1};
}

inline int checked_outcome(int x) {
  if (x != 0 && x != 1) throw Error(ErrorCode::InvalidArgument, "outcome index must be 0 or 1");
  return x;
}

/// p_x = |<phi|M_x|psi>|^2: outcome x followed by successful postselection on phi.
inline double joint_probability(const PureQubit& psi, const PureQubit& phi, Strength s, int x) {
  const KrausPair kraus = kraus_operators(s);
  const Matrix2r& m = kraus[checked_outcome(x)];
  const Complex amp = phi.vector().dot(m.cast<Complex>() * psi.vector());  // dot conjugates phi
  return std::norm(amp);
}

struct ConditionalProbabilities {
  double pc0;
  double pc1;
};

inline ConditionalProbabilities conditional_probabilities(double p0, double p1) {
  if (!(p0 >= 0.0 && p1 >= 0.0)) throw Error(ErrorCode::InvalidArgument, "joint probabilities must be nonnegative");
  const double total = p0 + p1;
  if (!(total > kProbabilityFloor)) {
    throw Error(ErrorCode::ZeroPostselection, "postselection probability is numerically zero");
  }
  const double pc0 = p0 / total;
  return {pc0, 1.0 - pc0};
}

/// Controlled-sign: conjugation by diag(1, 1, 1, −1).
inline TwoQubitDensity csign_apply(const TwoQubitDensity& rho) {
  Matrix4c out = rho.matrix();
  out.row(3) *= -1.0;
  out.col(3) *= -1.0;
  return TwoQubitDensity(out);
}

/// Four joint outcome probabilities of a signal/meter run plus the
/// reference quantities entering the contextuality functional.
///
/// Meter outcome + realises M_0 and meter outcome − realises M_1, so for a
/// postselection sign s the joint probabilities are p_0 = P(s, +) and
/// p_1 = P(s, −).
struct ProbabilityRecord {
  double p_mm = 0.0;  // signal −, meter −
  double p_mp = 0.0;  // signal −, meter +
  double p_pm = 0.0;  // signal +, meter −
  double p_pp = 0.0;  // signal +, meter +
  double kappa = 0.0;
  double p_phi_minus = 0.0;  // |<−|psi>|^2
  double p_phi_plus = 0.0;   // |<+|psi>|^2
  // Probability that an attempt yields a detected event at all, relative to
  // the ideal gate (1 for the ideal model).
  double attempt_fraction = 1.0;

  double joint(Sign signal, Sign meter) const {
    if (signal == Sign::minus) return meter == Sign::minus ? p_mm : p_mp;
    return meter == Sign::minus ? p_pm : p_pp;
  }
  double p0(Sign post) const { return joint(post, Sign::plus); }
  double p1(Sign post) const { return joint(post, Sign::minus); }
  double postselection(Sign post) const { return p0(post) + p1(post); }
  double p_phi(Sign post) const { return post == Sign::minus ? p_phi_minus : p_phi_plus; }
  double p_d() const { return kappa * kappa / (1.0 + std::sqrt((1.0 - kappa) * (1.0 + kappa))); }
  double total() const { return p_mm + p_mp + p_pm + p_pp; }
};

inline Vector4c product_basis(Sign signal, Sign meter) {
  return tensor(PureQubit::diagonal(signal), PureQubit::diagonal(meter));
}

/// Runs signal(θ) ⊗ meter(μ) through the controlled-sign gate and returns
/// all four diagonal-basis outcome probabilities.
inline ProbabilityRecord circuit_probabilities(double theta, double mu) {
  const PureQubit psi = make_signal_state(theta);
  const PureQubit meter = make_meter_state(mu);
  const TwoQubitDensity out = csign_apply(TwoQubitDensity::pure(tensor(psi, meter)));
  ProbabilityRecord rec;
  rec.p_mm = out.expectation(product_basis(Sign::minus, Sign::minus));
  rec.p_mp = out.expectation(product_basis(Sign::minus, Sign::plus));
  rec.p_pm = out.expectation(product_basis(Sign::plus, Sign::minus));
  rec.p_pp = out.expectation(product_basis(Sign::plus, Sign::plus));
  rec.kappa = std::sin(4.0 * mu);
  rec.p_phi_minus = std::norm(PureQubit::minus().inner(psi));
  rec.p_phi_plus = std::norm(PureQubit::plus().inner(psi));
  return rec;
}

inline double circuit_joint_probability(double theta, double mu, Sign signal_outcome, Sign meter_outcome) {
  return circuit_probabilities(theta, mu).joint(signal_outcome, meter_outcome);
}

/// Same record computed from the Kraus description, for a strength κ.
inline ProbabilityRecord kraus_probabilities(double theta, Strength s) {
  const PureQubit psi = make_signal_state(theta);
  ProbabilityRecord rec;
  rec.p_mm = joint_probability(psi, PureQubit::minus(), s, 1);
  rec.p_mp = joint_probability(psi, PureQubit::minus(), s, 0);
  rec.p_pm = joint_probability(psi, PureQubit::plus(), s, 1);
  rec.p_pp = joint_probability(psi, PureQubit::plus(), s, 0);
  rec.kappa = s.kappa();
  rec.p_phi_minus = std::norm(PureQubit::minus().inner(psi));
  rec.p_phi_plus = std::norm(PureQubit::plus().inner(psi));
  return rec;
}

}  // namespace postsel
