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

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <vector>

#include "postsel/imperfections.hpp"
#include "postsel/units.hpp"
#include "postsel/weak.hpp"

namespace postsel {
namespace {

// Scalar-amplitude route: diagonal gate and balancing act on product
// amplitudes; dephasing drops interference between basis terms.
std::array<double, 4> scalar_probs(double theta, double mu, double v, double th, double tv) {
  const double floor = std::min(th, tv);
  const double bh = std::sqrt(floor / th);
  const double bv = std::sqrt(floor / tv);
  const std::array<double, 4> gain = {th * bh * bh, std::sqrt(th * tv) * bh * bv, std::sqrt(th * tv) * bh * bv,
                                      (2 * tv - 1) * bv * bv};
  const std::array<double, 2> s = {std::cos(2 * theta), std::sin(2 * theta)};
  const std::array<double, 2> m = {std::cos(2 * mu), std::sin(2 * mu)};
  std::array<double, 4> a;
  double norm = 0;
  for (int k = 0; k < 4; ++k) {
    a[k] = gain[k] * s[k / 2] * m[k % 2];
    norm += a[k] * a[k];
  }
  // Order: (signal, meter) = (−,−), (−,+), (+,−), (+,+).
  std::array<double, 4> out;
  const int sig[4] = {-1, -1, 1, 1};
  const int met[4] = {-1, 1, -1, 1};
  for (int o = 0; o < 4; ++o) {
    double coherent = 0;
    double dephased = 0;
    for (int k = 0; k < 4; ++k) {
      const double w = 0.5 * (k / 2 == 1 ? sig[o] : 1) * (k % 2 == 1 ? met[o] : 1);
      coherent += w * a[k];
      dephased += w * w * a[k] * a[k];
    }
    out[o] = (v * coherent * coherent + (1 - v) * dephased) / norm;
  }
  return out;
}

std::array<double, 4> as_array(const ProbabilityRecord& r) { return {r.p_mm, r.p_mp, r.p_pm, r.p_pp}; }

double sigma_from(const ProbabilityRecord& r, Sign post, double kappa) {
  const double p0 = r.p0(post);
  const double p1 = r.p1(post);
  return (p0 - p1) / (p0 + p1) / kappa;
}

double peak_sigma(double kappa, const ImperfectionParams& params, Sign post) {
  const double mu = std::asin(kappa) / 4;
  double best = 0;
  for (int i = 0; i < 900; ++i) {
    const double theta = deg_to_rad(0.1 * i + 0.05);
    best = std::max(best, std::abs(sigma_from(imperfect_joint_probs(theta, mu, params), post, kappa)));
  }
  return best;
}

const ImperfectionParams kDegraded{0.78, 0.98, 0.34};

TEST(Imperfections, IdealParametersReproduceCircuit) {
  const ImperfectionParams ideal{1.0, 1.0, 1.0 / 3.0};
  for (int mu_i = 0; mu_i <= 10; ++mu_i) {
    const double mu = deg_to_rad(2.25 * mu_i);
    for (int deg = 0; deg <= 90; ++deg) {
      const double theta = deg_to_rad(deg);
      const ProbabilityRecord got = imperfect_joint_probs(theta, mu, ideal);
      for (Sign s : {Sign::minus, Sign::plus}) {
        for (Sign m : {Sign::minus, Sign::plus}) {
          ASSERT_NEAR(got.joint(s, m), circuit_joint_probability(theta, mu, s, m), 1e-12);
        }
      }
      ASSERT_NEAR(got.attempt_fraction, 1.0, 1e-12);
    }
  }
}

TEST(Imperfections, MatchesScalarOracle) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int i = 0; i < 500; ++i) {
    const double theta = unit(rng) * std::numbers::pi;
    const double mu = unit(rng) * std::numbers::pi / 8;
    const ImperfectionParams p{unit(rng), 0.05 + 0.95 * unit(rng), 0.05 + 0.95 * unit(rng)};
    const auto want = scalar_probs(theta, mu, p.visibility, p.t_h, p.t_v);
    const auto got = as_array(imperfect_joint_probs(theta, mu, p));
    for (int o = 0; o < 4; ++o) ASSERT_NEAR(got[o], want[o], 1e-12);
  }
}

TEST(Imperfections, ClosureAndPositivity) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int i = 0; i < 500; ++i) {
    const double theta = unit(rng) * std::numbers::pi;
    const double mu = unit(rng) * std::numbers::pi / 8;
    const ImperfectionParams p{unit(rng), 0.01 + 0.99 * unit(rng), 0.01 + 0.99 * unit(rng)};
    const PipelineStages st = imperfect_pipeline(theta, mu, p);
    for (const TwoQubitDensity* d : {&st.input, &st.after_gate, &st.after_visibility, &st.after_balance, &st.detected}) {
      ASSERT_GE(d->min_eigenvalue(), -1e-10);
    }
    ASSERT_NEAR(st.detected.trace(), 1.0, 1e-12);
    ASSERT_NEAR(imperfect_joint_probs(theta, mu, p).total(), 1.0, 1e-12);
  }
}

TEST(Imperfections, MonotoneDamage) {
  for (const ImperfectionParams split : {ImperfectionParams{1.0, 1.0, 1.0 / 3.0}, ImperfectionParams{1.0, 0.98, 0.34}}) {
    double previous = 1e9;
    for (double v : {1.0, 0.9, 0.78, 0.5, 0.0}) {
      ImperfectionParams p = split;
      p.visibility = v;
      for (Sign post : {Sign::minus, Sign::plus}) {
        const double peak = peak_sigma(0.335, p, post);
        EXPECT_LE(peak, previous + 1e-12) << "v=" << v;
        if (post == Sign::plus) previous = peak;
      }
    }
  }
}

TEST(Imperfections, FullDephasingIsNeverAnomalous) {
  const ImperfectionParams p{0.0, 0.98, 0.34};
  const double mu = std::asin(0.335) / 4;
  for (int i = 0; i < 180; ++i) {
    const ProbabilityRecord r = imperfect_joint_probs(deg_to_rad(0.5 * i), mu, p);
    for (Sign post : {Sign::minus, Sign::plus}) {
      const double sw = sigma_from(r, post, 0.335);
      EXPECT_FALSE(is_anomalous(sw));
      EXPECT_NEAR(sw, 0.0, 1e-12);
    }
  }
}

TEST(Imperfections, ReportedParametersReducePeak) {
  const double k = 0.335;
  for (Sign post : {Sign::minus, Sign::plus}) {
    const double peak = peak_sigma(k, kDegraded, post);
    EXPECT_GT(peak, 1.0);
    EXPECT_LT(peak, 1.0 / k);
    EXPECT_LT(peak, peak_sigma(k, ImperfectionParams::ideal(), post));
  }
}

TEST(Imperfections, GateStarved) {
  for (const ImperfectionParams p : {ImperfectionParams{1.0, 1.0, 0.0}, ImperfectionParams{1.0, 0.0, 0.5}}) {
    try {
      imperfect_joint_probs(0.3, 0.1, p);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::GateStarved);
    }
    EXPECT_THROW(signal_povm(0.1, p), Error);
  }
  EXPECT_THROW(imperfect_joint_probs(0.3, 0.1, ImperfectionParams{1.2, 1.0, 0.3}), Error);
}

// Brute-force least-squares κ over a fine grid, using the scalar oracle.
double fit_kappa_oracle(double mu, const ImperfectionParams& p) {
  double best_k = 0;
  double best_err = 1e300;
  for (int i = 0; i <= 100000; ++i) {
    const double k = i * 1e-5;
    double err = 0;
    for (int deg = 0; deg < 90; ++deg) {
      const double theta = deg_to_rad(deg);
      const auto pr = scalar_probs(theta, mu, p.visibility, p.t_h, p.t_v);
      const double meter_plus = pr[1] + pr[3];
      const double model = (1 + k * std::cos(4 * theta)) / 2;
      err += (meter_plus - model) * (meter_plus - model);
    }
    if (err < best_err) {
      best_err = err;
      best_k = k;
    }
  }
  return best_k;
}

TEST(EffectiveKappa, Ideal) {
  const double mu = std::asin(0.335) / 4;
  EXPECT_NEAR(effective_kappa(ImperfectionParams::ideal(), mu), 0.335, 1e-12);
}

TEST(EffectiveKappa, ReducedVisibilityShrinks) {
  const double mu = std::asin(0.335) / 4;
  const ImperfectionParams p{0.78, 1.0, 1.0 / 3.0};
  const double k = effective_kappa(p, mu);
  EXPECT_LT(k, 0.335);
  EXPECT_NEAR(k, fit_kappa_oracle(mu, p), 1e-5);
}

TEST(EffectiveKappa, ImperfectSplittingStaysClose) {
  const double mu = std::asin(0.335) / 4;
  const ImperfectionParams p{1.0, 0.98, 0.34};
  const double k = effective_kappa(p, mu);
  EXPECT_NEAR(k, 0.335, 0.02);
  EXPECT_NEAR(k, fit_kappa_oracle(mu, p), 1e-5);
}

TEST(SignalPovm, ReproducesPipeline) {
  const double mu = std::asin(0.335) / 4;
  for (const ImperfectionParams p : {ImperfectionParams::ideal(), kDegraded, ImperfectionParams{0.5, 0.7, 0.2}}) {
    const SignalPovm povm = signal_povm(mu, p);
    Eigen::SelfAdjointEigenSolver<Matrix2c> eig(povm.total());
    EXPECT_LE(eig.eigenvalues().maxCoeff(), 1.0 + 1e-12);
    for (const auto& e : povm.elements) {
      EXPECT_GE(Eigen::SelfAdjointEigenSolver<Matrix2c>(e).eigenvalues().minCoeff(), -1e-12);
    }
    for (int deg = 0; deg < 180; deg += 3) {
      const double theta = deg_to_rad(deg);
      const Vector2c psi = make_signal_state(theta).vector();
      const ProbabilityRecord r = imperfect_joint_probs(theta, mu, p);
      const double attempt = (psi.adjoint() * povm.total() * psi)(0, 0).real();
      EXPECT_NEAR(attempt, r.attempt_fraction, 1e-12);
      for (Sign s : {Sign::minus, Sign::plus}) {
        for (Sign m : {Sign::minus, Sign::plus}) {
          const double q = (psi.adjoint() * povm(s, m) * psi)(0, 0).real();
          EXPECT_NEAR(q / attempt, r.joint(s, m), 1e-12);
        }
      }
    }
  }
}

TEST(SignalPovm, ComplexSignalStates) {
  std::mt19937_64 rng(23);
  std::normal_distribution<double> g;
  const double mu = 0.07;
  const ImperfectionParams p{0.6, 0.9, 0.3};
  const GateModel model = gate_model(p);
  const SignalPovm povm = signal_povm(mu, p);
  for (int i = 0; i < 100; ++i) {
    const PureQubit psi = PureQubit::normalized({g(rng), g(rng)}, {g(rng), g(rng)});
    const Vector4c joint = tensor(psi, make_meter_state(mu));
    const Matrix4c out = detail::apply_pipeline(model, joint * joint.adjoint()) / model.max_success;
    for (Sign s : {Sign::minus, Sign::plus}) {
      for (Sign m : {Sign::minus, Sign::plus}) {
        const Vector4c v = product_basis(s, m);
        const Complex want = v.dot(out * v);
        const Complex got = (psi.vector().adjoint() * povm(s, m) * psi.vector())(0, 0);
        ASSERT_NEAR(got.real(), want.real(), 1e-12);
        ASSERT_NEAR(got.imag(), 0.0, 1e-12);
      }
    }
  }
}

}  // namespace
}  // namespace postsel
