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
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "postsel/contextuality.hpp"
#include "postsel/errors.hpp"
#include "postsel/parallel.hpp"
#include "postsel/qubit.hpp"

namespace postsel {

struct AcquisitionConfig {
  double rate = 2000.0;    // mean detected coincidences per second, all channels
  double duration = 5.0;   // s
  std::uint64_t seed = 1;
  double kappa_uncertainty = 0.0;  // one-sigma on κ

  double expected_events() const { return rate * duration; }

  void validate() const {
    if (!(rate > 0.0 && std::isfinite(rate))) throw Error(ErrorCode::InvalidArgument, "rate must be > 0");
    if (!(duration > 0.0 && std::isfinite(duration))) throw Error(ErrorCode::InvalidArgument, "duration must be > 0");
    if (!(kappa_uncertainty >= 0.0)) throw Error(ErrorCode::InvalidArgument, "kappa uncertainty must be >= 0");
  }
};

/// Coincidence counts per channel (signal ∓ × meter ±).
struct CountRecord {
  std::uint64_t n_mm = 0;
  std::uint64_t n_mp = 0;
  std::uint64_t n_pm = 0;
  std::uint64_t n_pp = 0;
  AcquisitionConfig config;

  std::uint64_t count(Sign signal, Sign meter) const {
    if (signal == Sign::minus) return meter == Sign::minus ? n_mm : n_mp;
    return meter == Sign::minus ? n_pm : n_pp;
  }
  // Postselected channel pair: meter + realises outcome 0, meter − outcome 1.
  std::uint64_t n0(Sign post) const { return count(post, Sign::plus); }
  std::uint64_t n1(Sign post) const { return count(post, Sign::minus); }
  std::uint64_t total() const { return n_mm + n_mp + n_pm + n_pp; }

  bool operator==(const CountRecord& o) const {
    return n_mm == o.n_mm && n_mp == o.n_mp && n_pm == o.n_pm && n_pp == o.n_pp;
  }
};

/// SplitMix64 step; used to derive independent per-task seeds from a root.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t index) {
  std::uint64_t state = root;
  splitmix64(state);
  state ^= index * 0xD1B54A32D192ED03ULL;
  return splitmix64(state);
}

/// Independent Poisson counts with means rate·duration·p, channels drawn in
/// the order mm, mp, pm, pp from one generator seeded by config.seed.
inline CountRecord simulate_counts(const ProbabilityRecord& probs, const AcquisitionConfig& config) {
  config.validate();
  if (std::abs(probs.total() - 1.0) > 1e-9) {
    throw Error(ErrorCode::InvalidArgument, "outcome probabilities must sum to 1");
  }
  std::mt19937_64 rng(config.seed);
  auto draw = [&](double p) -> std::uint64_t {
    const double mean = config.expected_events() * std::max(p, 0.0);
    if (!(mean > 0.0)) return 0;
    std::poisson_distribution<std::uint64_t> dist(mean);
    return dist(rng);
  };
  CountRecord rec;
  rec.config = config;
  rec.n_mm = draw(probs.p_mm);
  rec.n_mp = draw(probs.p_mp);
  rec.n_pm = draw(probs.p_pm);
  rec.n_pp = draw(probs.p_pp);
  return rec;
}

struct WeakValueEstimate {
  double sigma_w = 0.0;
  double variance = 0.0;          // total
  double variance_poisson = 0.0;  // counting statistics
  double variance_kappa = 0.0;    // from the κ calibration uncertainty
  std::uint64_t n_a = 0;          // meter + in the postselected channel
  std::uint64_t n_b = 0;          // meter −

  std::uint64_t postselected() const { return n_a + n_b; }
};

/// σ̂_w = (n_a − n_b)/(κ(n_a + n_b)) with first-order error propagation:
/// Var = 4 n_a n_b/(κ² N³) + σ̂_w² (Δκ/κ)².
inline WeakValueEstimate weak_value_from_counts(const CountRecord& rec, double kappa, Sign postselect) {
  const Strength s(kappa);
  if (!(s.kappa() > 0.0)) throw Error(ErrorCode::ZeroStrength, "weak value undefined for kappa = 0");
  WeakValueEstimate e;
  e.n_a = rec.n0(postselect);
  e.n_b = rec.n1(postselect);
  const double na = static_cast<double>(e.n_a);
  const double nb = static_cast<double>(e.n_b);
  const double n = na + nb;
  if (!(n > 0.0)) throw Error(ErrorCode::EmptyChannel, "postselected channel has no counts");
  e.sigma_w = (na - nb) / (kappa * n);
  e.variance_poisson = 4.0 * na * nb / (kappa * kappa * n * n * n);
  const double rel = rec.config.kappa_uncertainty / kappa;
  e.variance_kappa = e.sigma_w * e.sigma_w * rel * rel;
  e.variance = e.variance_poisson + e.variance_kappa;
  return e;
}

/// Repeated acquisitions with seeds derived from config.seed; results are
/// ordered by repetition index.
inline std::vector<CountRecord> simulate_repetitions(const ProbabilityRecord& probs, const AcquisitionConfig& config,
                                                     std::size_t repetitions) {
  return parallel_map(repetitions, [&](std::size_t r) {
    AcquisitionConfig c = config;
    c.seed = derive_seed(config.seed, r);
    return simulate_counts(probs, c);
  });
}

/// How p_φ = |<φ|ψ>|² enters the count-based contextuality functional.
enum class OverlapConvention {
  direct,    // supplied by the caller (gate-free overlap of the prepared state)
  inferred,  // from the postselection fraction via p_0+p_1 = (1−p_d)p_φ + p_d/2
};

constexpr std::string_view to_string(OverlapConvention c) {
  return c == OverlapConvention::direct ? "direct" : "inferred";
}

struct PuseyEstimate {
  double i0 = 0.0;
  double i1 = 0.0;
  double var_i0 = 0.0;
  double var_i1 = 0.0;
  double p_phi = 0.0;
};

/// I_0 and I_1 from counts, with joint probabilities n_x/N over all four
/// channels. Variances use independent Poisson channels; the κ term is added
/// only when requested.
inline PuseyEstimate pusey_from_counts(const CountRecord& rec, Strength s, Sign postselect, OverlapConvention convention,
                                       double direct_p_phi, bool include_kappa_term) {
  const double total = static_cast<double>(rec.total());
  if (!(total > 0.0)) throw Error(ErrorCode::EmptyChannel, "no coincidences recorded");
  const double pd = detection_weight(s);
  const double kappa = s.kappa();
  const double counts[4] = {static_cast<double>(rec.n_mm), static_cast<double>(rec.n_mp),
                            static_cast<double>(rec.n_pm), static_cast<double>(rec.n_pp)};
  // Channel indices of outcome 0 (meter +) and 1 (meter −) in `counts`.
  const int ch0 = postselect == Sign::minus ? 1 : 3;
  const int ch1 = postselect == Sign::minus ? 0 : 2;
  const double fraction = (counts[ch0] + counts[ch1]) / total;

  double p_phi = direct_p_phi;
  if (convention == OverlapConvention::inferred) p_phi = infer_overlap_from_postselection(fraction, s);
  if (!(p_phi > kProbabilityFloor)) throw Error(ErrorCode::OrthogonalPostselection, "p_phi vanishes");

  PuseyEstimate out;
  out.p_phi = p_phi;
  for (int x = 0; x < 2; ++x) {
    const int ch = x == 0 ? ch0 : ch1;
    const double q = counts[ch] / total;
    const double value = (q - pd) / p_phi - (1.0 + kappa) / 2.0;
    double var = 0.0;
    for (int j = 0; j < 4; ++j) {
      const double dq = ((j == ch ? 1.0 : 0.0) - q) / total;
      double dphi = 0.0;
      if (convention == OverlapConvention::inferred) {
        const double df = ((j == ch0 || j == ch1 ? 1.0 : 0.0) - fraction) / total;
        dphi = df / (1.0 - pd);
      }
      const double grad = dq / p_phi - (q - pd) / (p_phi * p_phi) * dphi;
      var += grad * grad * counts[j];
    }
    if (include_kappa_term && rec.config.kappa_uncertainty > 0.0) {
      if (!(s.coherence() > 0.0)) {
        throw Error(ErrorCode::InvalidArgument, "kappa uncertainty cannot be propagated at kappa = 1");
      }
      double dphi_dpd = 0.0;
      if (convention == OverlapConvention::inferred) dphi_dpd = (fraction - 0.5) / ((1.0 - pd) * (1.0 - pd));
      const double di_dpd = -1.0 / p_phi - (q - pd) / (p_phi * p_phi) * dphi_dpd;
      const double di_dkappa = di_dpd * kappa / s.coherence() - 0.5;
      var += di_dkappa * di_dkappa * rec.config.kappa_uncertainty * rec.config.kappa_uncertainty;
    }
    (x == 0 ? out.i0 : out.i1) = value;
    (x == 0 ? out.var_i0 : out.var_i1) = var;
  }
  return out;
}

}  // namespace postsel
