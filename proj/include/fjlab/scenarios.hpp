/*
 * Copyright 2026 The fjlab Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Synthetic competence scenarios with closed-form losses.
//
// Exclusive: the input space splits into n regions; in region k agent k puts
// p on the true label and the rest spread evenly, every other agent is
// uniform. Imperfect: the non-competent agents additionally agree on one
// wrong label, so a fixed ensemble can be outvoted by a wrong majority while
// routing to the most confident agent stays right.
//
// Draws are keyed by (seed, sample index), so a dataset does not depend on
// generation order.

#ifndef FJLAB_SCENARIOS_HPP_
#define FJLAB_SCENARIOS_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "fjlab/domain.hpp"
#include "fjlab/metrics.hpp"
#include "fjlab/random.hpp"
#include "fjlab/routing.hpp"

namespace fjlab {

struct ExclusiveScenario {
  int n = 5;
  int d = 10;
  Vector rho;  // region probabilities; zero entries are regions never drawn
  double epsilon = 0.1;

  static ExclusiveScenario balanced(int n, int d, double epsilon) {
    return ExclusiveScenario{n, d, Vector::Constant(n, 1.0 / n), epsilon};
  }

  double p() const { return 1.0 - epsilon; }
  double u() const { return 1.0 / d; }

  bool is_balanced(double tol = 1e-12) const {
    return rho.size() > 0 && (rho.array() - 1.0 / n).abs().maxCoeff() <= tol;
  }

  void validate() const {
    if (n < 1 || d < 2) {
      throw Error(ErrorCode::kInvalidScenario, "exclusive scenario needs n >= 1, d >= 2");
    }
    if (rho.size() != n || !on_simplex(rho) || rho.minCoeff() < 0.0) {
      throw Error(ErrorCode::kInvalidScenario,
                  "rho must be a probability vector with n entries");
    }
    if (!(epsilon > 0.0 && epsilon < 1.0 - 1.0 / d)) {
      throw Error(ErrorCode::kInvalidScenario,
                  "epsilon " + std::to_string(epsilon) + " outside (0, 1 - 1/d)");
    }
  }
};

struct ImperfectScenario {
  int n = 5;
  int d = 4;
  double p = 0.9;
  double u = 0.05;
  double c = 0.7;

  // With two labels the wrong label takes everything the true one does not.
  double effective_c() const { return d == 2 ? 1.0 - u : c; }

  double residual() const { return d > 2 ? (1.0 - u - c) / (d - 2) : 0.0; }

  void validate() const {
    auto fail = [&](const std::string& why) {
      throw Error(ErrorCode::kInvalidScenario,
                  "imperfect scenario (n=" + std::to_string(n) + ", d=" +
                      std::to_string(d) + ", p=" + std::to_string(p) + ", u=" +
                      std::to_string(u) + ", c=" + std::to_string(c) + "): " + why);
    };
    if (n < 3 || d < 2) fail("needs n >= 3, d >= 2");
    if (!(u > 0.0 && u < 1.0 / d && 1.0 / d < p && p < 1.0)) fail("needs 0 < u < 1/d < p < 1");
    if (!(effective_c() > u)) fail("needs c > u");
    if (d > 2 && residual() < 0.0) fail("u + c exceeds 1");
  }

  // Mixture mass on the shared wrong label beats mass on the true label.
  bool wrong_majority() const {
    return (1.0 - p) / (d - 1) + (n - 1) * effective_c() > p + (n - 1) * u;
  }
};

namespace detail {

inline Vector competent_row(int d, int y, double p) {
  Vector row = Vector::Constant(d, (1.0 - p) / (d - 1));
  row[y] = p;
  return row;
}

inline Vector one_hot_vector(int d, int k) {
  Vector v = Vector::Zero(d);
  v[k] = 1.0;
  return v;
}

// Inverse-CDF draw that never returns a zero-probability index.
inline int draw_region(CounterRng& rng, const Vector& rho) {
  const double x = rng.uniform();
  double cum = 0.0;
  int last = 0;
  for (int j = 0; j < rho.size(); ++j) {
    if (rho[j] <= 0.0) continue;
    last = j;
    cum += rho[j];
    if (x < cum) return j;
  }
  return last;
}

}  // namespace detail

// Labels are uniform within each region and S reveals y, so the attached
// label law is the point mass on y.
inline LabeledSnapshotSet gen_exclusive(const ExclusiveScenario& sc, int samples,
                                        std::uint64_t seed) {
  sc.validate();
  LabeledSnapshotSet set;
  const Vector uniform = Vector::Constant(sc.d, sc.u());
  for (int k = 0; k < samples; ++k) {
    CounterRng rng(seed, static_cast<std::uint64_t>(k));
    const int region = detail::draw_region(rng, sc.rho);
    const int y = rng.below(sc.d);
    Matrix m(sc.n, sc.d);
    for (int j = 0; j < sc.n; ++j) {
      m.row(j) = (j == region ? detail::competent_row(sc.d, y, sc.p()) : uniform).transpose();
    }
    LabeledItem item{BeliefSnapshot(std::move(m)), y};
    item.label_law = detail::one_hot_vector(sc.d, y);
    item.region = region;
    set.add(std::move(item));
  }
  return set;
}

struct ExclusiveLosses {
  double l_ens = 0.0;
  double l_moe = 0.0;
  double gap_balanced = 0.0;  // closed form for balanced rho, uniform a
  double gap_single = 0.0;    // against the agent with the largest region
};

inline double exclusive_ensemble_loss(const ExclusiveScenario& sc, const Vector& a) {
  sc.validate();
  if (a.size() != sc.n) {
    throw Error(ErrorCode::kShapeMismatch, "ensemble weights do not match n");
  }
  require_simplex(a, "ensemble weights");
  const double p = sc.p(), u = sc.u();
  double loss = 0.0;
  for (int j = 0; j < sc.n; ++j) {
    if (sc.rho[j] > 0.0) loss -= sc.rho[j] * std::log(u + (p - u) * a[j]);
  }
  return loss;
}

inline ExclusiveLosses exclusive_losses(const ExclusiveScenario& sc, const Vector& a) {
  ExclusiveLosses out;
  out.l_ens = exclusive_ensemble_loss(sc, a);
  const double p = sc.p(), u = sc.u();
  out.l_moe = -std::log(p);
  out.gap_balanced = std::log(p) - std::log(u + (p - u) / sc.n);
  int best = 0;
  for (int j = 1; j < sc.n; ++j) {
    if (sc.rho[j] > sc.rho[best]) best = j;
  }
  out.gap_single = (1.0 - sc.rho[best]) * std::log(p / u);
  return out;
}

// Minimizes -sum_j rho_j ln(u + (p-u) a_j) over the simplex. The optimum is
// a water-filling a_j = max(0, rho_j / mu - u/(p-u)); the active set is a
// prefix of the regions sorted by rho, so it is found exactly.
inline Vector optimal_fixed_ensemble(const ExclusiveScenario& sc) {
  sc.validate();
  const double k = sc.u() / (sc.p() - sc.u());
  std::vector<int> order(static_cast<std::size_t>(sc.n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int x, int y) { return sc.rho[x] > sc.rho[y]; });
  double mu = 0.0;
  int active = 0;
  double prefix = 0.0;
  for (int m = 1; m <= sc.n; ++m) {
    prefix += sc.rho[order[m - 1]];
    const double candidate = prefix / (1.0 + m * k);
    if (sc.rho[order[m - 1]] / candidate - k > 0.0) {
      mu = candidate;
      active = m;
    } else {
      break;
    }
  }
  if (active == 0 || !(mu > 0.0)) {
    throw Error(ErrorCode::kNoConvergence, "water-filling found no active region");
  }
  Vector a = Vector::Zero(sc.n);
  for (int m = 0; m < active; ++m) {
    a[order[m]] = std::max(0.0, sc.rho[order[m]] / mu - k);
  }
  a /= a.sum();
  if (sc.is_balanced()) a.setConstant(1.0 / sc.n);  // exact symmetric optimum
  return a;
}

struct MoeAdvantage {
  bool holds = false;
  double l_moe = 0.0;
  double l_ens_opt = 0.0;
  double margin = 0.0;  // l_ens_opt - l_moe
};

inline MoeAdvantage moe_advantage_check(const ExclusiveScenario& sc) {
  sc.validate();
  if (sc.n < 2 || sc.rho.minCoeff() <= 0.0) {
    throw Error(ErrorCode::kInvalidScenario,
                "advantage check needs n >= 2 and every region with positive mass");
  }
  MoeAdvantage out;
  out.l_moe = -std::log(sc.p());
  out.l_ens_opt = exclusive_ensemble_loss(sc, optimal_fixed_ensemble(sc));
  out.margin = out.l_ens_opt - out.l_moe;
  out.holds = out.l_moe < out.l_ens_opt;
  return out;
}

// Log loss when the router picks a wrong (uniform) agent with probability delta.
inline double l_route(const ExclusiveScenario& sc, double delta) {
  return -(1.0 - delta) * std::log(sc.p()) - delta * std::log(sc.u());
}

// Routing error rate at which routing stops beating the uniform ensemble.
inline double routing_error_threshold(const ExclusiveScenario& sc) {
  sc.validate();
  if (!sc.is_balanced()) {
    throw Error(ErrorCode::kUnbalancedScenario,
                "closed-form threshold needs equal region probabilities");
  }
  const double p = sc.p(), u = sc.u();
  return (std::log(p) - std::log(u + (p - u) / sc.n)) / (std::log(p) - std::log(u));
}

// Shared wrong label z = (y + 1) mod d; residual mass spread evenly over the
// remaining labels.
inline LabeledSnapshotSet gen_imperfect(const ImperfectScenario& sc, int samples,
                                        std::uint64_t seed) {
  sc.validate();
  const double c = sc.effective_c();
  const double rest = sc.residual();

  // The rows of every region are permutations of these two, so checking the
  // confidence order once covers the whole dataset.
  {
    const double c_comp = confidence(detail::competent_row(sc.d, 0, sc.p));
    Vector other = Vector::Constant(sc.d, rest);
    other[0] = sc.u;
    other[1] = c;
    const double c_other = confidence(other);
    if (!(c_comp > c_other)) {
      throw Error(ErrorCode::kConfidenceOrderViolated,
                  "competent confidence " + std::to_string(c_comp) +
                      " does not exceed " + std::to_string(c_other) + " at n=" +
                      std::to_string(sc.n) + ", d=" + std::to_string(sc.d) +
                      ", p=" + std::to_string(sc.p) + ", u=" + std::to_string(sc.u) +
                      ", c=" + std::to_string(sc.c));
    }
  }

  LabeledSnapshotSet set;
  for (int k = 0; k < samples; ++k) {
    CounterRng rng(seed, static_cast<std::uint64_t>(k));
    const int region = rng.below(sc.n);
    const int y = rng.below(sc.d);
    const int z = (y + 1) % sc.d;
    Vector other = Vector::Constant(sc.d, rest);
    other[y] = sc.u;
    other[z] = c;
    Matrix m(sc.n, sc.d);
    for (int j = 0; j < sc.n; ++j) {
      m.row(j) = (j == region ? detail::competent_row(sc.d, y, sc.p) : other).transpose();
    }
    LabeledItem item{BeliefSnapshot(std::move(m)), y};
    item.label_law = detail::one_hot_vector(sc.d, y);
    item.region = region;
    set.add(std::move(item));
  }
  return set;
}

// Log-loss advantage of hard confidence routing over the uniform ensemble.
inline double imperfect_gap(const ImperfectScenario& sc) {
  sc.validate();
  const double gap = std::log(sc.p / ((sc.p + (sc.n - 1) * sc.u) / sc.n));
  if (!(gap > 0.0)) {
    throw Error(ErrorCode::kInvalidScenario, "imperfect gap is not positive");
  }
  return gap;
}

// Random snapshots with a random label law; labels are drawn from the law.
// Used where exact conditional risks must differ from realized ones.
inline LabeledSnapshotSet gen_known_law(int n, int d, int samples, std::uint64_t seed) {
  if (n < 1 || d < 2) {
    throw Error(ErrorCode::kInvalidScenario, "known-law data needs n >= 1, d >= 2");
  }
  LabeledSnapshotSet set;
  auto simplex = [d](CounterRng& rng) {
    Vector v(d);
    for (int c = 0; c < d; ++c) v[c] = rng.exponential();
    return Vector(v / v.sum());
  };
  for (int k = 0; k < samples; ++k) {
    CounterRng rng(seed, static_cast<std::uint64_t>(k));
    Matrix m(n, d);
    for (int j = 0; j < n; ++j) m.row(j) = simplex(rng).transpose();
    Vector law = simplex(rng);
    const int y = detail::draw_region(rng, law);
    LabeledItem item{BeliefSnapshot(std::move(m)), y};
    item.label_law = std::move(law);
    set.add(std::move(item));
  }
  return set;
}

// Monte Carlo estimators over generated data.

inline double mc_log_loss(const LabeledSnapshotSet& set, const Router& router) {
  if (set.empty()) throw Error(ErrorCode::kEmptyInput, "no samples");
  double total = 0.0;
  for (const auto& item : set.items()) {
    total += log_loss(mixture(item.snapshot, router(item)), item.label);
  }
  return total / static_cast<double>(set.size());
}

inline double mc_ensemble_log_loss(const LabeledSnapshotSet& set, const Vector& a) {
  return mc_log_loss(set, routers::constant(a));
}

inline double mc_hard_confidence_log_loss(const LabeledSnapshotSet& set) {
  return mc_log_loss(set, routers::hard_confidence());
}

struct CrossoverEstimate {
  double delta = 0.0;
  double l_ens = 0.0;  // Monte Carlo loss of the optimal fixed ensemble
};

// Bisection for the error rate where noisy routing matches the optimal fixed
// ensemble. Each sample gets one uniform draw U_k; at error rate delta it is
// misrouted (to a uniformly chosen other agent) iff U_k < delta, so every
// delta is evaluated on common random numbers and the estimate is monotone.
inline CrossoverEstimate mc_routing_crossover(const ExclusiveScenario& sc, int samples,
                                              std::uint64_t seed) {
  const LabeledSnapshotSet set = gen_exclusive(sc, samples, seed);
  if (sc.n < 2) throw Error(ErrorCode::kInvalidScenario, "crossover needs n >= 2");
  CrossoverEstimate out;
  out.l_ens = mc_ensemble_log_loss(set, optimal_fixed_ensemble(sc));

  std::vector<double> draw(set.size()), right(set.size()), wrong(set.size());
  for (std::size_t k = 0; k < set.size(); ++k) {
    CounterRng rng(seed ^ 0x726f757465ULL, k);
    draw[k] = rng.uniform();
    const LabeledItem& item = set[k];
    const int region = *item.region;
    int other = rng.below(sc.n - 1);
    if (other >= region) ++other;
    right[k] = log_loss(Vector(item.snapshot.matrix().row(region).transpose()), item.label);
    wrong[k] = log_loss(Vector(item.snapshot.matrix().row(other).transpose()), item.label);
  }
  auto routed = [&](double delta) {
    double total = 0.0;
    for (std::size_t k = 0; k < set.size(); ++k) total += draw[k] < delta ? wrong[k] : right[k];
    return total / static_cast<double>(set.size());
  };
  double lo = 0.0, hi = 1.0;
  if (!(routed(lo) < out.l_ens && routed(hi) >= out.l_ens)) {
    throw Error(ErrorCode::kNoConvergence, "routing loss does not cross the ensemble loss");
  }
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    (routed(mid) < out.l_ens ? lo : hi) = mid;
  }
  out.delta = 0.5 * (lo + hi);
  return out;
}

// Single-round trajectories (innate beliefs only) for the trajectory file.
inline std::vector<DeliberationTrajectory> to_trajectories(const LabeledSnapshotSet& set,
                                                           const std::string& prefix) {
  std::vector<DeliberationTrajectory> out;
  out.reserve(set.size());
  const int width = static_cast<int>(std::to_string(set.size()).size());
  for (std::size_t k = 0; k < set.size(); ++k) {
    std::string idx = std::to_string(k);
    idx.insert(0, static_cast<std::size_t>(std::max(0, width - static_cast<int>(idx.size()))), '0');
    std::map<std::string, std::string> meta;
    if (set[k].region) meta["region"] = std::to_string(*set[k].region);
    out.emplace_back(std::vector<BeliefSnapshot>{set[k].snapshot}, prefix + idx,
                     set[k].label, std::move(meta));
  }
  return out;
}

}  // namespace fjlab

#endif  // FJLAB_SCENARIOS_HPP_
