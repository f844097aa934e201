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

// Mixture-of-experts view of a deliberating system: per-agent risks,
// regrets, and the conditions under which routed mixtures beat the best
// single agent or a fixed ensemble.
//
// Risks are Brier losses. When an item carries the law of Y given S the
// exact conditional risk is used; otherwise the realized label is plugged in.

#ifndef FJLAB_ROUTING_HPP_
#define FJLAB_ROUTING_HPP_

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fjlab/domain.hpp"
#include "fjlab/dynamics.hpp"
#include "fjlab/metrics.hpp"

namespace fjlab {

struct LabeledItem {
  BeliefSnapshot snapshot;
  int label = 0;
  std::optional<Vector> pi{};         // per-item routing weights, if known
  std::optional<Vector> label_law{};  // P(Y = c | S), if known
  std::optional<int> region{};        // generating region, for synthetic data
};

class LabeledSnapshotSet {
 public:
  LabeledSnapshotSet() = default;

  void add(LabeledItem item) {
    const int n = item.snapshot.n();
    const int d = item.snapshot.d();
    if (!items_.empty() && n != n_) {
      throw Error(ErrorCode::kShapeMismatch,
                  "item " + std::to_string(items_.size()) + " has n=" +
                      std::to_string(n) + ", expected " + std::to_string(n_));
    }
    if (item.label < 0 || item.label >= d) {
      throw Error(ErrorCode::kLabelOutOfRange,
                  "item " + std::to_string(items_.size()) + " label " +
                      std::to_string(item.label) + " outside [0, " +
                      std::to_string(d) + ")");
    }
    if (item.pi) {
      if (item.pi->size() != n) {
        throw Error(ErrorCode::kShapeMismatch, "routing weights do not match n");
      }
      require_simplex(*item.pi, "routing weights");
    }
    if (item.label_law) {
      if (item.label_law->size() != d) {
        throw Error(ErrorCode::kShapeMismatch, "label law does not match d");
      }
      require_simplex(*item.label_law, "label law");
    }
    n_ = n;
    items_.push_back(std::move(item));
  }

  int n() const { return n_; }
  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  const std::vector<LabeledItem>& items() const { return items_; }
  const LabeledItem& operator[](std::size_t k) const { return items_[k]; }

 private:
  std::vector<LabeledItem> items_;
  int n_ = 0;
};

// r_j = brier_loss(s_j, y).
inline Vector local_risk(const BeliefSnapshot& s, int y) {
  Vector r(s.n());
  for (int j = 0; j < s.n(); ++j) r[j] = brier_loss(Vector(s.matrix().row(j).transpose()), y);
  return r;
}

namespace detail {

// Brier loss of a belief vector, in expectation over the label law if known.
inline double item_loss(const LabeledItem& item, const Vector& b) {
  if (!item.label_law) return brier_loss(b, item.label);
  double total = 0.0;
  const Vector& law = *item.label_law;
  for (int c = 0; c < law.size(); ++c) {
    if (law[c] > 0.0) total += law[c] * brier_loss(b, c);
  }
  return total;
}

inline int argmin_index(const Vector& v) {
  int best = 0;
  for (int j = 1; j < v.size(); ++j) {
    if (v[j] < v[best]) best = j;
  }
  return best;
}

}  // namespace detail

// Exact conditional risk when the label law is attached, realized otherwise.
inline Vector local_risk(const LabeledItem& item) {
  const BeliefSnapshot& s = item.snapshot;
  Vector r(s.n());
  for (int j = 0; j < s.n(); ++j) {
    r[j] = detail::item_loss(item, Vector(s.matrix().row(j).transpose()));
  }
  return r;
}

struct AmbiguityCheck {
  double lhs = 0.0;  // loss of the mixture
  double rhs = 0.0;  // weighted member loss minus diversity
  double gap = 0.0;
};

inline AmbiguityCheck ambiguity_check(const BeliefSnapshot& s, const Vector& a, int y) {
  const double div = diversity(s, a);  // validates a
  AmbiguityCheck out;
  out.lhs = brier_loss(mixture(s, a), y);
  out.rhs = a.dot(local_risk(s, y)) - div;
  out.gap = out.lhs - out.rhs;
  return out;
}

// sum_j pi_j r_j - min_j r_j, clipped at the rounding floor.
inline double regret_from_risk(const Vector& r, const Vector& pi) {
  return std::max(0.0, pi.dot(r) - r.minCoeff());
}

inline double routing_regret(const BeliefSnapshot& s, const Vector& pi, int y) {
  if (pi.size() != s.n()) {
    throw Error(ErrorCode::kShapeMismatch, "routing weights do not match n");
  }
  require_simplex(pi, "routing weights");
  return regret_from_risk(local_risk(s, y), pi);
}

// G_a(S): probability mass a fixed ensemble spends on worse agents.
inline double ensemble_waste(const BeliefSnapshot& s, const Vector& a, int y) {
  return routing_regret(s, a, y);
}

using Router = std::function<Vector(const LabeledItem&)>;

// pi_j proportional to exp(beta C_j), shifted by the max for stability.
inline Vector confidence_router(const BeliefSnapshot& s, double beta) {
  if (!(beta >= 0.0)) {
    throw Error(ErrorCode::kInvariantViolation, "beta must be >= 0");
  }
  const Vector c = confidences(s);
  Vector z = beta * c;
  z = (z.array() - z.maxCoeff()).exp().matrix();
  return z / z.sum();
}

namespace routers {

inline Router constant(Vector a) {
  require_simplex(a, "constant weights");
  return [a = std::move(a)](const LabeledItem& item) {
    if (item.snapshot.n() != a.size()) {
      throw Error(ErrorCode::kShapeMismatch, "constant weights do not match n");
    }
    return a;
  };
}

inline Router softmax_confidence(double beta) {
  return [beta](const LabeledItem& item) { return confidence_router(item.snapshot, beta); };
}

// All weight on the most confident agent, lowest index on ties.
inline Router hard_confidence() {
  return [](const LabeledItem& item) {
    const Vector c = confidences(item.snapshot);
    Vector pi = Vector::Zero(c.size());
    pi[argmax_index(c)] = 1.0;
    return pi;
  };
}

// The FJ aggregate pi = M^T eta of one parameter set, shared by all items.
inline Router fj(const FJParameters& params, const Vector& eta) {
  Vector pi = aggregate_pi(influence_weights(params), eta).pi;
  return constant(std::move(pi));
}

// Per-item weights stored on the data (for instance from per-sample fits).
inline Router stored() {
  return [](const LabeledItem& item) {
    if (!item.pi) {
      throw Error(ErrorCode::kMissingParams, "item carries no routing weights");
    }
    return *item.pi;
  };
}

// Hindsight router; only meaningful for tests and upper bounds.
inline Router oracle_min_risk() {
  return [](const LabeledItem& item) {
    const Vector r = local_risk(item);
    Vector pi = Vector::Zero(r.size());
    pi[detail::argmin_index(r)] = 1.0;
    return pi;
  };
}

}  // namespace routers

struct ConfusionCounts {
  // Rows: condition predicted true/false. Columns: mixture beat best single.
  int true_positive = 0;
  int false_positive = 0;
  int false_negative = 0;
  int true_negative = 0;
};

struct RoutingReport {
  int best_agent = 0;  // j*: lowest mean risk over the set
  double mean_best_single_risk = 0.0;
  double mean_min_local_risk = 0.0;
  double specialization_gain = 0.0;
  double mean_local_diversity = 0.0;
  double mean_routing_regret = 0.0;
  double thm1_lhs = 0.0;  // gain + diversity
  double thm1_rhs = 0.0;  // regret
  bool thm1_holds = false;
  bool thm2_holds = false;  // against the supplied constant ensemble
  double thm2_lhs = 0.0;
  double thm2_rhs = 0.0;
  double mean_moe_loss = 0.0;
  double mean_best_single_loss = 0.0;
  std::vector<bool> per_sample_thm1;
  std::vector<bool> per_sample_moe_wins;
  ConfusionCounts confusion;
};

namespace detail {

inline Vector checked_weights(const Router& router, const LabeledItem& item) {
  Vector pi = router(item);
  if (pi.size() != item.snapshot.n()) {
    throw Error(ErrorCode::kShapeMismatch, "router output does not match n");
  }
  require_simplex(pi, "router output");
  return pi;
}

inline void require_nonempty(const LabeledSnapshotSet& data) {
  if (data.empty()) throw Error(ErrorCode::kEmptyInput, "no labeled snapshots");
}

inline Vector constant_or_uniform(const LabeledSnapshotSet& data,
                                  const std::optional<Vector>& a) {
  Vector w = a ? *a : Vector::Constant(data.n(), 1.0 / data.n());
  if (w.size() != data.n()) {
    throw Error(ErrorCode::kShapeMismatch, "ensemble weights do not match n");
  }
  require_simplex(w, "ensemble weights");
  return w;
}

}  // namespace detail

struct Thm2Result {
  double lhs = 0.0;  // E[sum_j (a_j - pi_j) r_j]
  double rhs = 0.0;  // E[D_a - D_pi]
  bool holds = false;
  double realized_gap = 0.0;  // mean loss of a mixture minus pi mixture
};

inline Thm2Result thm2_condition(const LabeledSnapshotSet& data, const Vector& a,
                                 const Router& router) {
  detail::require_nonempty(data);
  const Vector w = detail::constant_or_uniform(data, a);
  Thm2Result out;
  double loss_a = 0.0, loss_pi = 0.0;
  for (const auto& item : data.items()) {
    const Vector pi = detail::checked_weights(router, item);
    const Vector r = local_risk(item);
    out.lhs += (w - pi).dot(r);
    out.rhs += diversity(item.snapshot, w) - diversity(item.snapshot, pi);
    loss_a += detail::item_loss(item, mixture(item.snapshot, w));
    loss_pi += detail::item_loss(item, mixture(item.snapshot, pi));
  }
  const double count = static_cast<double>(data.size());
  out.lhs /= count;
  out.rhs /= count;
  out.realized_gap = (loss_a - loss_pi) / count;
  out.holds = out.lhs > out.rhs;
  return out;
}

// Mixture-vs-best-single condition: gain + E[D_pi] > E[regret_pi].
// `ensemble` (uniform by default) is the constant mixture compared against
// in the router-vs-ensemble fields.
inline RoutingReport thm1_condition(const LabeledSnapshotSet& data, const Router& router,
                                    const std::optional<Vector>& ensemble = std::nullopt) {
  detail::require_nonempty(data);
  const int n = data.n();
  const std::size_t count = data.size();

  std::vector<Vector> risks;
  std::vector<Vector> weights;
  risks.reserve(count);
  weights.reserve(count);
  Vector mean_risk = Vector::Zero(n);
  for (const auto& item : data.items()) {
    risks.push_back(local_risk(item));
    weights.push_back(detail::checked_weights(router, item));
    mean_risk += risks.back();
  }
  mean_risk /= static_cast<double>(count);

  RoutingReport rep;
  rep.best_agent = detail::argmin_index(mean_risk);
  const int js = rep.best_agent;
  for (std::size_t k = 0; k < count; ++k) {
    const LabeledItem& item = data[k];
    const Vector& r = risks[k];
    const Vector& pi = weights[k];
    const double min_r = r.minCoeff();
    const double gain = r[js] - min_r;
    const double div = diversity(item.snapshot, pi);
    const double regret = regret_from_risk(r, pi);
    rep.mean_best_single_risk += r[js];
    rep.mean_min_local_risk += min_r;
    rep.specialization_gain += gain;
    rep.mean_local_diversity += div;
    rep.mean_routing_regret += regret;

    const double moe = detail::item_loss(item, mixture(item.snapshot, pi));
    const double single = r[js];
    rep.mean_moe_loss += moe;
    rep.mean_best_single_loss += single;
    const bool predicted = gain + div > regret;
    const bool actual = moe < single;
    rep.per_sample_thm1.push_back(predicted);
    rep.per_sample_moe_wins.push_back(actual);
    if (predicted && actual) ++rep.confusion.true_positive;
    if (predicted && !actual) ++rep.confusion.false_positive;
    if (!predicted && actual) ++rep.confusion.false_negative;
    if (!predicted && !actual) ++rep.confusion.true_negative;
  }
  const double c = static_cast<double>(count);
  rep.mean_best_single_risk /= c;
  rep.mean_min_local_risk /= c;
  rep.specialization_gain = std::max(0.0, rep.specialization_gain / c);
  rep.mean_local_diversity /= c;
  rep.mean_routing_regret /= c;
  rep.mean_moe_loss /= c;
  rep.mean_best_single_loss /= c;
  rep.thm1_lhs = rep.specialization_gain + rep.mean_local_diversity;
  rep.thm1_rhs = rep.mean_routing_regret;
  rep.thm1_holds = rep.thm1_lhs > rep.thm1_rhs;

  const Thm2Result t2 = thm2_condition(data, detail::constant_or_uniform(data, ensemble), router);
  rep.thm2_lhs = t2.lhs;
  rep.thm2_rhs = t2.rhs;
  rep.thm2_holds = t2.holds;
  return rep;
}

struct ConfidenceRoutingResult {
  double g = 0.0;        // E[G_a]
  double delta_c = 0.0;  // E[r_{j_C} - min r]
  double d_a = 0.0;      // E[D_a]
  bool holds = false;    // g > delta_c + d_a
};

// Hard confidence routing against a constant ensemble a.
inline ConfidenceRoutingResult confidence_routing_condition(const LabeledSnapshotSet& data,
                                                            const Vector& a) {
  detail::require_nonempty(data);
  const Vector w = detail::constant_or_uniform(data, a);
  ConfidenceRoutingResult out;
  for (const auto& item : data.items()) {
    const Vector r = local_risk(item);
    const int jc = argmax_index(confidences(item.snapshot));
    out.g += regret_from_risk(r, w);
    out.delta_c += r[jc] - r.minCoeff();
    out.d_a += diversity(item.snapshot, w);
  }
  const double c = static_cast<double>(data.size());
  out.g /= c;
  out.delta_c /= c;
  out.d_a /= c;
  out.holds = out.g > out.delta_c + out.d_a;
  return out;
}

}  // namespace fjlab

#endif  // FJLAB_ROUTING_HPP_
