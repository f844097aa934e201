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

// Per-agent and per-system metrics: confidence, influence, alignment,
// disagreement, losses and the weighted belief diversity.

#ifndef FJLAB_METRICS_HPP_
#define FJLAB_METRICS_HPP_

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "fjlab/domain.hpp"
#include "fjlab/dynamics.hpp"

namespace fjlab {

inline constexpr double kEntropyZero = 1e-15;
inline constexpr double kLogLossFloor = 1e-12;

namespace detail {

inline void require_label(int y, long d) {
  if (y < 0 || y >= d) {
    throw Error(ErrorCode::kLabelOutOfRange,
                "label " + std::to_string(y) + " outside [0," +
                    std::to_string(d) + ")");
  }
}

}  // namespace detail

// One minus the entropy normalized by log d; 0 for uniform, 1 for one-hot.
inline double confidence(const Eigen::Ref<const Vector>& b) {
  const double d = static_cast<double>(b.size());
  double neg_entropy = 0.0;
  for (int c = 0; c < b.size(); ++c) {
    if (b[c] > kEntropyZero) neg_entropy += b[c] * std::log(b[c]);
  }
  const double conf = 1.0 + neg_entropy / std::log(d);
  if (conf < kEntropyZero) return 0.0;
  if (conf > 1.0 - kEntropyZero) return 1.0;
  return conf;
}

inline double confidence(const BeliefVector& b) { return confidence(b.values()); }

inline Vector confidences(const BeliefSnapshot& s) {
  Vector c(s.n());
  for (int j = 0; j < s.n(); ++j) c[j] = confidence(s.matrix().row(j).transpose());
  return c;
}

namespace detail {

// Second largest value (counting duplicates), i.e. v sorted descending at 1.
inline double second_largest(const Vector& v) {
  std::vector<double> sorted(v.data(), v.data() + v.size());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  return sorted.at(1);
}

// v / denom, or all ones when denom is zero.
inline Vector normalize_by(const Vector& v, double denom) {
  if (denom <= 0.0) return Vector::Ones(v.size());
  return v / denom;
}

}  // namespace detail

struct ConfidenceMetrics {
  Vector confidence;           // C_j
  Vector relative_confidence;  // C_j / second largest C
};

inline ConfidenceMetrics confidence_metrics(const BeliefSnapshot& s) {
  if (s.n() < 2) {
    throw Error(ErrorCode::kTooFewAgents,
                "relative confidence needs n >= 2");
  }
  ConfidenceMetrics out;
  out.confidence = confidences(s);
  out.relative_confidence = detail::normalize_by(
      out.confidence, detail::second_largest(out.confidence));
  return out;
}

enum class InfluenceNormalization { kMax, kSecondLargest };

struct InfluenceMetrics {
  AggregationWeights weights;
  Vector influence;         // pi_j / max pi
  Vector influence_second;  // pi_j / second largest pi
  Vector peer_influence;    // column sums of B with zeroed diagonal, / max
  Vector peer_raw;          // the unnormalized column sums

  const Vector& influence_by(InfluenceNormalization norm) const {
    return norm == InfluenceNormalization::kMax ? influence : influence_second;
  }
};

inline InfluenceMetrics influence_metrics(const FJParameters& params,
                                          const Vector& eta) {
  InfluenceMetrics out;
  out.weights = aggregate_pi(influence_weights(params), eta);
  const Vector& pi = out.weights.pi;
  out.influence = detail::normalize_by(pi, pi.maxCoeff());
  out.influence_second =
      params.n() >= 2 ? detail::normalize_by(pi, detail::second_largest(pi))
                      : Vector::Ones(1);
  Matrix b = social_matrix(params);
  b.diagonal().setZero();
  out.peer_raw = b.colwise().sum().transpose();
  out.peer_influence = detail::normalize_by(out.peer_raw, out.peer_raw.maxCoeff());
  return out;
}

// Mean Euclidean distance of each row from the mean row.
inline double disagreement(const BeliefSnapshot& s) {
  const Eigen::RowVectorXd mean = s.matrix().colwise().mean();
  double total = 0.0;
  for (int j = 0; j < s.n(); ++j) total += (s.matrix().row(j) - mean).norm();
  return total / s.n();
}

struct AlignmentMetrics {
  Vector alignment;          // cosine(s_j, mean)
  std::vector<int> score;    // argmax(s_j) == argmax(mean)
  std::vector<int> count;    // other agents sharing argmax(s_j)
};

inline AlignmentMetrics alignment_metrics(const BeliefSnapshot& s) {
  if (s.n() < 2) {
    throw Error(ErrorCode::kTooFewAgents, "alignment needs n >= 2");
  }
  const int n = s.n();
  const Vector mean = s.mean();
  const int group = argmax_index(mean);
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) labels[j] = argmax_index(s.matrix().row(j).transpose());

  AlignmentMetrics out;
  out.alignment.resize(n);
  out.score.resize(static_cast<std::size_t>(n));
  out.count.resize(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) {
    const Vector row = s.matrix().row(j).transpose();
    out.alignment[j] = row.dot(mean) / (row.norm() * mean.norm());
    out.score[j] = labels[j] == group ? 1 : 0;
    out.count[j] = static_cast<int>(
        std::count(labels.begin(), labels.end(), labels[j]) - 1);
  }
  return out;
}

inline double competence(const BeliefVector& b, int y) {
  detail::require_label(y, b.size());
  return b[y];
}

// Squared distance to the one-hot label.
inline double brier_loss(const Eigen::Ref<const Vector>& b, int y) {
  detail::require_label(y, b.size());
  double total = 0.0;
  for (int c = 0; c < b.size(); ++c) {
    const double diff = b[c] - (c == y ? 1.0 : 0.0);
    total += diff * diff;
  }
  return total;
}

inline double brier_loss(const BeliefVector& b, int y) {
  return brier_loss(b.values(), y);
}

inline double log_loss(const Eigen::Ref<const Vector>& b, int y,
                       double floor = kLogLossFloor) {
  detail::require_label(y, b.size());
  if (!(floor > 0.0)) {
    throw Error(ErrorCode::kInvariantViolation, "log-loss floor must be > 0");
  }
  return -std::log(std::max(b[y], floor));
}

inline double log_loss(const BeliefVector& b, int y,
                       double floor = kLogLossFloor) {
  return log_loss(b.values(), y, floor);
}

// Weighted mixture sum_j a_j s_j.
inline Vector mixture(const BeliefSnapshot& s, const Vector& a) {
  return s.matrix().transpose() * a;
}

namespace detail {

inline void require_weights(const BeliefSnapshot& s, const Vector& a) {
  if (a.size() != s.n()) {
    throw Error(ErrorCode::kShapeMismatch,
                "weights have " + std::to_string(a.size()) +
                    " entries for n=" + std::to_string(s.n()));
  }
  require_simplex(a, "weights");
}

}  // namespace detail

// D_a(S) = sum_j a_j ||s_j - s_bar_a||^2.
inline double diversity(const BeliefSnapshot& s, const Vector& a) {
  detail::require_weights(s, a);
  const Eigen::RowVectorXd center = mixture(s, a).transpose();
  double total = 0.0;
  for (int j = 0; j < s.n(); ++j) {
    total += a[j] * (s.matrix().row(j) - center).squaredNorm();
  }
  return total;
}

// The same quantity as 1/2 sum_ij a_i a_j ||s_i - s_j||^2.
inline double diversity_pairwise(const BeliefSnapshot& s, const Vector& a) {
  detail::require_weights(s, a);
  double total = 0.0;
  for (int i = 0; i < s.n(); ++i) {
    for (int j = i + 1; j < s.n(); ++j) {
      total += a[i] * a[j] * (s.matrix().row(i) - s.matrix().row(j)).squaredNorm();
    }
  }
  return total;
}

namespace detail {

// Ranks starting at 1, ties share their average rank.
inline std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

}  // namespace detail

// Pearson correlation of average ranks. Returns 0 when either side is
// constant.
inline double spearman(const std::vector<double>& x,
                       const std::vector<double>& y) {
  if (x.size() != y.size()) {
    throw Error(ErrorCode::kShapeMismatch, "spearman inputs differ in length");
  }
  if (x.size() < 3) {
    throw Error(ErrorCode::kTooFewPoints,
                "spearman needs >= 3 points, got " + std::to_string(x.size()));
  }
  const auto rx = detail::average_ranks(x);
  const auto ry = detail::average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mean = (n + 1.0) / 2.0;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mean) * (ry[i] - mean);
    sxx += (rx[i] - mean) * (rx[i] - mean);
    syy += (ry[i] - mean) * (ry[i] - mean);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

struct AgentMetricRow {
  int agent_id = 0;
  double confidence = 0.0;
  double relative_confidence = 0.0;
  double influence = 0.0;
  double peer_influence = 0.0;
  double alignment = 0.0;
  int alignment_score = 0;
  int alignment_count = 0;
  std::optional<double> competence;
  double gamma = 0.0;
};

struct SystemMetricRow {
  std::string sample_id;
  double disagreement = 0.0;
  double mean_confidence = 0.0;
  bool consensus_reached = false;
  AggregationWeights pi;
};

struct AnalyzeOptions {
  Vector eta;  // empty means uniform
  InfluenceNormalization normalization = InfluenceNormalization::kMax;
  double consensus_threshold = 0.05;
};

// All final-round argmax labels agree and the final disagreement is below
// the threshold.
inline bool consensus_reached(const BeliefSnapshot& final_round,
                              double threshold) {
  const int first = argmax_index(final_round.matrix().row(0).transpose());
  for (int j = 1; j < final_round.n(); ++j) {
    if (argmax_index(final_round.matrix().row(j).transpose()) != first) {
      return false;
    }
  }
  return disagreement(final_round) < threshold;
}

struct SampleMetrics {
  std::vector<AgentMetricRow> agents;
  SystemMetricRow system;
};

inline SampleMetrics analyze_sample(const DeliberationTrajectory& traj,
                                    const FJParameters& params,
                                    const AnalyzeOptions& opts = {}) {
  if (params.n() != traj.n()) {
    throw Error(ErrorCode::kShapeMismatch,
                "parameters for n=" + std::to_string(params.n()) +
                    " do not match sample '" + traj.sample_id() + "'");
  }
  const BeliefSnapshot& s = traj.innate();
  const Vector eta = opts.eta.size() == 0 ? uniform_eta(traj.n()) : opts.eta;
  const ConfidenceMetrics conf = confidence_metrics(s);
  const InfluenceMetrics infl = influence_metrics(params, eta);
  const AlignmentMetrics align = alignment_metrics(s);
  const Vector& influence = infl.influence_by(opts.normalization);

  SampleMetrics out;
  for (int j = 0; j < traj.n(); ++j) {
    AgentMetricRow row;
    row.agent_id = j;
    row.confidence = conf.confidence[j];
    row.relative_confidence = conf.relative_confidence[j];
    row.influence = influence[j];
    row.peer_influence = infl.peer_influence[j];
    row.alignment = align.alignment[j];
    row.alignment_score = align.score[static_cast<std::size_t>(j)];
    row.alignment_count = align.count[static_cast<std::size_t>(j)];
    if (traj.correct_label()) {
      row.competence = s.matrix()(j, *traj.correct_label());
    }
    row.gamma = params.gamma()[j];
    out.agents.push_back(row);
  }
  out.system.sample_id = traj.sample_id();
  out.system.disagreement = disagreement(s);
  out.system.mean_confidence = conf.confidence.mean();
  out.system.consensus_reached =
      consensus_reached(traj.final_snapshot(), opts.consensus_threshold);
  out.system.pi = infl.weights;
  return out;
}

}  // namespace fjlab

#endif  // FJLAB_METRICS_HPP_
