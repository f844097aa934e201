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

// Friedkin-Johnsen belief dynamics.
//
// One round updates every agent as
//
//   b_i(t+1) = g_i s_i + (1 - g_i) a_i b_i(t)
//              + (1 - g_i)(1 - a_i) sum_j w_ij b_j(t)
//
// or, stacked, B(t+1) = G S + H B(t) with H = (I - G)(A + (I - A) W).
// When rho(H) < 1 the rounds converge to B* = (I - H)^-1 G S = M S, where the
// influence matrix M is nonnegative and row-stochastic, so a linear readout
// eta of the equilibrium is the fixed ensemble pi^T = eta^T M over the innate
// beliefs.

#ifndef FJLAB_DYNAMICS_HPP_
#define FJLAB_DYNAMICS_HPP_

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <utility>
#include <vector>

#include "fjlab/domain.hpp"

namespace fjlab {

// Margin below 1 that the spectral radius must clear for a direct solve.
inline constexpr double kContractionMargin = 1e-6;
inline constexpr double kRowStochasticTol = 1e-8;

struct SystemMatrix {
  Matrix h;
};

struct InfluenceMatrix {
  Matrix m;
};

// B = A + (I - A) W. An agent without neighbours has nowhere to send its
// susceptible mass, so its peer term falls back to its own belief.
inline Matrix social_matrix(const FJParameters& params) {
  const int n = params.n();
  Matrix b = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    const double a = params.alpha()[i];
    if (params.has_edges(i)) {
      b.row(i) = (1.0 - a) * params.w().row(i);
      b(i, i) += a;
    } else {
      b(i, i) = 1.0;
    }
  }
  return b;
}

inline SystemMatrix build_h(const FJParameters& params) {
  const Vector keep = Vector::Ones(params.n()) - params.gamma();
  return SystemMatrix{keep.asDiagonal() * social_matrix(params)};
}

namespace detail {

inline void require_same_shape(const FJParameters& params,
                               const BeliefSnapshot& a,
                               const BeliefSnapshot& b) {
  if (a.n() != params.n() || b.n() != params.n() || a.d() != b.d()) {
    throw Error(ErrorCode::kShapeMismatch,
                "parameters for n=" + std::to_string(params.n()) +
                    " applied to snapshots " + std::to_string(a.n()) + "x" +
                    std::to_string(a.d()) + " and " + std::to_string(b.n()) +
                    "x" + std::to_string(b.d()));
  }
}

// Unnormalized one-round update.
inline Matrix fj_step_raw(const FJParameters& params, const Matrix& innate,
                          const Matrix& current) {
  const int n = params.n();
  Matrix next(current.rows(), current.cols());
  for (int i = 0; i < n; ++i) {
    const double g = params.gamma()[i];
    const double a = params.alpha()[i];
    Eigen::RowVectorXd peer;
    if (params.has_edges(i)) {
      peer = params.w().row(i) * current;
    } else {
      peer = current.row(i);
    }
    next.row(i) = g * innate.row(i) + (1.0 - g) * a * current.row(i) +
                  (1.0 - g) * (1.0 - a) * peer;
  }
  return next;
}

}  // namespace detail

// One FJ round. Output rows are renormalized; `drift` receives the largest
// pre-renormalization deviation of a row sum from 1.
inline BeliefSnapshot fj_step(const FJParameters& params,
                              const BeliefSnapshot& innate,
                              const BeliefSnapshot& current,
                              double* drift = nullptr) {
  detail::require_same_shape(params, innate, current);
  return BeliefSnapshot::renormalized(
      detail::fj_step_raw(params, innate.matrix(), current.matrix()), drift);
}

// Perron root of |H| by power iteration on |H| + I, seeded with the all-ones
// vector. The unit shift leaves the Perron root ordering intact and removes
// the oscillation periodic (e.g. bipartite) matrices cause.
inline double spectral_radius(const SystemMatrix& h, double tol = 1e-10,
                              int max_iter = 10000) {
  if (!(tol > 0.0)) {
    throw Error(ErrorCode::kInvariantViolation, "tol must be positive");
  }
  const Matrix a = h.h.cwiseAbs();
  const long n = a.rows();
  if (n == 0) return 0.0;
  Vector x = Vector::Ones(n);
  for (int iter = 0; iter < max_iter; ++iter) {
    const Vector y = a * x;
    const Vector shifted = y + x;
    const double norm = shifted.lpNorm<Eigen::Infinity>();
    const double lambda = norm - 1.0;
    const double residual = (y - lambda * x).lpNorm<Eigen::Infinity>();
    if (residual < tol) return std::max(lambda, 0.0);
    x = shifted / norm;
  }
  throw Error(ErrorCode::kNoConvergence,
              "power iteration did not reach residual " + std::to_string(tol) +
                  " in " + std::to_string(max_iter) + " iterations");
}

namespace detail {

inline Eigen::PartialPivLU<Matrix> contractive_lu(const FJParameters& params,
                                                  const SystemMatrix& h) {
  const double rho = spectral_radius(h);
  if (rho >= 1.0 - kContractionMargin) {
    throw Error(ErrorCode::kNotContractive,
                "spectral radius " + std::to_string(rho) +
                    " >= 1 - " + std::to_string(kContractionMargin));
  }
  const int n = params.n();
  return Eigen::PartialPivLU<Matrix>(Matrix::Identity(n, n) - h.h);
}

inline void require_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) {
    throw Error(ErrorCode::kSingularSystem,
                std::string(what) + " solve produced non-finite values");
  }
}

}  // namespace detail

// Solves (I - H) B* = G S directly; never forms the inverse.
inline BeliefSnapshot equilibrium(const FJParameters& params,
                                  const BeliefSnapshot& innate) {
  detail::require_same_shape(params, innate, innate);
  const SystemMatrix h = build_h(params);
  const auto lu = detail::contractive_lu(params, h);
  const Matrix rhs = params.gamma().asDiagonal() * innate.matrix();
  const Matrix b = lu.solve(rhs);
  detail::require_finite(b, "equilibrium");
  return BeliefSnapshot::renormalized(b, nullptr);
}

inline InfluenceMatrix influence_weights(const FJParameters& params) {
  const SystemMatrix h = build_h(params);
  const auto lu = detail::contractive_lu(params, h);
  const Matrix gamma = params.gamma().asDiagonal();
  Matrix m = lu.solve(gamma);
  detail::require_finite(m, "influence");
  for (int i = 0; i < m.rows(); ++i) {
    const double s = m.row(i).sum();
    if (std::abs(s - 1.0) > kRowStochasticTol || m.row(i).minCoeff() < -1e-12) {
      throw Error(ErrorCode::kDegenerateStubbornness,
                  detail::fmt_index("influence row", i) + " sums to " +
                      std::to_string(s) + " (gamma_i = " +
                      std::to_string(params.gamma()[i]) + ")");
    }
  }
  return InfluenceMatrix{std::move(m)};
}

inline AggregationWeights aggregate_pi(const InfluenceMatrix& m,
                                       const Vector& eta) {
  if (eta.size() != m.m.rows()) {
    throw Error(ErrorCode::kShapeMismatch,
                "eta has " + std::to_string(eta.size()) + " entries for n=" +
                    std::to_string(m.m.rows()));
  }
  require_simplex(eta, "eta");
  Vector pi = m.m.transpose() * eta;
  if (std::abs(pi.sum() - 1.0) > kRowStochasticTol ||
      pi.minCoeff() < -1e-12) {
    throw Error(ErrorCode::kInvariantViolation,
                "aggregate weights leave the simplex");
  }
  pi = pi.cwiseMax(0.0);
  detail::renormalize_in_place(pi);
  return AggregationWeights{eta, std::move(pi)};
}

inline Vector uniform_eta(int n) { return Vector::Constant(n, 1.0 / n); }

namespace detail {

inline std::string format_drift(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", x);
  return buf;
}

}  // namespace detail

// Rolls the dynamics forward from B(0) = S. The per-round renormalization
// drift is recorded in metadata["renorm_drift"].
inline DeliberationTrajectory simulate(const FJParameters& params,
                                       const BeliefSnapshot& innate, int rounds,
                                       std::string sample_id = "sim") {
  if (rounds < 1) {
    throw Error(ErrorCode::kInvariantViolation, "rounds must be >= 1");
  }
  detail::require_same_shape(params, innate, innate);
  std::vector<BeliefSnapshot> snapshots;
  snapshots.reserve(static_cast<std::size_t>(rounds) + 1);
  snapshots.push_back(innate);
  std::string drift_log;
  for (int t = 0; t < rounds; ++t) {
    double drift = 0.0;
    snapshots.push_back(fj_step(params, innate, snapshots.back(), &drift));
    if (t > 0) drift_log += ',';
    drift_log += detail::format_drift(drift);
  }
  DeliberationTrajectory traj(std::move(snapshots), std::move(sample_id));
  traj.set_metadata("renorm_drift", drift_log);
  return traj;
}

struct EquilibriumResult {
  BeliefSnapshot beliefs;
  bool iterated = false;  // true when the direct solve was not applicable
  int rounds = 0;
};

// Direct solve, falling back to iterating the dynamics when the system is not
// contractive (e.g. gamma = 0, where a consensus may still be reached). The
// fallback succeeds only if successive rounds stop changing.
inline EquilibriumResult equilibrium_or_iterate(const FJParameters& params,
                                                const BeliefSnapshot& innate,
                                                int max_rounds = 10000,
                                                double tol = 1e-12) {
  try {
    return EquilibriumResult{equilibrium(params, innate), false, 0};
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kNotContractive) throw;
  }
  Matrix current = innate.matrix();
  for (int t = 1; t <= max_rounds; ++t) {
    Matrix next = detail::fj_step_raw(params, innate.matrix(), current);
    const double change = (next - current).lpNorm<Eigen::Infinity>();
    current = std::move(next);
    if (change < tol) {
      return EquilibriumResult{BeliefSnapshot::renormalized(current, nullptr),
                               true, t};
    }
  }
  throw Error(ErrorCode::kNotContractive,
              "dynamics did not settle within " + std::to_string(max_rounds) +
                  " rounds");
}

}  // namespace fjlab

#endif  // FJLAB_DYNAMICS_HPP_
