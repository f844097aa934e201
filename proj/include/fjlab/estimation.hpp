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

// Fitting FJ parameters to observed trajectories.
//
// The fit is teacher forced: round t+1 is predicted from the observed round t
// and compared with the observed round t+1, by mean squared error or by
// KL(observed || predicted). Parameters are optimized in an unconstrained
// space (logistic for gamma and alpha, a softmax over each row's allowed
// edges for W), so every iterate is feasible. The optimizer is L-BFGS with a
// backtracking Armijo line search; accepted steps never increase the
// objective.

#ifndef FJLAB_ESTIMATION_HPP_
#define FJLAB_ESTIMATION_HPP_

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fjlab/domain.hpp"
#include "fjlab/dynamics.hpp"
#include "fjlab/random.hpp"

namespace fjlab {

inline constexpr double kKlFloor = 1e-12;

enum class Objective { kKL, kMSE };

struct FitConfig {
  Objective objective = Objective::kKL;
  int max_iters = 2000;
  double step_size = 1.0;  // first trial step of each line search
  int restarts = 5;
  double reg_lambda = 1e-3;
  std::uint64_t seed = 0;
  double tol = 1e-10;  // gradient infinity-norm stopping threshold

  void validate() const {
    if (max_iters < 1 || restarts < 1 || !(tol > 0.0) || !(step_size > 0.0) ||
        !(reg_lambda >= 0.0)) {
      throw Error(ErrorCode::kConfigError,
                  "fit config needs max_iters >= 1, restarts >= 1, tol > 0, "
                  "step_size > 0, reg_lambda >= 0");
    }
  }
};

struct FitReport {
  explicit FitReport(FJParameters p) : params(std::move(p)) {}

  FJParameters params;
  double kl = 0.0;   // unregularized, averaged over (agent, round) pairs
  double mse = 0.0;  // unregularized, averaged over (agent, round, entry)
  double objective = 0.0;  // final regularized objective
  std::vector<double> objective_curve;
  int restart_index = 0;
  int iterations = 0;
  bool flat = false;  // every snapshot identical: only the regularizer acts
};

// Teacher-forced predictions of rounds 1..T.
inline std::vector<BeliefSnapshot> one_step_predictions(
    const FJParameters& params, const DeliberationTrajectory& traj) {
  if (traj.rounds() < 1) {
    throw Error(ErrorCode::kInvariantViolation,
                "trajectory '" + traj.sample_id() + "' has no transitions");
  }
  if (traj.n() != params.n()) {
    throw Error(ErrorCode::kShapeMismatch,
                "parameters for n=" + std::to_string(params.n()) +
                    " applied to sample '" + traj.sample_id() + "'");
  }
  std::vector<BeliefSnapshot> out;
  out.reserve(static_cast<std::size_t>(traj.rounds()));
  for (int t = 0; t < traj.rounds(); ++t) {
    out.push_back(fj_step(params, traj.innate(), traj.snapshots()[t]));
  }
  return out;
}

namespace detail {

inline double kl_term(const Eigen::Ref<const Eigen::RowVectorXd>& observed,
                      const Eigen::Ref<const Eigen::RowVectorXd>& predicted) {
  double total = 0.0;
  for (int c = 0; c < observed.size(); ++c) {
    const double o = observed[c];
    if (o <= 0.0) continue;
    total += o * (std::log(o) - std::log(std::max(predicted[c], kKlFloor)));
  }
  return total;
}

}  // namespace detail

// Unregularized fit error of params on traj.
inline double fit_objective(const FJParameters& params,
                            const DeliberationTrajectory& traj,
                            Objective objective) {
  const auto predictions = one_step_predictions(params, traj);
  double total = 0.0;
  for (int t = 0; t < traj.rounds(); ++t) {
    const Matrix& obs = traj.snapshots()[t + 1].matrix();
    const Matrix& pred = predictions[t].matrix();
    if (objective == Objective::kMSE) {
      total += (pred - obs).squaredNorm();
    } else {
      for (int i = 0; i < traj.n(); ++i) total += detail::kl_term(obs.row(i), pred.row(i));
    }
  }
  const double pairs = static_cast<double>(traj.n()) * traj.rounds();
  // Terms of a KL sum can cancel to a tiny negative value in floating point.
  return objective == Objective::kMSE ? total / (pairs * traj.d())
                                      : std::max(0.0, total / pairs);
}

// lambda * (||W - W_uniform||^2 + ||gamma - 1/2||^2 + ||alpha - 1/2||^2).
inline double regularization(const FJParameters& params, double lambda) {
  const Matrix u = uniform_weights(params.mask());
  const Vector half = Vector::Constant(params.n(), 0.5);
  return lambda * ((params.w() - u).squaredNorm() +
                   (params.gamma() - half).squaredNorm() +
                   (params.alpha() - half).squaredNorm());
}

namespace detail {

inline double logistic(double u) {
  if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
  const double e = std::exp(u);
  return e / (1.0 + e);
}

// Unconstrained coordinates [gamma logits | alpha logits | edge logits],
// edge logits in row-major order over the mask.
class Parameterization {
 public:
  explicit Parameterization(Mask mask) : mask_(std::move(mask)) {
    n_ = static_cast<int>(mask_.rows());
    edges_ = static_cast<int>(mask_.count());
  }

  int n() const { return n_; }
  int size() const { return 2 * n_ + edges_; }
  const Mask& mask() const { return mask_; }

  void decode(const Vector& theta, Vector& gamma, Vector& alpha, Matrix& w) const {
    gamma.resize(n_);
    alpha.resize(n_);
    w.setZero(n_, n_);
    for (int i = 0; i < n_; ++i) {
      gamma[i] = logistic(theta[i]);
      alpha[i] = logistic(theta[n_ + i]);
    }
    int k = 2 * n_;
    for (int i = 0; i < n_; ++i) {
      double max_logit = -std::numeric_limits<double>::infinity();
      int start = k;
      for (int j = 0; j < n_; ++j) {
        if (mask_(i, j)) max_logit = std::max(max_logit, theta[k++]);
      }
      k = start;
      double total = 0.0;
      for (int j = 0; j < n_; ++j) {
        if (!mask_(i, j)) continue;
        w(i, j) = std::exp(theta[k++] - max_logit);
        total += w(i, j);
      }
      if (total > 0.0) w.row(i) /= total;
    }
  }

  FJParameters to_params(const Vector& theta) const {
    Vector gamma, alpha;
    Matrix w;
    decode(theta, gamma, alpha, w);
    return FJParameters(gamma, alpha, w, mask_);
  }

  // Chain rule from gradients in (gamma, alpha, W) to theta.
  Vector pull_back(const Vector& gamma, const Vector& alpha, const Matrix& w,
                   const Vector& d_gamma, const Vector& d_alpha,
                   const Matrix& d_w) const {
    Vector g(size());
    for (int i = 0; i < n_; ++i) {
      g[i] = d_gamma[i] * gamma[i] * (1.0 - gamma[i]);
      g[n_ + i] = d_alpha[i] * alpha[i] * (1.0 - alpha[i]);
    }
    int k = 2 * n_;
    for (int i = 0; i < n_; ++i) {
      double inner = 0.0;
      for (int j = 0; j < n_; ++j) {
        if (mask_(i, j)) inner += w(i, j) * d_w(i, j);
      }
      for (int j = 0; j < n_; ++j) {
        if (mask_(i, j)) g[k++] = w(i, j) * (d_w(i, j) - inner);
      }
    }
    return g;
  }

 private:
  Mask mask_;
  int n_ = 0;
  int edges_ = 0;
};

// Mean per-sample objective over a pool plus the regularizer, with its
// analytic gradient in theta. Samples are folded in a fixed order.
class PoolObjective {
 public:
  PoolObjective(const std::vector<const DeliberationTrajectory*>& pool,
                Parameterization param, Objective objective, double reg_lambda)
      : pool_(pool),
        param_(std::move(param)),
        objective_(objective),
        reg_lambda_(reg_lambda),
        uniform_(uniform_weights(param_.mask())) {}

  const Parameterization& parameterization() const { return param_; }

  double evaluate(const Vector& theta, Vector* grad) const {
    const int n = param_.n();
    Vector gamma, alpha;
    Matrix w;
    param_.decode(theta, gamma, alpha, w);
    Vector d_gamma = Vector::Zero(n), d_alpha = Vector::Zero(n);
    Matrix d_w = Matrix::Zero(n, n);

    double value = 0.0;
    const double per_sample = 1.0 / static_cast<double>(pool_.size());
    std::vector<bool> isolated(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) isolated[i] = !param_.mask().row(i).any();

    for (const DeliberationTrajectory* traj : pool_) {
      const int d = traj->d();
      const int rounds = traj->rounds();
      const double pairs = static_cast<double>(n) * rounds;
      const double scale =
          per_sample / (objective_ == Objective::kMSE ? pairs * d : pairs);
      const Matrix& innate = traj->innate().matrix();
      for (int t = 0; t < rounds; ++t) {
        const Matrix& cur = traj->snapshots()[t].matrix();
        const Matrix& obs = traj->snapshots()[t + 1].matrix();
        const Matrix peer_all = w * cur;
        for (int i = 0; i < n; ++i) {
          const Eigen::RowVectorXd peer =
              isolated[i] ? Eigen::RowVectorXd(cur.row(i)) : Eigen::RowVectorXd(peer_all.row(i));
          const Eigen::RowVectorXd q = alpha[i] * cur.row(i) + (1.0 - alpha[i]) * peer;
          const Eigen::RowVectorXd p = gamma[i] * innate.row(i) + (1.0 - gamma[i]) * q;
          Eigen::RowVectorXd g(d);
          if (objective_ == Objective::kMSE) {
            const Eigen::RowVectorXd diff = p - obs.row(i);
            value += scale * diff.squaredNorm();
            g = 2.0 * scale * diff;
          } else {
            value += scale * kl_term(obs.row(i), p);
            for (int c = 0; c < d; ++c) {
              g[c] = (obs(i, c) > 0.0 && p[c] > kKlFloor) ? -scale * obs(i, c) / p[c] : 0.0;
            }
          }
          if (grad == nullptr) continue;
          d_gamma[i] += g.dot(innate.row(i) - q);
          d_alpha[i] += (1.0 - gamma[i]) * g.dot(cur.row(i) - peer);
          if (!isolated[i]) {
            const double susceptible = (1.0 - gamma[i]) * (1.0 - alpha[i]);
            d_w.row(i) += susceptible * (cur * g.transpose()).transpose();
          }
        }
      }
    }

    if (reg_lambda_ > 0.0) {
      const Vector half = Vector::Constant(n, 0.5);
      value += reg_lambda_ * ((w - uniform_).squaredNorm() +
                              (gamma - half).squaredNorm() +
                              (alpha - half).squaredNorm());
      d_gamma += 2.0 * reg_lambda_ * (gamma - half);
      d_alpha += 2.0 * reg_lambda_ * (alpha - half);
      d_w += 2.0 * reg_lambda_ * (w - uniform_);
    }
    if (grad != nullptr) {
      *grad = param_.pull_back(gamma, alpha, w, d_gamma, d_alpha, d_w);
    }
    return value;
  }

 private:
  std::vector<const DeliberationTrajectory*> pool_;
  Parameterization param_;
  Objective objective_;
  double reg_lambda_;
  Matrix uniform_;
};

struct MinimizeResult {
  Vector theta;
  double value = 0.0;
  std::vector<double> curve;
  int iterations = 0;
};

// L-BFGS (memory 10) with backtracking Armijo line search.
inline MinimizeResult minimize_lbfgs(const PoolObjective& f, Vector theta,
                                     const FitConfig& cfg) {
  constexpr int kMemory = 10;
  constexpr double kArmijo = 1e-4;
  constexpr int kMaxHalvings = 60;

  MinimizeResult out;
  Vector grad;
  double value = f.evaluate(theta, &grad);
  out.curve.push_back(value);
  std::deque<std::pair<Vector, Vector>> history;  // (s, y)

  int iter = 0;
  for (; iter < cfg.max_iters; ++iter) {
    if (grad.lpNorm<Eigen::Infinity>() < cfg.tol) break;

    // Two-loop recursion.
    Vector dir = -grad;
    std::vector<double> rho(history.size()), a(history.size());
    for (int k = static_cast<int>(history.size()) - 1; k >= 0; --k) {
      rho[k] = 1.0 / history[k].second.dot(history[k].first);
      a[k] = rho[k] * history[k].first.dot(dir);
      dir -= a[k] * history[k].second;
    }
    if (!history.empty()) {
      const auto& [s, y] = history.back();
      dir *= s.dot(y) / y.dot(y);
    }
    for (std::size_t k = 0; k < history.size(); ++k) {
      const double b = rho[k] * history[k].second.dot(dir);
      dir += (a[k] - b) * history[k].first;
    }
    double slope = grad.dot(dir);
    if (!(slope < 0.0)) {
      history.clear();
      dir = -grad;
      slope = -grad.squaredNorm();
    }

    double step = history.empty()
                      ? cfg.step_size * std::min(1.0, 1.0 / grad.lpNorm<Eigen::Infinity>())
                      : cfg.step_size;
    bool accepted = false;
    Vector next_theta, next_grad;
    double next_value = value;
    for (int h = 0; h < kMaxHalvings; ++h, step *= 0.5) {
      next_theta = theta + step * dir;
      next_value = f.evaluate(next_theta, &next_grad);
      if (std::isfinite(next_value) && next_value <= value + kArmijo * step * slope &&
          next_value <= value) {
        accepted = true;
        break;
      }
    }
    if (!accepted) break;

    const Vector s = next_theta - theta;
    const Vector y = next_grad - grad;
    if (s.dot(y) > 1e-12 * s.norm() * y.norm()) {
      history.emplace_back(s, y);
      if (static_cast<int>(history.size()) > kMemory) history.pop_front();
    }
    const double decrease = value - next_value;
    theta = std::move(next_theta);
    grad = std::move(next_grad);
    value = next_value;
    out.curve.push_back(value);
    if (decrease == 0.0) break;  // line search stalled at machine precision
  }
  out.theta = std::move(theta);
  out.value = value;
  out.iterations = iter;
  return out;
}

inline bool all_snapshots_identical(const DeliberationTrajectory& traj) {
  for (const auto& snap : traj.snapshots()) {
    if (!(snap == traj.innate())) return false;
  }
  return true;
}

inline FitReport fit_pool(const std::vector<const DeliberationTrajectory*>& pool,
                          const FitConfig& cfg, const Mask& mask) {
  cfg.validate();
  if (pool.empty()) throw Error(ErrorCode::kEmptyInput, "no trajectories to fit");
  const int n = pool.front()->n();
  if (n < 2) {
    throw Error(ErrorCode::kTooFewAgents, "fitting needs n >= 2 agents");
  }
  bool flat = true;
  for (const auto* traj : pool) {
    if (traj->n() != n) {
      throw Error(ErrorCode::kShapeMismatch,
                  "sample '" + traj->sample_id() + "' has n=" +
                      std::to_string(traj->n()) + ", expected " + std::to_string(n));
    }
    if (traj->rounds() < 1) {
      throw Error(ErrorCode::kInvariantViolation,
                  "sample '" + traj->sample_id() + "' has no transitions to fit");
    }
    flat = flat && all_snapshots_identical(*traj);
  }
  if (flat && cfg.reg_lambda == 0.0) {
    throw Error(ErrorCode::kDegenerateTrajectory,
                "every snapshot is identical and reg_lambda = 0: any parameters fit");
  }
  const Mask use_mask = mask.size() == 0 ? complete_mask(n) : mask;
  if (use_mask.rows() != n || use_mask.cols() != n) {
    throw Error(ErrorCode::kShapeMismatch, "mask does not match n");
  }

  const PoolObjective objective(pool, Parameterization(use_mask), cfg.objective,
                                cfg.reg_lambda);
  const int dim = objective.parameterization().size();

  std::optional<MinimizeResult> best;
  int best_restart = 0;
  for (int r = 0; r < cfg.restarts; ++r) {
    CounterRng rng(cfg.seed + static_cast<std::uint64_t>(r), 0x6669745f696e6974ULL);
    Vector theta(dim);
    for (int k = 0; k < dim; ++k) theta[k] = rng.normal();
    MinimizeResult res = minimize_lbfgs(objective, std::move(theta), cfg);
    if (!best || res.value < best->value) {
      best = std::move(res);
      best_restart = r;
    }
  }

  FitReport report{objective.parameterization().to_params(best->theta)};
  report.objective = best->value;
  report.objective_curve = std::move(best->curve);
  report.restart_index = best_restart;
  report.iterations = best->iterations;
  report.flat = flat;

  // Pooled unregularized errors.
  double kl_sum = 0.0, mse_sum = 0.0, pairs = 0.0, entries = 0.0;
  for (const auto* traj : pool) {
    const double p = static_cast<double>(traj->n()) * traj->rounds();
    kl_sum += fit_objective(report.params, *traj, Objective::kKL) * p;
    mse_sum += fit_objective(report.params, *traj, Objective::kMSE) * p * traj->d();
    pairs += p;
    entries += p * traj->d();
  }
  report.kl = kl_sum / pairs;
  report.mse = mse_sum / entries;
  return report;
}

}  // namespace detail

inline FitReport fit_sample(const DeliberationTrajectory& traj,
                            const FitConfig& cfg, const Mask& mask = Mask()) {
  return detail::fit_pool({&traj}, cfg, mask);
}

// One shared parameter set for the whole pool (the fixed "FJ ensemble").
inline FitReport fit_global(const std::vector<DeliberationTrajectory>& trajs,
                            const FitConfig& cfg, const Mask& mask = Mask()) {
  if (trajs.empty()) throw Error(ErrorCode::kEmptyInput, "no trajectories to fit");
  std::vector<const DeliberationTrajectory*> pool;
  pool.reserve(trajs.size());
  for (const auto& t : trajs) pool.push_back(&t);
  return detail::fit_pool(pool, cfg, mask);
}

struct DispersionStats {
  double mean = 0.0;
  double std = 0.0;  // population
  double iqr = 0.0;  // linear-interpolated quartiles
};

struct VariabilityReport {
  // gamma[i], alpha[i], w_in[j] in that order.
  std::vector<std::pair<std::string, DispersionStats>> per_parameter;

  const DispersionStats& at(const std::string& name) const {
    for (const auto& [key, stats] : per_parameter) {
      if (key == name) return stats;
    }
    throw Error(ErrorCode::kInvariantViolation, "no parameter named " + name);
  }
};

namespace detail {

inline double quantile_sorted(const std::vector<double>& v, double q) {
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

// Sorting first makes the result independent of input order.
inline DispersionStats dispersion(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  DispersionStats s;
  double total = 0.0;
  for (double x : v) total += x;
  s.mean = total / static_cast<double>(v.size());
  double sq = 0.0;
  for (double x : v) sq += (x - s.mean) * (x - s.mean);
  s.std = std::sqrt(sq / static_cast<double>(v.size()));
  s.iqr = quantile_sorted(v, 0.75) - quantile_sorted(v, 0.25);
  return s;
}

}  // namespace detail

// Incoming weight of agent j is the mean over senders i != j of w_ij, i.e.
// how much the other agents listen to j.
inline Vector incoming_weights(const FJParameters& params) {
  const int n = params.n();
  Vector out = Vector::Zero(n);
  if (n < 2) return out;
  for (int j = 0; j < n; ++j) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      if (i != j) total += params.w()(i, j);
    }
    out[j] = total / (n - 1);
  }
  return out;
}

inline VariabilityReport parameter_variability(const std::vector<FitReport>& reports) {
  if (reports.size() < 2) {
    throw Error(ErrorCode::kInsufficientSamples,
                "variability needs >= 2 fits, got " + std::to_string(reports.size()));
  }
  const int n = reports.front().params.n();
  for (const auto& r : reports) {
    if (r.params.n() != n) {
      throw Error(ErrorCode::kShapeMismatch, "fits disagree on the number of agents");
    }
  }
  VariabilityReport out;
  auto add = [&](const std::string& name, auto&& getter) {
    std::vector<double> values;
    values.reserve(reports.size());
    for (const auto& r : reports) values.push_back(getter(r));
    out.per_parameter.emplace_back(name, detail::dispersion(std::move(values)));
  };
  for (int i = 0; i < n; ++i) {
    add("gamma[" + std::to_string(i) + "]",
        [i](const FitReport& r) { return r.params.gamma()[i]; });
  }
  for (int i = 0; i < n; ++i) {
    add("alpha[" + std::to_string(i) + "]",
        [i](const FitReport& r) { return r.params.alpha()[i]; });
  }
  for (int j = 0; j < n; ++j) {
    add("w_in[" + std::to_string(j) + "]",
        [j](const FitReport& r) { return incoming_weights(r.params)[j]; });
  }
  return out;
}

struct MeanInterval {
  double mean = 0.0;
  double half_width = 0.0;  // 95% Student-t; 0 for a single value
  int count = 0;
};

inline MeanInterval mean_ci95(const std::vector<double>& values) {
  MeanInterval out;
  out.count = static_cast<int>(values.size());
  if (values.empty()) return out;
  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  double total = 0.0;
  for (double x : sorted) total += x;
  out.mean = total / out.count;
  if (out.count < 2) return out;
  double sq = 0.0;
  for (double x : sorted) sq += (x - out.mean) * (x - out.mean);
  const double sd = std::sqrt(sq / (out.count - 1));
  const boost::math::students_t dist(out.count - 1);
  out.half_width = boost::math::quantile(dist, 0.975) * sd / std::sqrt(out.count);
  return out;
}

}  // namespace fjlab

#endif  // FJLAB_ESTIMATION_HPP_
