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

#include "fjlab/estimation.hpp"

#include <cmath>
#include <vector>

#include "gtest/gtest.h"
#include "oracles.hpp"

namespace fjlab {
namespace {

DeliberationTrajectory random_trajectory(CounterRng& rng, const FJParameters& p,
                                         int d, int rounds, const std::string& id) {
  const BeliefSnapshot s(oracle::random_snapshot_matrix(rng, p.n(), d));
  return simulate(p, s, rounds, id);
}

FitConfig exact_config(Objective obj = Objective::kMSE) {
  FitConfig cfg;
  cfg.objective = obj;
  cfg.reg_lambda = 0.0;
  cfg.restarts = 2;
  cfg.max_iters = 3000;
  cfg.tol = 1e-14;
  return cfg;
}

TEST(OneStepPredictions, SelfConsistentOnSimulatedTrajectory) {
  CounterRng rng(3, 0);
  const FJParameters p = oracle::random_params(rng, 4);
  const auto traj = random_trajectory(rng, p, 3, 6, "x");
  const auto pred = one_step_predictions(p, traj);
  ASSERT_EQ(pred.size(), 6u);
  for (int t = 0; t < 6; ++t) {
    EXPECT_TRUE(pred[t].matrix().isApprox(traj.snapshots()[t + 1].matrix(), 1e-14));
  }
  EXPECT_NEAR(fit_objective(p, traj, Objective::kMSE), 0.0, 1e-28);
  EXPECT_NEAR(fit_objective(p, traj, Objective::kKL), 0.0, 1e-13);
}

TEST(OneStepPredictions, FullyStubbornPredictsInnate) {
  CounterRng rng(4, 0);
  const FJParameters base = oracle::random_params(rng, 3);
  const FJParameters p(Vector::Ones(3), base.alpha(), base.w());
  const auto traj = random_trajectory(rng, base, 4, 3, "x");
  for (const auto& snap : one_step_predictions(p, traj)) {
    EXPECT_TRUE(snap == traj.innate());
  }
  // A constant trajectory is fitted exactly by full stubbornness.
  const DeliberationTrajectory flat({traj.innate(), traj.innate()}, "flat");
  EXPECT_EQ(fit_objective(p, flat, Objective::kMSE), 0.0);
}

TEST(OneStepPredictions, ShapeMismatch) {
  CounterRng rng(5, 0);
  const FJParameters p3 = oracle::random_params(rng, 3);
  const FJParameters p4 = oracle::random_params(rng, 4);
  const auto traj = random_trajectory(rng, p3, 3, 2, "x");
  try {
    one_step_predictions(p4, traj);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kShapeMismatch);
  }
}

TEST(FitObjective, KlOfPointMassAgainstUniformIsLn2) {
  // Round 1 is (1,0) for agent 0; with gamma = 1 the prediction is S = (0.5,0.5).
  const BeliefSnapshot s(Matrix{{0.5, 0.5}, {0.5, 0.5}});
  const BeliefSnapshot o(Matrix{{1.0, 0.0}, {0.5, 0.5}});
  const DeliberationTrajectory traj({s, o}, "kl");
  Matrix w{{0, 1}, {1, 0}};
  const FJParameters p(Vector::Ones(2), Vector::Zero(2), w);
  // Averaged over the two (agent, round) pairs, only agent 0 contributes.
  EXPECT_NEAR(fit_objective(p, traj, Objective::kKL) * 2.0, std::log(2.0), 1e-12);
  EXPECT_NEAR(fit_objective(p, traj, Objective::kMSE), 2 * 0.25 / 4.0, 1e-15);
}

TEST(FitObjective, RegularizerVanishesAtCenter) {
  const FJParameters p(Vector::Constant(3, 0.5), Vector::Constant(3, 0.5),
                       uniform_weights(complete_mask(3)));
  EXPECT_NEAR(regularization(p, 1.0), 0.0, 1e-30);
}

// Analytic gradient against central differences of the same objective.
TEST(PoolObjective, GradientMatchesFiniteDifferences) {
  for (Objective obj : {Objective::kMSE, Objective::kKL}) {
    CounterRng rng(11, 0);
    const FJParameters p = oracle::random_params(rng, 3);
    const auto t1 = random_trajectory(rng, p, 4, 3, "a");
    const auto t2 = random_trajectory(rng, oracle::random_params(rng, 3), 3, 2, "b");
    Mask mask = complete_mask(3);
    mask(0, 2) = false;
    const detail::PoolObjective f({&t1, &t2}, detail::Parameterization(mask), obj, 0.3);
    Vector theta(f.parameterization().size());
    for (int k = 0; k < theta.size(); ++k) theta[k] = rng.normal();
    Vector grad;
    f.evaluate(theta, &grad);
    for (int k = 0; k < theta.size(); ++k) {
      const double h = 1e-6;
      Vector up = theta, dn = theta;
      up[k] += h;
      dn[k] -= h;
      const double fd = (f.evaluate(up, nullptr) - f.evaluate(dn, nullptr)) / (2 * h);
      EXPECT_NEAR(grad[k], fd, 1e-7) << "coordinate " << k;
    }
  }
}

TEST(PoolObjective, ValueAgreesWithFitObjective) {
  CounterRng rng(12, 0);
  const FJParameters gen = oracle::random_params(rng, 3);
  const auto traj = random_trajectory(rng, gen, 3, 4, "a");
  const detail::PoolObjective f({&traj}, detail::Parameterization(complete_mask(3)),
                                Objective::kKL, 0.01);
  Vector theta(f.parameterization().size());
  for (int k = 0; k < theta.size(); ++k) theta[k] = rng.normal();
  const FJParameters p = f.parameterization().to_params(theta);
  EXPECT_NEAR(f.evaluate(theta, nullptr),
              fit_objective(p, traj, Objective::kKL) + regularization(p, 0.01), 1e-13);
}

TEST(FitSample, RecoversGeneratingParameters) {
  CounterRng rng(21, 0);
  const FJParameters p = oracle::random_params(rng, 3);
  const auto traj = random_trajectory(rng, p, 4, 10, "rec");
  const FitReport r = fit_sample(traj, exact_config());
  EXPECT_LT(r.mse, 1e-8);
  EXPECT_GE(r.kl, 0.0);
}

TEST(FitSample, KlObjectiveAlsoRecovers) {
  CounterRng rng(22, 0);
  const FJParameters p = oracle::random_params(rng, 3);
  const auto traj = random_trajectory(rng, p, 3, 8, "rec");
  const FitReport r = fit_sample(traj, exact_config(Objective::kKL));
  EXPECT_LT(r.mse, 1e-8);
}

TEST(FitSample, ObjectiveCurveIsNonIncreasing) {
  CounterRng rng(23, 0);
  const auto traj = random_trajectory(rng, oracle::random_params(rng, 4), 3, 5, "m");
  FitConfig cfg;
  const FitReport r = fit_sample(traj, cfg);
  ASSERT_GE(r.objective_curve.size(), 2u);
  for (std::size_t k = 1; k < r.objective_curve.size(); ++k) {
    EXPECT_LE(r.objective_curve[k], r.objective_curve[k - 1]);
  }
  EXPECT_EQ(r.objective_curve.back(), r.objective);
}

TEST(FitSample, DeterministicGivenSeed) {
  CounterRng rng(24, 0);
  const auto traj = random_trajectory(rng, oracle::random_params(rng, 3), 3, 4, "d");
  FitConfig cfg;
  cfg.seed = 77;
  const FitReport a = fit_sample(traj, cfg);
  const FitReport b = fit_sample(traj, cfg);
  EXPECT_TRUE(a.params.gamma() == b.params.gamma());
  EXPECT_TRUE(a.params.alpha() == b.params.alpha());
  EXPECT_TRUE(a.params.w() == b.params.w());
  EXPECT_EQ(a.objective_curve, b.objective_curve);
  EXPECT_EQ(a.restart_index, b.restart_index);
  EXPECT_EQ(a.kl, b.kl);
}

TEST(FitSample, FlatTrajectory) {
  const BeliefSnapshot s = BeliefSnapshot(Matrix{{0.7, 0.3}, {0.7, 0.3}, {0.7, 0.3}});
  const DeliberationTrajectory flat({s, s, s}, "flat");
  FitConfig cfg;
  const FitReport r = fit_sample(flat, cfg);
  EXPECT_TRUE(r.flat);
  EXPECT_TRUE(r.params.w().isApprox(uniform_weights(complete_mask(3)), 1e-6));
  EXPECT_NEAR(r.mse, 0.0, 1e-30);

  cfg.reg_lambda = 0.0;
  try {
    fit_sample(flat, cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDegenerateTrajectory);
  }
}

TEST(FitSample, RejectsBadInputs) {
  const BeliefSnapshot s(Matrix{{0.7, 0.3}, {0.2, 0.8}});
  const DeliberationTrajectory single({s}, "t0");
  EXPECT_THROW(fit_sample(single, FitConfig{}), Error);
  FitConfig bad;
  bad.restarts = 0;
  const DeliberationTrajectory two({s, s}, "t1");
  try {
    fit_sample(two, bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kConfigError);
  }
}

TEST(FitGlobal, SingleTrajectoryMatchesFitSample) {
  CounterRng rng(31, 0);
  const auto traj = random_trajectory(rng, oracle::random_params(rng, 3), 3, 4, "g");
  FitConfig cfg;
  const FitReport a = fit_sample(traj, cfg);
  const FitReport b = fit_global({traj}, cfg);
  EXPECT_TRUE(a.params.w() == b.params.w());
  EXPECT_EQ(a.objective, b.objective);
  EXPECT_THROW(fit_global({}, cfg), Error);
}

TEST(FitGlobal, RecoversSharedParametersWithVaryingLabelCounts) {
  CounterRng rng(32, 0);
  const FJParameters p = oracle::random_params(rng, 3);
  std::vector<DeliberationTrajectory> pool;
  for (int k = 0; k < 4; ++k) {
    pool.push_back(random_trajectory(rng, p, 2 + k, 5, "s" + std::to_string(k)));
  }
  const FitReport r = fit_global(pool, exact_config());
  EXPECT_LT(r.mse, 1e-8);
}

TEST(FitGlobal, DominatedByPerSampleFits) {
  CounterRng rng(33, 0);
  const FJParameters p1 = oracle::random_params(rng, 3);
  const FJParameters p2 = oracle::random_params(rng, 3);
  std::vector<DeliberationTrajectory> pool;
  for (int k = 0; k < 3; ++k) pool.push_back(random_trajectory(rng, p1, 3, 4, "a"));
  for (int k = 0; k < 3; ++k) pool.push_back(random_trajectory(rng, p2, 3, 4, "b"));
  FitConfig cfg;
  cfg.objective = Objective::kMSE;
  const FitReport global = fit_global(pool, cfg);
  double global_mean = 0.0, local_mean = 0.0;
  for (const auto& t : pool) {
    global_mean += fit_objective(global.params, t, cfg.objective) +
                   regularization(global.params, cfg.reg_lambda);
    local_mean += fit_sample(t, cfg).objective;
  }
  EXPECT_GE(global_mean / 6 + 1e-9, local_mean / 6);
}

TEST(FitSample, ParameterRecoveryProperty) {
  // 20 random contractive generators; n = 5, d = 4, T = 8.
  FitConfig cfg = exact_config();
  cfg.restarts = 5;
  for (int trial = 0; trial < 20; ++trial) {
    CounterRng rng(1000 + trial, 0);
    const FJParameters p = oracle::random_params(rng, 5, 0.05, 0.9);
    const auto traj = random_trajectory(rng, p, 4, 8, "p");
    const FitReport r = fit_sample(traj, cfg);
    EXPECT_LT(r.mse, 1e-6) << "trial " << trial;
    // Feasibility is guaranteed by the FJParameters constructor; spot check.
    for (int i = 0; i < 5; ++i) {
      EXPECT_NEAR(r.params.w().row(i).sum(), 1.0, 1e-12);
      EXPECT_EQ(r.params.w()(i, i), 0.0);
    }
  }
}

FitReport report_with_gamma(double g0) {
  Vector g = Vector::Constant(2, 0.5);
  g[0] = g0;
  FitReport r{FJParameters(g, Vector::Constant(2, 0.5), Matrix{{0, 1}, {1, 0}})};
  return r;
}

TEST(ParameterVariability, Examples) {
  const auto v = parameter_variability({report_with_gamma(0.0), report_with_gamma(1.0)});
  EXPECT_NEAR(v.at("gamma[0]").std, 0.5, 1e-15);
  EXPECT_NEAR(v.at("gamma[0]").mean, 0.5, 1e-15);
  EXPECT_NEAR(v.at("gamma[0]").iqr, 0.5, 1e-15);
  EXPECT_EQ(v.at("gamma[1]").std, 0.0);
  EXPECT_EQ(v.at("w_in[0]").mean, 1.0);
  EXPECT_EQ(v.per_parameter.size(), 6u);

  const auto same = parameter_variability({report_with_gamma(0.3), report_with_gamma(0.3)});
  for (const auto& [name, stats] : same.per_parameter) EXPECT_EQ(stats.std, 0.0) << name;

  try {
    parameter_variability({report_with_gamma(0.3)});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInsufficientSamples);
  }
}

TEST(ParameterVariability, OrderInvariant) {
  CounterRng rng(41, 0);
  std::vector<FitReport> reports;
  for (int k = 0; k < 7; ++k) reports.push_back(FitReport{oracle::random_params(rng, 4)});
  std::vector<FitReport> reversed(reports.rbegin(), reports.rend());
  const auto a = parameter_variability(reports);
  const auto b = parameter_variability(reversed);
  ASSERT_EQ(a.per_parameter.size(), b.per_parameter.size());
  for (std::size_t k = 0; k < a.per_parameter.size(); ++k) {
    EXPECT_EQ(a.per_parameter[k].second.mean, b.per_parameter[k].second.mean);
    EXPECT_EQ(a.per_parameter[k].second.std, b.per_parameter[k].second.std);
    EXPECT_EQ(a.per_parameter[k].second.iqr, b.per_parameter[k].second.iqr);
  }
}

TEST(MeanCi95, KnownQuantile) {
  // t_{0.975, 2} = 4.302653; sd of {1,2,3} is 1.
  const auto ci = mean_ci95({1.0, 2.0, 3.0});
  EXPECT_NEAR(ci.mean, 2.0, 1e-15);
  EXPECT_NEAR(ci.half_width, 4.302653 / std::sqrt(3.0), 1e-6);
  EXPECT_EQ(mean_ci95({5.0}).half_width, 0.0);
}

}  // namespace
}  // namespace fjlab
