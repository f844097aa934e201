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

#include "fjlab/routing.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "gtest/gtest.h"
#include "oracles.hpp"

namespace fjlab {
namespace {

BeliefSnapshot two_sure_agents() { return BeliefSnapshot(Matrix{{1, 0}, {0, 1}}); }

Vector weights(std::initializer_list<double> v) {
  Vector out(static_cast<int>(v.size()));
  int k = 0;
  for (double x : v) out[k++] = x;
  return out;
}

TEST(LocalRisk, Examples) {
  const Vector r = local_risk(two_sure_agents(), 0);
  EXPECT_EQ(r[0], 0.0);
  EXPECT_EQ(r[1], 2.0);
  EXPECT_NEAR(local_risk(BeliefSnapshot(Matrix{{0.5, 0.5}}), 1)[0], 0.5, 1e-15);
  EXPECT_THROW(local_risk(two_sure_agents(), 2), Error);
}

TEST(LocalRisk, KnownLawGivesExpectedBrier) {
  LabeledItem item{two_sure_agents(), 0};
  item.label_law = weights({0.25, 0.75});
  const Vector r = local_risk(item);
  EXPECT_NEAR(r[0], 0.75 * 2.0, 1e-15);
  EXPECT_NEAR(r[1], 0.25 * 2.0, 1e-15);
}

TEST(AmbiguityCheck, Examples) {
  const auto c = ambiguity_check(two_sure_agents(), weights({0.5, 0.5}), 0);
  EXPECT_NEAR(c.lhs, 0.5, 1e-15);
  EXPECT_NEAR(c.rhs, 0.5, 1e-15);
  EXPECT_NEAR(diversity(two_sure_agents(), weights({0.5, 0.5})), 0.5, 1e-15);

  const auto one = ambiguity_check(two_sure_agents(), weights({0, 1}), 0);
  EXPECT_EQ(one.lhs, 2.0);
  EXPECT_EQ(one.rhs, 2.0);

  try {
    ambiguity_check(two_sure_agents(), weights({0.7, 0.7}), 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kWeightNotSimplex);
  }
}

TEST(AmbiguityCheck, IdentityOnRandomDraws) {
  CounterRng rng(101, 0);
  double worst = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const int n = 1 + rng.below(6), d = 2 + rng.below(6);
    const BeliefSnapshot s(oracle::random_snapshot_matrix(rng, n, d));
    const Vector a = oracle::random_simplex(rng, n);
    worst = std::max(worst, std::abs(ambiguity_check(s, a, rng.below(d)).gap));
  }
  EXPECT_LT(worst, 1e-10);
}

TEST(RoutingRegret, Examples) {
  const BeliefSnapshot s = two_sure_agents();
  EXPECT_EQ(routing_regret(s, weights({1, 0}), 0), 0.0);
  EXPECT_NEAR(routing_regret(s, weights({0.5, 0.5}), 0), 1.0, 1e-15);
  const BeliefSnapshot same(Matrix{{0.3, 0.7}, {0.3, 0.7}});
  EXPECT_EQ(routing_regret(same, weights({0.2, 0.8}), 1), 0.0);
  EXPECT_NEAR(ensemble_waste(s, weights({0.5, 0.5}), 0), 1.0, 1e-15);
}

TEST(RoutingRegret, NonNegativeAndZeroOnlyOnArgminSupport) {
  CounterRng rng(102, 0);
  for (int k = 0; k < 300; ++k) {
    const int n = 2 + rng.below(4), d = 2 + rng.below(4);
    const BeliefSnapshot s(oracle::random_snapshot_matrix(rng, n, d));
    const int y = rng.below(d);
    const Vector pi = oracle::random_simplex(rng, n);
    const Vector r = local_risk(s, y);
    EXPECT_GE(routing_regret(s, pi, y), 0.0);
    // Strictly positive weight on a strictly worse agent gives positive regret.
    if (pi.minCoeff() > 1e-6 && r.maxCoeff() - r.minCoeff() > 1e-6) {
      EXPECT_GT(routing_regret(s, pi, y), 0.0);
    }
    Vector hard = Vector::Zero(n);
    int best = 0;
    for (int j = 1; j < n; ++j) {
      if (r[j] < r[best]) best = j;
    }
    hard[best] = 1.0;
    EXPECT_EQ(routing_regret(s, hard, y), 0.0);
  }
}

TEST(ConfidenceRouter, Examples) {
  const BeliefSnapshot s(Matrix{{0.9, 0.1}, {0.5, 0.5}});
  const Vector uni = confidence_router(s, 0.0);
  EXPECT_NEAR(uni[0], 0.5, 1e-15);
  const Vector sharp = confidence_router(s, 1e6);
  EXPECT_NEAR(sharp[0], 1.0, 1e-9);
  const Vector pi = confidence_router(s, 1.0);
  EXPECT_NEAR(pi[0], 0.6297, 5e-5);
  EXPECT_NEAR(pi[1], 0.3703, 5e-5);
  EXPECT_THROW(confidence_router(s, -1.0), Error);
}

TEST(ConfidenceRouter, PermutationEquivariantAndShiftInvariant) {
  CounterRng rng(103, 0);
  for (int k = 0; k < 100; ++k) {
    const int n = 2 + rng.below(5), d = 2 + rng.below(4);
    const Matrix m = oracle::random_snapshot_matrix(rng, n, d);
    const double beta = rng.uniform(0.0, 20.0);
    const Vector pi = confidence_router(BeliefSnapshot(m), beta);
    std::vector<int> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    std::rotate(perm.begin(), perm.begin() + 1, perm.end());
    Matrix pm(n, d);
    for (int i = 0; i < n; ++i) pm.row(i) = m.row(perm[i]);
    const Vector ppi = confidence_router(BeliefSnapshot(pm), beta);
    for (int i = 0; i < n; ++i) EXPECT_NEAR(ppi[i], pi[perm[i]], 1e-14);

    // Softmax of beta*C equals softmax of beta*C + const.
    const Vector c = confidences(BeliefSnapshot(m));
    Vector z = (beta * c.array() + 3.7).exp().matrix();
    z /= z.sum();
    EXPECT_TRUE(z.isApprox(pi, 1e-12));
  }
}

LabeledSnapshotSet random_set(CounterRng& rng, int n, int d, int count) {
  LabeledSnapshotSet set;
  for (int k = 0; k < count; ++k) {
    set.add(LabeledItem{BeliefSnapshot(oracle::random_snapshot_matrix(rng, n, d)),
                        rng.below(d)});
  }
  return set;
}

TEST(LabeledSnapshotSet, Validation) {
  LabeledSnapshotSet set;
  set.add(LabeledItem{two_sure_agents(), 1});
  EXPECT_THROW(set.add(LabeledItem{BeliefSnapshot(Matrix{{1, 0}}), 0}), Error);
  try {
    set.add(LabeledItem{two_sure_agents(), 2});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kLabelOutOfRange);
  }
}

TEST(MoeVsBestSingleCondition, SingleAgentIsFalse) {
  CounterRng rng(104, 0);
  const auto set = random_set(rng, 1, 3, 20);
  const auto rep = thm1_condition(set, routers::constant(weights({1})));
  EXPECT_EQ(rep.specialization_gain, 0.0);
  EXPECT_EQ(rep.mean_local_diversity, 0.0);
  EXPECT_EQ(rep.mean_routing_regret, 0.0);
  EXPECT_FALSE(rep.thm1_holds);
  EXPECT_THROW(thm1_condition(LabeledSnapshotSet{}, routers::constant(weights({1}))), Error);
}

TEST(MoeVsBestSingleCondition, OracleRoutingOnExclusiveExperts) {
  // Agent j is sure and right in region j, uniform elsewhere.
  LabeledSnapshotSet set;
  for (int k = 0; k < 10; ++k) {
    const int region = k % 2;
    Matrix m = Matrix::Constant(2, 3, 1.0 / 3);
    m.row(region) << 0, 0, 0;
    m(region, region) = 1.0;
    set.add(LabeledItem{BeliefSnapshot(m), region});
  }
  const auto rep = thm1_condition(set, routers::oracle_min_risk());
  EXPECT_EQ(rep.mean_routing_regret, 0.0);
  EXPECT_TRUE(rep.thm1_holds);
  EXPECT_LT(rep.mean_moe_loss, rep.mean_best_single_loss);
}

TEST(MoeVsBestSingleCondition, BestSingleRouterMatchesBestSingleLoss) {
  CounterRng rng(105, 0);
  const auto set = random_set(rng, 3, 4, 40);
  const auto probe = thm1_condition(set, routers::constant(weights({1, 0, 0})));
  Vector hard = Vector::Zero(3);
  hard[probe.best_agent] = 1.0;
  const auto rep = thm1_condition(set, routers::constant(hard));
  EXPECT_NEAR(rep.mean_moe_loss, rep.mean_best_single_loss, 1e-14);
  EXPECT_EQ(rep.mean_local_diversity, 0.0);
  EXPECT_EQ(rep.thm1_holds, rep.specialization_gain > rep.mean_routing_regret);
}

TEST(MoeVsBestSingleCondition, PerSampleConditionPredictsPerSampleWin) {
  CounterRng rng(106, 0);
  for (double beta : {0.0, 1.0, 5.0}) {
    const auto set = random_set(rng, 4, 3, 200);
    const auto rep = thm1_condition(set, routers::softmax_confidence(beta));
    int agree = 0;
    for (std::size_t k = 0; k < set.size(); ++k) {
      if (rep.per_sample_thm1[k]) {
        const Vector pi = confidence_router(set[k].snapshot, beta);
        const double moe = brier_loss(mixture(set[k].snapshot, pi), set[k].label);
        EXPECT_LE(moe, local_risk(set[k])[rep.best_agent] + 1e-12);
      }
      agree += rep.per_sample_thm1[k] == rep.per_sample_moe_wins[k];
    }
    const auto& c = rep.confusion;
    EXPECT_EQ(c.true_positive + c.false_positive + c.false_negative + c.true_negative, 200);
    EXPECT_GE(agree, 199);  // equivalent up to rounding at exact ties
  }
}

TEST(RouterVsEnsembleCondition, ConstantRouterEqualToEnsembleIsNeutral) {
  CounterRng rng(107, 0);
  const auto set = random_set(rng, 3, 3, 30);
  const Vector a = weights({0.2, 0.3, 0.5});
  const auto t = thm2_condition(set, a, routers::constant(a));
  EXPECT_NEAR(t.lhs, 0.0, 1e-15);
  EXPECT_NEAR(t.rhs, 0.0, 1e-15);
  EXPECT_NEAR(t.realized_gap, 0.0, 1e-15);
  EXPECT_FALSE(t.holds);
  EXPECT_THROW(thm2_condition(set, weights({0.5, 0.6, 0.1}), routers::constant(a)), Error);
}

TEST(RouterVsEnsembleCondition, RealizedGapMatchesDecomposition) {
  CounterRng rng(108, 0);
  for (int trial = 0; trial < 20; ++trial) {
    auto set = random_set(rng, 4, 5, 50);
    const Vector a = oracle::random_simplex(rng, 4);
    for (const Router& router : {routers::softmax_confidence(2.0), routers::hard_confidence(),
                                 routers::oracle_min_risk()}) {
      const auto t = thm2_condition(set, a, router);
      EXPECT_NEAR(t.lhs - t.rhs, t.realized_gap, 1e-10);
    }
  }
}

TEST(RouterVsEnsembleCondition, HardRoutingCarriesFullEnsembleDiversity) {
  CounterRng rng(109, 0);
  const auto set = random_set(rng, 3, 4, 25);
  const Vector a = weights({1.0 / 3, 1.0 / 3, 1.0 / 3});
  const auto t = thm2_condition(set, a, routers::oracle_min_risk());
  double mean_da = 0.0;
  for (const auto& item : set.items()) mean_da += diversity(item.snapshot, a);
  EXPECT_NEAR(t.rhs, mean_da / 25, 1e-14);
}

TEST(ConfidenceRoutingCondition, CalibratedAndAntiCalibrated) {
  LabeledSnapshotSet calibrated, anti;
  for (int k = 0; k < 10; ++k) {
    const int y = k % 2;
    Matrix good = Matrix::Constant(2, 2, 0.5);
    good.row(0) << (y == 0 ? 1.0 : 0.0), (y == 0 ? 0.0 : 1.0);
    calibrated.add(LabeledItem{BeliefSnapshot(good), y});
    // The confident agent is sure and wrong, the other is sure and right
    // but marginally less confident.
    Matrix bad(2, 2);
    bad.row(0) << (y == 0 ? 0.0 : 1.0), (y == 0 ? 1.0 : 0.0);
    bad.row(1) << (y == 0 ? 1.0 - 1e-9 : 1e-9), (y == 0 ? 1e-9 : 1.0 - 1e-9);
    anti.add(LabeledItem{BeliefSnapshot(bad), y});
  }
  const Vector a = weights({0.5, 0.5});
  const auto c = confidence_routing_condition(calibrated, a);
  EXPECT_EQ(c.delta_c, 0.0);
  EXPECT_TRUE(c.holds);
  const auto b = confidence_routing_condition(anti, a);
  EXPECT_NEAR(b.delta_c, 2.0, 1e-8);
  EXPECT_FALSE(b.holds);

  CounterRng rng(110, 0);
  const auto single = random_set(rng, 1, 3, 5);
  const auto s = confidence_routing_condition(single, weights({1}));
  EXPECT_EQ(s.g, 0.0);
  EXPECT_EQ(s.delta_c, 0.0);
  EXPECT_EQ(s.d_a, 0.0);
  EXPECT_FALSE(s.holds);
}

TEST(Routers, FjAndStored) {
  const FJParameters p(weights({0.5, 0.5}), weights({0, 0}), Matrix{{0, 1}, {1, 0}});
  LabeledItem item{two_sure_agents(), 0};
  const Vector pi = routers::fj(p, uniform_eta(2))(item);
  EXPECT_NEAR(pi[0], 0.5, 1e-12);
  EXPECT_THROW(routers::stored()(item), Error);
  item.pi = weights({0.1, 0.9});
  EXPECT_EQ(routers::stored()(item)[1], 0.9);
}

}  // namespace
}  // namespace fjlab
