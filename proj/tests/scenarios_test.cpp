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

#include "fjlab/scenarios.hpp"

#include <cmath>
#include <vector>

#include "gtest/gtest.h"
#include "oracles.hpp"

namespace fjlab {
namespace {

constexpr int kMonteCarlo = 100000;

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::kIoError;
}

TEST(ExclusiveScenario, Validation) {
  EXPECT_EQ(code_of([] { ExclusiveScenario::balanced(5, 10, 0.0).validate(); }),
            ErrorCode::kInvalidScenario);
  EXPECT_EQ(code_of([] { ExclusiveScenario::balanced(5, 10, 0.9).validate(); }),
            ErrorCode::kInvalidScenario);
  ExclusiveScenario bad = ExclusiveScenario::balanced(3, 4, 0.1);
  bad.rho[0] = 0.5;
  EXPECT_EQ(code_of([&] { bad.validate(); }), ErrorCode::kInvalidScenario);
}

TEST(GenExclusive, ConfidentAgentIsCompetent) {
  const auto sc = ExclusiveScenario::balanced(4, 5, 0.2);
  const auto set = gen_exclusive(sc, 500, 7);
  for (const auto& item : set.items()) {
    const Vector c = confidences(item.snapshot);
    EXPECT_EQ(argmax_index(c), *item.region);
    for (int j = 0; j < sc.n; ++j) {
      if (j != *item.region) {
        EXPECT_EQ(c[j], 0.0);
      }
    }
    // Hard confidence routing pays exactly -ln p on every sample.
    const Vector row = item.snapshot.matrix().row(*item.region).transpose();
    EXPECT_EQ(log_loss(row, item.label), -std::log(sc.p()));
  }
}

TEST(GenExclusive, DegenerateRegionDistribution) {
  ExclusiveScenario sc{2, 3, Vector(2), 0.1};
  sc.rho << 1.0, 0.0;
  const auto set = gen_exclusive(sc, 200, 1);
  for (const auto& item : set.items()) EXPECT_EQ(*item.region, 0);
}

TEST(GenExclusive, RegionFrequenciesWithinBinomialBounds) {
  ExclusiveScenario sc{3, 4, Vector(3), 0.1};
  sc.rho << 0.5, 0.3, 0.2;
  const auto set = gen_exclusive(sc, kMonteCarlo, 11);
  std::vector<int> counts(3, 0);
  for (const auto& item : set.items()) ++counts[*item.region];
  for (int j = 0; j < 3; ++j) {
    const double sigma = std::sqrt(kMonteCarlo * sc.rho[j] * (1 - sc.rho[j]));
    EXPECT_LT(std::abs(counts[j] - kMonteCarlo * sc.rho[j]), 3 * sigma) << j;
  }
}

TEST(GenExclusive, SeedDeterminism) {
  const auto sc = ExclusiveScenario::balanced(3, 4, 0.3);
  const auto a = gen_exclusive(sc, 100, 5);
  const auto b = gen_exclusive(sc, 100, 5);
  const auto c = gen_exclusive(sc, 100, 6);
  bool differs = false;
  for (std::size_t k = 0; k < a.size(); ++k) {
    EXPECT_TRUE(a[k].snapshot == b[k].snapshot);
    EXPECT_EQ(a[k].label, b[k].label);
    differs = differs || a[k].label != c[k].label || *a[k].region != *c[k].region;
  }
  EXPECT_TRUE(differs);
}

TEST(ExclusiveLosses, ReferenceGap) {
  const auto sc = ExclusiveScenario::balanced(5, 10, 0.1);
  const auto l = exclusive_losses(sc, Vector::Constant(5, 0.2));
  EXPECT_NEAR(l.gap_balanced, std::log(0.9 / 0.26), 1e-12);
  EXPECT_NEAR(l.gap_balanced, 1.2417, 1e-4);
  EXPECT_NEAR(l.l_ens - l.l_moe, l.gap_balanced, 1e-12);
  EXPECT_NEAR(l.l_moe, -std::log(0.9), 1e-15);
  EXPECT_NEAR(l.gap_single, 0.8 * std::log(9.0), 1e-12);
}

TEST(ExclusiveLosses, MonteCarloAgrees) {
  const auto sc = ExclusiveScenario::balanced(5, 10, 0.1);
  const auto set = gen_exclusive(sc, kMonteCarlo, 3);
  const double mc = mc_ensemble_log_loss(set, Vector::Constant(5, 0.2)) -
                    mc_hard_confidence_log_loss(set);
  EXPECT_NEAR(mc, std::log(0.9 / 0.26), 0.01);
}

TEST(ExclusiveLosses, SingleRegionAndUninformativeLimits) {
  ExclusiveScenario sc{3, 4, Vector(3), 0.1};
  sc.rho << 1.0, 0.0, 0.0;
  const Vector one_hot = (Vector(3) << 1, 0, 0).finished();
  const auto l = exclusive_losses(sc, one_hot);
  EXPECT_NEAR(l.l_ens, l.l_moe, 1e-15);
  EXPECT_EQ(l.gap_single, 0.0);

  // p -> u: epsilon -> 1 - 1/d.
  const auto near = ExclusiveScenario::balanced(4, 4, 0.75 - 1e-9);
  const auto g = exclusive_losses(near, Vector::Constant(4, 0.25));
  EXPECT_NEAR(g.gap_balanced, 0.0, 1e-8);
  EXPECT_NEAR(g.gap_single, 0.0, 1e-8);
  EXPECT_EQ(code_of([&] { exclusive_losses(near, Vector::Constant(4, 0.3)); }),
            ErrorCode::kWeightNotSimplex);
}

TEST(OptimalFixedEnsemble, BalancedIsUniform) {
  const auto a = optimal_fixed_ensemble(ExclusiveScenario::balanced(5, 10, 0.1));
  EXPECT_LT((a.array() - 0.2).abs().maxCoeff(), 1e-6);
}

TEST(OptimalFixedEnsemble, SingleRegionIsOneHot) {
  ExclusiveScenario sc{4, 3, Vector(4), 0.2};
  sc.rho << 1.0, 0.0, 0.0, 0.0;
  const Vector a = optimal_fixed_ensemble(sc);
  EXPECT_EQ(a[0], 1.0);
  EXPECT_EQ(a.tail(3).sum(), 0.0);
}

TEST(OptimalFixedEnsemble, BeatsUniformAndProjectedSearch) {
  CounterRng rng(17, 0);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + rng.below(6), d = 2 + rng.below(9);
    ExclusiveScenario sc{n, d, oracle::random_simplex(rng, n),
                         rng.uniform(0.01, 0.99) * (1.0 - 1.0 / d)};
    const Vector a = optimal_fixed_ensemble(sc);
    ASSERT_TRUE(on_simplex(a));
    const double best = exclusive_ensemble_loss(sc, a);
    EXPECT_LE(best, exclusive_ensemble_loss(sc, Vector::Constant(n, 1.0 / n)) + 1e-9);
    // Independent oracle: projected gradient descent from uniform.
    std::vector<double> x(static_cast<std::size_t>(n), 1.0 / n);
    const double p = sc.p(), u = sc.u();
    for (int it = 0; it < 4000; ++it) {
      for (int j = 0; j < n; ++j) x[j] += 0.05 * sc.rho[j] * (p - u) / (u + (p - u) * x[j]);
      x = oracle::project_simplex(x);
    }
    Vector xv(n);
    for (int j = 0; j < n; ++j) xv[j] = x[j];
    EXPECT_LE(best, exclusive_ensemble_loss(sc, xv) + 1e-9);
  }
}

TEST(MoeAdvantageCheck, Examples) {
  const auto r = moe_advantage_check(ExclusiveScenario::balanced(5, 10, 0.1));
  EXPECT_TRUE(r.holds);
  EXPECT_NEAR(r.margin, 1.2417, 1e-4);

  ExclusiveScenario skew{2, 2, Vector(2), 0.4};
  skew.rho << 0.9, 0.1;
  EXPECT_TRUE(moe_advantage_check(skew).holds);

  ExclusiveScenario zero{2, 2, Vector(2), 0.4};
  zero.rho << 1.0, 0.0;
  EXPECT_EQ(code_of([&] { moe_advantage_check(zero); }), ErrorCode::kInvalidScenario);
}

TEST(MoeAdvantageCheck, GridAndMonotoneInN) {
  for (int d : {2, 4, 10}) {
    for (double eps : {0.05, 0.1, 0.3}) {
      double previous = 0.0;
      for (int n = 2; n <= 10; ++n) {
        const auto sc = ExclusiveScenario::balanced(n, d, eps);
        if (!(eps < 1.0 - 1.0 / d)) continue;
        const auto r = moe_advantage_check(sc);
        EXPECT_TRUE(r.holds) << n << " " << d << " " << eps;
        EXPECT_GT(r.margin, previous);
        previous = r.margin;
      }
    }
  }
}

TEST(RoutingErrorThreshold, ReferenceValueAndEndpoints) {
  const auto sc = ExclusiveScenario::balanced(5, 10, 0.1);
  const double delta = routing_error_threshold(sc);
  EXPECT_NEAR(delta, 0.56513, 1e-5);
  EXPECT_NEAR(l_route(sc, delta), exclusive_ensemble_loss(sc, Vector::Constant(5, 0.2)), 1e-12);
  EXPECT_EQ(l_route(sc, 0.0), -std::log(0.9));
  EXPECT_NEAR(l_route(sc, 1.0), -std::log(0.1), 1e-15);

  ExclusiveScenario skew{2, 2, Vector(2), 0.4};
  skew.rho << 0.9, 0.1;
  EXPECT_EQ(code_of([&] { routing_error_threshold(skew); }), ErrorCode::kUnbalancedScenario);
}

TEST(RoutingErrorThreshold, MonteCarloCrossover) {
  const auto sc = ExclusiveScenario::balanced(5, 10, 0.1);
  const auto est = mc_routing_crossover(sc, kMonteCarlo, 9);
  EXPECT_NEAR(est.delta, routing_error_threshold(sc), 0.01);
}

TEST(ImperfectScenario, Validation) {
  EXPECT_EQ(code_of([] { ImperfectScenario{2, 4, 0.9, 0.05, 0.7}.validate(); }),
            ErrorCode::kInvalidScenario);
  EXPECT_EQ(code_of([] { ImperfectScenario{5, 4, 0.2, 0.05, 0.7}.validate(); }),
            ErrorCode::kInvalidScenario);
  EXPECT_EQ(code_of([] { ImperfectScenario{5, 4, 0.9, 0.05, 0.99}.validate(); }),
            ErrorCode::kInvalidScenario);
  // A confident wrong majority that outranks the competent agent.
  EXPECT_EQ(code_of([] { gen_imperfect(ImperfectScenario{5, 4, 0.3, 0.01, 0.98}, 1, 0); }),
            ErrorCode::kConfidenceOrderViolated);
}

TEST(GenImperfect, RowsAndRoutingOutcomes) {
  const ImperfectScenario sc{5, 4, 0.9, 0.05, 0.7};
  ASSERT_TRUE(sc.wrong_majority());
  const auto set = gen_imperfect(sc, 2000, 4);
  const Vector uniform_a = Vector::Constant(5, 0.2);
  for (const auto& item : set.items()) {
    for (int j = 0; j < 5; ++j) {
      EXPECT_NO_THROW(BeliefVector(Vector(item.snapshot.matrix().row(j).transpose())));
    }
    const int jc = argmax_index(confidences(item.snapshot));
    EXPECT_EQ(jc, *item.region);
    EXPECT_EQ(argmax_index(Vector(item.snapshot.matrix().row(jc).transpose())), item.label);
    EXPECT_EQ(argmax_index(mixture(item.snapshot, uniform_a)), (item.label + 1) % 4);
  }
}

TEST(GenImperfect, TwoLabelsForceTheWrongMass) {
  const ImperfectScenario sc{3, 2, 0.9, 0.2, 0.123};
  const auto set = gen_imperfect(sc, 50, 2);
  for (const auto& item : set.items()) {
    for (int j = 0; j < 3; ++j) {
      if (j == *item.region) continue;
      EXPECT_NEAR(item.snapshot.matrix()(j, item.label), 0.2, 1e-15);
      EXPECT_NEAR(item.snapshot.matrix()(j, 1 - item.label), 0.8, 1e-15);
    }
  }
}

TEST(GenImperfect, AllRowsValidAtCorners) {
  for (int d : {2, 3, 6}) {
    for (double p : {1.0 / d + 0.01, 0.99}) {
      for (double u : {0.001, 1.0 / d - 0.001}) {
        for (double c : {u + 0.001, 1.0 - u}) {
          const ImperfectScenario sc{4, d, p, u, c};
          try {
            sc.validate();
          } catch (const Error&) {
            continue;
          }
          try {
            const auto set = gen_imperfect(sc, 20, 1);
            for (const auto& item : set.items()) {
              for (int j = 0; j < 4; ++j) {
                EXPECT_TRUE(on_simplex(Vector(item.snapshot.matrix().row(j).transpose())))
                    << d << " " << p << " " << u << " " << c << " " << item.snapshot.matrix().row(j);
                EXPECT_GE(item.snapshot.matrix().row(j).minCoeff(), 0.0);
              }
            }
          } catch (const Error& e) {
            EXPECT_EQ(e.code(), ErrorCode::kConfidenceOrderViolated);
          }
        }
      }
    }
  }
}

TEST(ImperfectGap, ReferenceAndMonteCarlo) {
  const ImperfectScenario sc{5, 4, 0.9, 0.05, 0.7};
  EXPECT_NEAR(imperfect_gap(sc), std::log(0.9 / 0.22), 1e-12);
  EXPECT_NEAR(imperfect_gap(sc), 1.4088, 1e-4);
  // Independent of c and d.
  EXPECT_EQ(imperfect_gap(ImperfectScenario{5, 6, 0.9, 0.05, 0.4}), imperfect_gap(sc));

  const auto set = gen_imperfect(sc, kMonteCarlo, 8);
  const double mc = mc_ensemble_log_loss(set, Vector::Constant(5, 0.2)) -
                    mc_hard_confidence_log_loss(set);
  EXPECT_NEAR(mc, imperfect_gap(sc), 0.01);
}

TEST(KnownLaw, RiskIsExpectedBrier) {
  const auto set = gen_known_law(3, 4, 50, 2);
  for (const auto& item : set.items()) {
    ASSERT_TRUE(item.label_law.has_value());
    const Vector r = local_risk(item);
    for (int j = 0; j < 3; ++j) {
      double expect = 0.0;
      for (int y = 0; y < 4; ++y) {
        expect += (*item.label_law)[y] *
                  oracle::brier(oracle::to_rows(item.snapshot.matrix())[j], y);
      }
      EXPECT_NEAR(r[j], expect, 1e-14);
    }
  }
}

TEST(ToTrajectories, SingleRoundWithLabels) {
  const auto set = gen_exclusive(ExclusiveScenario::balanced(3, 3, 0.1), 12, 0);
  const auto trajs = to_trajectories(set, "ex-");
  ASSERT_EQ(trajs.size(), 12u);
  EXPECT_EQ(trajs[3].sample_id(), "ex-03");
  EXPECT_EQ(trajs[3].rounds(), 0);
  EXPECT_EQ(*trajs[3].correct_label(), set[3].label);
  EXPECT_EQ(trajs[3].metadata().at("region"), std::to_string(*set[3].region));
}

}  // namespace
}  // namespace fjlab
