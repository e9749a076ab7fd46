/*
 * Copyright 2026 The fcilsim Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <gtest/gtest.h>

#include <cmath>

#include "fcil/error.hpp"
#include "fcil/lora.hpp"
#include "generators.hpp"

namespace fcil {
namespace {

using testing::Gen;
using testing::max_abs_diff;
using testing::naive_matmul;

TEST(Adapter, FreshAdapterHasZeroB) {
  RngStream rng(1);
  const LoraAdapter ad = new_adapter(5, 3, 2, 1, 0.02, rng);
  EXPECT_EQ(ad.a.rows(), 5U);
  EXPECT_EQ(ad.a.cols(), 2U);
  EXPECT_EQ(ad.b, Matrix(2, 3));
  EXPECT_EQ(ad.product(), Matrix(5, 3));
}

TEST(Adapter, RankBounds) {
  RngStream rng(1);
  EXPECT_THROW(new_adapter(5, 3, 0, 1, 0.02, rng), Error);
  EXPECT_THROW(new_adapter(5, 3, 4, 1, 0.02, rng), Error);
  EXPECT_THROW(new_adapter(5, 3, 2, 0, 0.02, rng), Error);
  EXPECT_NO_THROW(new_adapter(5, 3, 3, 1, 0.02, rng));
}

TEST(MergeModeNames, RoundTrip) {
  for (auto m : {MergeMode::kSum, MergeMode::kConcat, MergeMode::kActiveOnly}) {
    EXPECT_EQ(merge_mode_from_string(to_string(m)), m);
  }
  EXPECT_THROW(merge_mode_from_string("product"), Error);
}

TEST(Ledger, AdvanceRequiresNextStageAndShape) {
  Gen g(2);
  LoraLedger led({0, "weight"}, testing::random_adapter(g, 4, 3, 2, 1));
  EXPECT_THROW(led.advance(testing::random_adapter(g, 4, 3, 2, 3)), Error);
  EXPECT_THROW(led.advance(testing::random_adapter(g, 4, 2, 2, 2)), Error);
  led.advance(testing::random_adapter(g, 4, 3, 2, 2));
  EXPECT_EQ(led.stage_count(), 2U);
  EXPECT_EQ(led.frozen().front().stage_id, 1);
  EXPECT_EQ(led.active().stage_id, 2);
}

TEST(Ledger, FromStagesValidatesOrder) {
  Gen g(3);
  EXPECT_THROW(LoraLedger::from_stages({0, "weight"}, {testing::random_adapter(g, 3, 3, 1, 2)}), Error);
  EXPECT_THROW(LoraLedger::from_stages({0, "weight"}, {}), Error);
  const auto led = LoraLedger::from_stages(
      {0, "weight"}, {testing::random_adapter(g, 3, 3, 1, 1), testing::random_adapter(g, 3, 3, 1, 2)});
  EXPECT_EQ(led.stage_count(), 2U);
}

TEST(Delta, SumIsProductOfSums) {
  Gen g(4);
  for (int i = 0; i < 50; ++i) {
    const std::size_t d = g.index(1, 6), k = g.index(1, 6), r = g.index(1, std::min(d, k));
    const auto led = testing::random_ledger(g, d, k, r, g.index(1, 4));
    Matrix sa(d, r), sb(r, k);
    for (const auto* s : led.stages()) {
      sa += s->a;
      sb += s->b;
    }
    EXPECT_LE(max_abs_diff(delta_sum(led), naive_matmul(sa, sb)), 1e-13);
    EXPECT_LE(max_abs_diff(delta(led, MergeMode::kSum), delta_sum(led)), 0.0);
  }
}

TEST(Delta, ConcatIsSumOfProducts) {
  Gen g(5);
  for (int i = 0; i < 50; ++i) {
    const std::size_t d = g.index(1, 6), k = g.index(1, 6), r = g.index(1, std::min(d, k));
    const auto led = testing::random_ledger(g, d, k, r, g.index(1, 5));
    Matrix oracle(d, k);
    for (const auto* s : led.stages()) oracle += naive_matmul(s->a, s->b);
    EXPECT_LE(max_abs_diff(delta_concat(led), oracle), 1e-13);
  }
}

TEST(Delta, ActiveOnlyIgnoresHistory) {
  Gen g(6);
  const auto led = testing::random_ledger(g, 4, 4, 2, 3);
  EXPECT_LE(max_abs_diff(delta_active(led), naive_matmul(led.active().a, led.active().b)), 1e-15);
}

TEST(Delta, SingleStageModesAgree) {
  Gen g(7);
  const auto led = testing::random_ledger(g, 5, 4, 3, 1);
  EXPECT_LE(max_abs_diff(delta_sum(led), delta_concat(led)), 1e-15);
  EXPECT_LE(max_abs_diff(delta_sum(led), delta_active(led)), 1e-15);
}

// A fresh stage has B = 0. Concat merging is unchanged by it; sum merging
// gains the cross term A_new * sum(B_old), which vanishes only when A_new = 0.
TEST(Delta, StageTransitionIdentities) {
  Gen g(8);
  RngStream rng(8);
  auto led = testing::random_ledger(g, 5, 4, 2, 1);
  const Matrix concat_before = delta_concat(led);
  const Matrix sum_before = delta_sum(led);

  auto zero_init = led;
  zero_init.advance(new_adapter(5, 4, 2, 2, 0.0, rng));
  EXPECT_LE(max_abs_diff(delta_sum(zero_init), sum_before), 1e-15);

  led.advance(new_adapter(5, 4, 2, 2, 0.5, rng));
  EXPECT_LE(max_abs_diff(delta_concat(led), concat_before), 1e-15);
  const Matrix cross = naive_matmul(led.active().a, led.frozen().front().b);
  EXPECT_LE(max_abs_diff(delta_sum(led), sum_before + cross), 1e-13);
  EXPECT_GT(max_abs_diff(delta_sum(led), sum_before), 1e-6);
}

double oracle_ortho(const std::vector<Matrix>& prev, const Matrix& at) {
  double s = 0.0;
  for (const auto& ai : prev) {
    for (std::size_t p = 0; p < ai.cols(); ++p) {
      for (std::size_t q = 0; q < at.cols(); ++q) {
        double e = 0.0;
        for (std::size_t row = 0; row < ai.rows(); ++row) e += ai(row, p) * at(row, q);
        s += std::abs(e);
      }
    }
  }
  return s;
}

TEST(Ortho, MatchesElementwiseOracle) {
  Gen g(9);
  for (int i = 0; i < 50; ++i) {
    const auto led = testing::random_ledger(g, g.index(2, 6), 3, 1, g.index(1, 4));
    EXPECT_NEAR(ortho_reg(led.frozen_a(), led.active().a), oracle_ortho(led.frozen_a(), led.active().a), 1e-12);
  }
}

TEST(Ortho, NoHistoryIsZero) {
  Gen g(10);
  const auto led = testing::random_ledger(g, 4, 4, 2, 1);
  EXPECT_EQ(ortho_reg(led.frozen_a(), led.active().a), 0.0);
  EXPECT_EQ(ortho_reg_grad(led.frozen_a(), led.active().a), Matrix(4, 2));
}

TEST(Ortho, OrthogonalFactorsGiveZero) {
  const Matrix a1 = Matrix::from_rows({{1.0}, {0.0}, {0.0}});
  const Matrix a2 = Matrix::from_rows({{0.0}, {2.0}, {0.0}});
  const std::vector<Matrix> prev{a1};
  EXPECT_EQ(ortho_reg(prev, a2), 0.0);
  // sign(0) = 0, so the subgradient at an exact zero is zero.
  EXPECT_EQ(ortho_reg_grad(prev, a2), Matrix(3, 1));
}

TEST(Ortho, GradientMatchesFiniteDifferences) {
  Gen g(11);
  const double h = 1e-6;
  for (int i = 0; i < 30; ++i) {
    const auto led = testing::random_ledger(g, g.index(2, 6), 3, g.index(1, 2), g.index(2, 4));
    const auto prev = led.frozen_a();
    const Matrix grad = ortho_reg_grad(prev, led.active().a);
    for (std::size_t e = 0; e < grad.size(); ++e) {
      Matrix plus = led.active().a, minus = led.active().a;
      plus.data()[e] += h;
      minus.data()[e] -= h;
      const double numeric = (ortho_reg(prev, plus) - ortho_reg(prev, minus)) / (2 * h);
      EXPECT_NEAR(grad.values()[e], numeric, 1e-6);
    }
  }
}

TEST(Cosine, PairsMatchFlattenedCosine) {
  Gen g(12);
  const auto led = testing::random_ledger(g, 4, 3, 2, 3);
  const auto pairs = cosine_pairs(led);
  ASSERT_EQ(pairs.size(), 3U);
  const auto stages = led.stages();
  double total = 0.0;
  for (const auto& p : pairs) {
    const auto& x = stages[p.stage_i - 1]->a.values();
    const auto& y = stages[p.stage_j - 1]->a.values();
    double xy = 0, xx = 0, yy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      xy += x[i] * y[i];
      xx += x[i] * x[i];
      yy += y[i] * y[i];
    }
    EXPECT_NEAR(p.abs_cosine, std::abs(xy) / std::sqrt(xx * yy), 1e-14);
    EXPECT_LT(p.stage_i, p.stage_j);
    total += p.abs_cosine;
  }
  EXPECT_NEAR(avg_cosine(led), total / 3.0, 1e-15);
}

TEST(Cosine, SingleStageIsAnError) {
  Gen g(13);
  const auto led = testing::random_ledger(g, 4, 3, 2, 1);
  try {
    cosine_pairs(led);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find(">= 2 stages"), std::string::npos);
  }
}

}  // namespace
}  // namespace fcil
