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

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fcil/error.hpp"
#include "fcil/evaluation.hpp"
#include "generators.hpp"

namespace fcil {
namespace {

using testing::Gen;

TEST(Forgetting, HandMatrix) {
  AccuracyMatrix acc;
  acc.rows = {{0.9}, {0.7, 0.8}, {0.6, 0.85, 0.5}};
  const auto f = forgetting_report(acc);
  ASSERT_EQ(f.size(), 3U);
  EXPECT_NEAR(f[0], 0.3, 1e-15);
  EXPECT_NEAR(f[1], 0.0, 1e-15);
  EXPECT_EQ(f[2], 0.0);
}

TEST(Forgetting, NonNegativeProperty) {
  Gen g(1);
  for (int trial = 0; trial < 100; ++trial) {
    AccuracyMatrix acc;
    const std::size_t t = g.index(1, 8);
    for (std::size_t i = 0; i < t; ++i) {
      acc.rows.emplace_back();
      for (std::size_t j = 0; j <= i; ++j) acc.rows.back().push_back(g.unit());
    }
    for (double v : forgetting_report(acc)) ASSERT_GE(v, 0.0);
  }
}

TEST(Avg, MeanOfStages) {
  const std::vector<double> a{0.9, 0.6, 0.3};
  EXPECT_NEAR(avg_metric(a), 0.6, 1e-15);
  EXPECT_THROW(avg_metric(std::vector<double>{}), Error);
}

TEST(Accuracy, NearestPrototypeCount) {
  PrototypeSet p(1);
  p.add(0, {0.0}, false);
  p.add(1, {10.0}, false);
  const std::vector<LabeledSample> s{{{1.0}, 0}, {{9.0}, 1}, {{6.0}, 0}, {{4.0}, 1}};
  std::vector<Vector> f;
  for (const auto& x : s) f.push_back(x.features);
  const std::vector<ClassId> seen{0, 1};
  EXPECT_DOUBLE_EQ(accuracy_from_features(f, s, p, seen), 0.5);
  EXPECT_THROW(accuracy_from_features({}, {}, p, seen), Error);
}

TEST(ProtoDistance, MeanEuclidean) {
  const std::map<ClassId, Vector> rw{{3, {0.0, 0.0}}};
  const std::map<ClassId, Vector> un{{3, {3.0, 0.0}}};
  const std::map<ClassId, std::vector<Vector>> feats{{3, {{3.0, 4.0}, {0.0, 0.0}}}};
  const auto rows = proto_distance_report(rw, un, feats);
  ASSERT_EQ(rows.size(), 1U);
  EXPECT_EQ(rows[0].class_id, 3);
  EXPECT_DOUBLE_EQ(rows[0].reweight_distance, 2.5);
  EXPECT_DOUBLE_EQ(rows[0].uniform_distance, 3.5);
  EXPECT_THROW(proto_distance_report(rw, {}, feats), Error);
  EXPECT_THROW(proto_distance_report(rw, un, {}), Error);
}

// Pearson correlation of average ranks, ranks assigned by pairwise counting.
double oracle_spearman(const std::vector<double>& x, const std::vector<double>& y) {
  auto ranks = [](const std::vector<double>& v) {
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      double less = 0, equal = 0;
      for (double w : v) {
        less += w < v[i];
        equal += w == v[i];
      }
      r[i] = less + (equal + 1) / 2;
    }
    return r;
  };
  const auto rx = ranks(x), ry = ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

TEST(Spearman, HandValues) {
  const std::vector<double> x{1, 2, 3, 4}, up{10, 20, 30, 40}, down{4, 3, 2, 1};
  EXPECT_NEAR(*spearman(x, up), 1.0, 1e-15);
  EXPECT_NEAR(*spearman(x, down), -1.0, 1e-15);
  // ranks (1.5, 1.5, 3) vs (1, 2, 3): 1.5 / sqrt(1.5 * 2)
  const std::vector<double> tied{5, 5, 7}, plain{1, 2, 3};
  EXPECT_NEAR(*spearman(tied, plain), std::sqrt(3.0) / 2.0, 1e-15);
}

TEST(Spearman, DegenerateInputs) {
  EXPECT_FALSE(spearman(std::vector<double>{1.0}, std::vector<double>{2.0}).has_value());
  EXPECT_FALSE(spearman(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}).has_value());
  EXPECT_THROW(spearman(std::vector<double>{1, 2}, std::vector<double>{1}), Error);
}

TEST(Spearman, MatchesOracleWithTiesProperty) {
  Gen g(2);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = g.index(2, 12);
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = static_cast<double>(g.index(0, 4));
      y[i] = static_cast<double>(g.index(0, 4));
    }
    const auto got = spearman(x, y);
    const bool flat = std::all_of(x.begin(), x.end(), [&](double v) { return v == x[0]; }) ||
                      std::all_of(y.begin(), y.end(), [&](double v) { return v == y[0]; });
    if (flat) {
      EXPECT_FALSE(got.has_value());
    } else {
      ASSERT_TRUE(got.has_value());
      EXPECT_NEAR(*got, oracle_spearman(x, y), 1e-12);
      EXPECT_LE(std::abs(*got), 1.0 + 1e-12);
    }
  }
}

TEST(WeightAlignment, SingleHolderIsDegenerate) {
  const std::map<ClassId, Vector> w{{0, {0.2, 0.3, 0.5}}, {1, {0.6, 0.3, 0.1}}};
  const std::map<ClassId, Vector> shares{{0, {0.0, 1.0, 0.0}}, {1, {0.5, 0.3, 0.2}}};
  const auto rows = weight_alignment_report(w, shares);
  ASSERT_EQ(rows.size(), 2U);
  EXPECT_FALSE(rows[0].correlation.has_value());
  ASSERT_TRUE(rows[1].correlation.has_value());
  EXPECT_NEAR(*rows[1].correlation, 1.0, 1e-15);
  EXPECT_THROW(weight_alignment_report(w, {{0, {1.0}}}), Error);
}

}  // namespace
}  // namespace fcil
