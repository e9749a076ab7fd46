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
#include "fcil/protomodel.hpp"
#include "gradcheck.hpp"
#include "generators.hpp"

namespace fcil {
namespace {

using testing::Gen;

PrototypeSet two_protos() {
  PrototypeSet p(2);
  p.add(0, {0.0, 0.0}, true);
  p.add(1, {std::sqrt(std::log(4.0)), 0.0}, true);
  return p;
}

TEST(Backbone, RejectsBrokenChains) {
  std::vector<AffineLayer> layers{{Matrix(3, 2), Vector(3)}, {Matrix(2, 4), Vector(2)}};
  EXPECT_THROW(FrozenBackbone(layers, Activation::kTanh), Error);
  std::vector<AffineLayer> bad_bias{{Matrix(3, 2), Vector(2)}};
  EXPECT_THROW(FrozenBackbone(bad_bias, Activation::kTanh), Error);
}

TEST(Backbone, RandomShapesAndZeroBias) {
  RngStream rng(1);
  const std::vector<std::size_t> dims{5, 4, 3};
  const auto bb = FrozenBackbone::random(dims, Activation::kTanh, 1.0, rng);
  EXPECT_EQ(bb.input_dim(), 5U);
  EXPECT_EQ(bb.output_dim(), 3U);
  EXPECT_EQ(bb.layer_count(), 2U);
  for (const auto& l : bb.layers()) {
    for (double b : l.bias) EXPECT_EQ(b, 0.0);
  }
}

TEST(Backbone, NoActivationAfterLastLayer) {
  std::vector<AffineLayer> layers{{Matrix::from_rows({{3.0}}), Vector{0.0}}};
  const auto bb = std::make_shared<const FrozenBackbone>(layers, Activation::kTanh);
  const Vector f = forward_features(*bb, {}, MergeMode::kSum, Vector{1.0});
  EXPECT_DOUBLE_EQ(f[0], 3.0);
}

TEST(Forward, MatchesMaterializedWeightsAllModes) {
  Gen g(2);
  for (int i = 0; i < 60; ++i) {
    const auto gc = testing::random_grad_case(g, i % 2 ? Activation::kTanh : Activation::kIdentity);
    for (auto mode : {MergeMode::kSum, MergeMode::kConcat, MergeMode::kActiveOnly}) {
      for (const auto& s : gc.batch) {
        const Vector got = forward_features(*gc.model.backbone, gc.model.ledgers, mode, s.features);
        const Vector want = testing::oracle_forward(*gc.model.backbone, gc.model.ledgers, mode, s.features);
        for (std::size_t j = 0; j < got.size(); ++j) ASSERT_NEAR(got[j], want[j], 1e-12);
      }
    }
  }
}

TEST(Dce, ProbabilitiesFromDistances) {
  const auto protos = two_protos();
  const std::vector<ClassId> cls{0, 1};
  const Vector p = dce_probs(Vector{0.0, 0.0}, protos, 1.0, cls);
  EXPECT_NEAR(p[0], 0.8, 1e-15);
  EXPECT_NEAR(p[1], 0.2, 1e-15);
  EXPECT_NEAR(loss_dce(Vector{0.0, 0.0}, 0, protos, 1.0, cls), 0.2231435513142097, 1e-14);
  EXPECT_NEAR(loss_dce(Vector{0.0, 0.0}, 1, protos, 1.0, cls), std::log(5.0), 1e-14);
}

TEST(Dce, SubsetRestrictsTheSoftmax) {
  const auto protos = two_protos();
  EXPECT_NEAR(loss_dce(Vector{0.0, 0.0}, 0, protos, 1.0, std::vector<ClassId>{0}), 0.0, 1e-15);
  EXPECT_THROW(loss_dce(Vector{0.0, 0.0}, 1, protos, 1.0, std::vector<ClassId>{0}), Error);
}

TEST(Dce, LossIsNonNegativeProperty) {
  Gen g(3);
  for (int i = 0; i < 200; ++i) {
    PrototypeSet p(3);
    std::vector<ClassId> cls;
    for (int c = 0; c < 4; ++c) {
      p.add(c, g.vector(3, 20.0), true);
      cls.push_back(c);
    }
    const double l = loss_dce(g.vector(3, 20.0), static_cast<ClassId>(g.index(0, 3)), p, g.real(0.1, 5.0), cls);
    ASSERT_GE(l, 0.0);
    ASSERT_TRUE(std::isfinite(l));
  }
}

TEST(Pl, SquaredDistanceToOwnPrototype) {
  const auto protos = two_protos();
  EXPECT_DOUBLE_EQ(loss_pl(Vector{1.0, 2.0}, 0, protos), 5.0);
}

TEST(Predict, NearestWithTiesToSmallerId) {
  PrototypeSet p(1);
  p.add(4, {1.0}, true);
  p.add(2, {-1.0}, true);
  p.add(7, {5.0}, true);
  const std::vector<ClassId> all{2, 4, 7};
  EXPECT_EQ(predict(Vector{0.0}, p, all), 2);
  EXPECT_EQ(predict(Vector{0.9}, p, all), 4);
  EXPECT_EQ(predict(Vector{4.0}, p, all), 7);
  EXPECT_EQ(predict(Vector{4.0}, p, std::vector<ClassId>{2, 4}), 4);
}

TEST(Prototypes, MissingAndDuplicate) {
  PrototypeSet p(2);
  p.add(1, {0.0, 0.0}, false);
  EXPECT_THROW(p.add(1, {1.0, 1.0}, true), Error);
  EXPECT_THROW(p.add(2, {1.0}, true), Error);
  try {
    p.at(3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("missing prototype for class 3"), std::string::npos);
  }
  EXPECT_FALSE(p.trainable(1));
  p.set_trainable(1, true);
  EXPECT_TRUE(p.trainable(1));
  p.freeze_all();
  EXPECT_FALSE(p.trainable(1));
}

TEST(Model, AttachmentValidation) {
  RngStream rng(4);
  const std::vector<std::size_t> dims{4, 4, 4};
  auto bb = std::make_shared<const FrozenBackbone>(FrozenBackbone::random(dims, Activation::kTanh, 1.0, rng));
  const std::vector<AttachmentPoint> dup{{0, "weight"}, {0, "weight"}};
  EXPECT_THROW(make_model(bb, dup, 2, 0.02, MergeMode::kSum, rng), Error);
  const std::vector<AttachmentPoint> out_of_range{{2, "weight"}};
  EXPECT_THROW(make_model(bb, out_of_range, 2, 0.02, MergeMode::kSum, rng), Error);
  const std::vector<AttachmentPoint> unsorted{{1, "weight"}, {0, "weight"}};
  const auto m = make_model(bb, unsorted, 2, 0.02, MergeMode::kSum, rng);
  ASSERT_EQ(m.ledgers.size(), 2U);
  EXPECT_EQ(m.ledgers[0].attachment().layer, 0U);
  EXPECT_EQ(m.ledgers[1].attachment().layer, 1U);
}

TEST(Model, FreshAdaptersLeaveFeaturesUnchanged) {
  RngStream rng(5);
  const std::vector<std::size_t> dims{3, 4, 2};
  auto bb = std::make_shared<const FrozenBackbone>(FrozenBackbone::random(dims, Activation::kTanh, 1.0, rng));
  const std::vector<AttachmentPoint> at{{0, "weight"}, {1, "weight"}};
  const auto m = make_model(bb, at, 2, 0.5, MergeMode::kSum, rng);
  const Vector x{0.3, -0.2, 0.9};
  EXPECT_EQ(forward_features(m, x), forward_features(*bb, {}, MergeMode::kSum, x));
}

TEST(Loss, BreakdownComposesTotal) {
  Gen g(6);
  const auto gc = testing::random_grad_case(g, Activation::kTanh);
  HyperParams hp;
  hp.lambda = 0.3;
  hp.gamma = 0.7;
  const auto lb = total_loss(gc.batch, gc.model, hp, gc.classes);
  double dce = 0.0, pl = 0.0;
  for (const auto& s : gc.batch) {
    const Vector f = forward_features(gc.model, s.features);
    dce += loss_dce(f, s.label, gc.model.prototypes, hp.delta, gc.classes);
    pl += loss_pl(f, s.label, gc.model.prototypes);
  }
  dce /= static_cast<double>(gc.batch.size());
  pl /= static_cast<double>(gc.batch.size());
  double ort = 0.0;
  for (const auto& l : gc.model.ledgers) ort += ortho_reg(l.frozen_a(), l.active().a);
  EXPECT_NEAR(lb.dce, dce, 1e-12);
  EXPECT_NEAR(lb.pl, pl, 1e-12);
  EXPECT_NEAR(lb.ort, ort, 1e-12);
  EXPECT_NEAR(lb.total, dce + 0.3 * pl + 0.7 * ort, 1e-12);
}

TEST(Gradients, MatchFiniteDifferences) {
  Gen g(7);
  for (int i = 0; i < 12; ++i) {
    const auto gc = testing::random_grad_case(g, i % 2 ? Activation::kTanh : Activation::kIdentity);
    HyperParams hp;
    hp.delta = g.real(0.5, 2.0);
    hp.lambda = g.real(0.0, 1.0);
    hp.gamma = g.real(0.0, 1.0);
    const auto r = testing::check_gradients(gc, hp);
    EXPECT_GT(r.checked, 0U);
    EXPECT_LE(r.max_rel_error, 1e-4);
  }
}

TEST(Gradients, FrozenPrototypesGetNoEntry) {
  Gen g(8);
  auto gc = testing::random_grad_case(g, Activation::kTanh);
  gc.model.prototypes.set_trainable(gc.classes.front(), false);
  Gradients grads;
  loss_and_grads(gc.batch, gc.model, HyperParams{}, gc.classes, grads);
  EXPECT_EQ(grads.prototypes.count(gc.classes.front()), 0U);
  EXPECT_EQ(grads.prototypes.size(), gc.classes.size() - 1);
  EXPECT_EQ(grads.adapters.size(), gc.model.ledgers.size());
}

TEST(HyperParamsCheck, RejectsInvalid) {
  HyperParams hp;
  EXPECT_NO_THROW(hp.validate());
  hp.delta = 0.0;
  EXPECT_THROW(hp.validate(), Error);
  hp = HyperParams{};
  hp.eta = -1.0;
  EXPECT_THROW(hp.validate(), Error);
  hp = HyperParams{};
  hp.batch_size = 0;
  EXPECT_THROW(hp.validate(), Error);
}

}  // namespace
}  // namespace fcil
