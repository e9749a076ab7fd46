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

#pragma once

// Hand-rolled random generators and straight-line reference implementations
// shared by the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <vector>

#include "fcil/federation.hpp"
#include "fcil/lora.hpp"
#include "fcil/numkit.hpp"
#include "fcil/protomodel.hpp"

namespace fcil::testing {

// Small self-contained generator so test inputs do not depend on RngStream.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : state_(seed * 0x9E3779B97F4A7C15ULL + 0x632BE59BD9B4E019ULL) {}

  std::uint64_t bits() {
    state_ ^= state_ >> 12;
    state_ ^= state_ << 25;
    state_ ^= state_ >> 27;
    return state_ * 0x2545F4914F6CDD1DULL;
  }
  double unit() { return static_cast<double>(bits() >> 11) * 0x1.0p-53; }
  double real(double lo, double hi) { return lo + (hi - lo) * unit(); }
  std::size_t index(std::size_t lo, std::size_t hi) {  // inclusive
    return lo + static_cast<std::size_t>(bits() % (hi - lo + 1));
  }
  bool coin() { return (bits() & 1U) != 0; }

  Matrix matrix(std::size_t r, std::size_t c, double scale = 1.0) {
    Matrix m(r, c);
    for (double& v : m.data()) v = real(-scale, scale);
    return m;
  }
  Vector vector(std::size_t n, double scale = 1.0) {
    Vector v(n);
    for (double& x : v) x = real(-scale, scale);
    return v;
  }

 private:
  std::uint64_t state_;
};

inline Matrix naive_matmul(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      long double s = 0.0L;
      for (std::size_t p = 0; p < a.cols(); ++p) s += static_cast<long double>(a(i, p)) * b(p, j);
      out(i, j) = static_cast<double>(s);
    }
  }
  return out;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  return m;
}

inline LoraAdapter random_adapter(Gen& g, std::size_t d, std::size_t k, std::size_t r, int stage) {
  return LoraAdapter{stage, g.matrix(d, r), g.matrix(r, k)};
}

// Ledger with `stages` random stages on layer 0.
inline LoraLedger random_ledger(Gen& g, std::size_t d, std::size_t k, std::size_t r, std::size_t stages) {
  std::vector<LoraAdapter> all;
  for (std::size_t s = 1; s <= stages; ++s) all.push_back(random_adapter(g, d, k, r, static_cast<int>(s)));
  return LoraLedger::from_stages(AttachmentPoint{0, "weight"}, std::move(all));
}

// Reference forward pass: materialize W + delta and apply the stack directly.
inline Vector oracle_forward(const FrozenBackbone& bb, const std::vector<LoraLedger>& ledgers,
                             MergeMode mode, const Vector& x) {
  Vector h = x;
  for (std::size_t l = 0; l < bb.layer_count(); ++l) {
    Matrix w = bb.layer(l).weight;
    for (const auto& led : ledgers) {
      if (led.attachment().layer != l) continue;
      Matrix dw(w.rows(), w.cols());
      const auto stages = led.stages();
      if (mode == MergeMode::kSum) {
        Matrix sa(led.out_dim(), led.rank()), sb(led.rank(), led.in_dim());
        for (const auto* s : stages) {
          sa += s->a;
          sb += s->b;
        }
        dw = naive_matmul(sa, sb);
      } else if (mode == MergeMode::kConcat) {
        for (const auto* s : stages) dw += naive_matmul(s->a, s->b);
      } else {
        dw = naive_matmul(stages.back()->a, stages.back()->b);
      }
      w += dw;
    }
    Vector y(w.rows());
    for (std::size_t i = 0; i < w.rows(); ++i) {
      double s = bb.layer(l).bias[i];
      for (std::size_t j = 0; j < w.cols(); ++j) s += w(i, j) * h[j];
      y[i] = s;
    }
    if (l + 1 < bb.layer_count() && bb.activation() == Activation::kTanh) {
      for (double& v : y) v = std::tanh(v);
    }
    h = std::move(y);
  }
  return h;
}

// Straight-line re-weight for one class: uploads as (prototype, mean) pairs.
inline Vector oracle_reweight_weights(const std::vector<Vector>& protos, const std::vector<Vector>& means,
                                      double eta) {
  const std::size_t k = protos.size();
  std::vector<double> inv(k);
  for (std::size_t a = 0; a < k; ++a) {
    double d = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t j = 0; j < protos[a].size(); ++j) {
        const double e = protos[a][j] - means[i][j];
        d += e * e;
      }
    }
    inv[a] = 1.0 / std::max(d, 1e-12);
  }
  const double lo = *std::min_element(inv.begin(), inv.end());
  const double hi = *std::max_element(inv.begin(), inv.end());
  std::vector<double> alpha(k, 0.0);
  if (hi > lo) {
    for (std::size_t a = 0; a < k; ++a) alpha[a] = (inv[a] - lo) / (hi - lo);
  }
  double z = 0.0;
  for (double a : alpha) z += std::exp(eta * a);
  Vector w(k);
  for (std::size_t a = 0; a < k; ++a) w[a] = std::exp(eta * alpha[a]) / z;
  return w;
}

inline ClientUpload make_test_upload(int id, const std::map<ClassId, Vector>& protos,
                                     const std::map<ClassId, Vector>& means, std::size_t count) {
  ClientUpload u;
  u.client_id = id;
  u.prototypes = protos;
  u.class_means = means;
  u.sample_count = count;
  return u;
}

// Random model for gradient checks: 1-3 layers, ledgers with 1-3 stages on a
// random subset of layers (at least one), random prototypes.
struct GradCase {
  ModelState model;
  std::vector<LabeledSample> batch;
  std::vector<ClassId> classes;
};

inline GradCase random_grad_case(Gen& g, Activation act) {
  const std::size_t layers = g.index(1, 3);
  std::vector<std::size_t> dims{g.index(3, 6)};
  for (std::size_t l = 0; l < layers; ++l) dims.push_back(g.index(3, 6));
  std::vector<AffineLayer> ls;
  for (std::size_t l = 0; l < layers; ++l) {
    ls.push_back({g.matrix(dims[l + 1], dims[l], 0.8), g.vector(dims[l + 1], 0.3)});
  }
  GradCase gc;
  gc.model.backbone = std::make_shared<const FrozenBackbone>(std::move(ls), act);
  gc.model.merge_mode = MergeMode::kSum;
  const std::size_t stages = g.index(1, 3);
  for (std::size_t l = 0; l < layers; ++l) {
    if (l != 0 && !g.coin()) continue;
    const std::size_t d = dims[l + 1], k = dims[l];
    const std::size_t r = std::min<std::size_t>(g.index(1, 4), std::min(d, k));
    std::vector<LoraAdapter> all;
    for (std::size_t s = 1; s <= stages; ++s) {
      all.push_back(LoraAdapter{static_cast<int>(s), g.matrix(d, r, 0.5), g.matrix(r, k, 0.5)});
    }
    gc.model.ledgers.push_back(LoraLedger::from_stages(AttachmentPoint{l, "weight"}, std::move(all)));
  }
  const std::size_t n_classes = g.index(2, 5);
  gc.model.prototypes = PrototypeSet(dims.back());
  for (std::size_t c = 0; c < n_classes; ++c) {
    gc.model.prototypes.add(static_cast<ClassId>(c), g.vector(dims.back()), true);
    gc.classes.push_back(static_cast<ClassId>(c));
  }
  const std::size_t n = g.index(2, 6);
  for (std::size_t i = 0; i < n; ++i) {
    gc.batch.push_back({g.vector(dims.front()), static_cast<ClassId>(g.index(0, n_classes - 1))});
  }
  return gc;
}

}  // namespace fcil::testing
