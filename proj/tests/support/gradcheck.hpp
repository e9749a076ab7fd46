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

#include <algorithm>
#include <cmath>
#include <functional>

#include "generators.hpp"

namespace fcil::testing {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped_kinks = 0;
};

// Relative error with an absolute floor so vanishing gradients compare by
// absolute difference.
inline double rel_error(double analytic, double numeric, double floor = 1e-5) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

// True when moving a_t by +-h flips the sign of some entry of A_i^T A_t.
inline bool crosses_kink(const LoraLedger& plus, const LoraLedger& minus) {
  const auto fa = plus.frozen_a();
  for (std::size_t i = 0; i < fa.size(); ++i) {
    const Matrix p = naive_matmul(fa[i].transpose(), plus.active().a);
    const Matrix m = naive_matmul(fa[i].transpose(), minus.active().a);
    for (std::size_t e = 0; e < p.size(); ++e) {
      const double a = p.values()[e], b = m.values()[e];
      if (a == 0.0 || b == 0.0 || (a > 0.0) != (b > 0.0)) return true;
    }
  }
  return false;
}

// Central differences (step h) on every trainable parameter of `gc.model`.
inline GradCheckResult check_gradients(const GradCase& gc, const HyperParams& hp, double h = 1e-5) {
  Gradients grads;
  loss_and_grads(gc.batch, gc.model, hp, gc.classes, grads);
  GradCheckResult res;
  const auto loss_at = [&](const ModelState& m) { return total_loss(gc.batch, m, hp, gc.classes).total; };

  for (std::size_t li = 0; li < gc.model.ledgers.size(); ++li) {
    for (int which = 0; which < 2; ++which) {
      const Matrix& analytic = which == 0 ? grads.adapters[li].a : grads.adapters[li].b;
      const std::size_t n = which == 0 ? gc.model.ledgers[li].active().a.size()
                                       : gc.model.ledgers[li].active().b.size();
      for (std::size_t e = 0; e < n; ++e) {
        ModelState plus = gc.model, minus = gc.model;
        auto& p = which == 0 ? plus.ledgers[li].active().a : plus.ledgers[li].active().b;
        auto& m = which == 0 ? minus.ledgers[li].active().a : minus.ledgers[li].active().b;
        p.data()[e] += h;
        m.data()[e] -= h;
        if (which == 0 && hp.gamma != 0.0 && crosses_kink(plus.ledgers[li], minus.ledgers[li])) {
          ++res.skipped_kinks;
          continue;
        }
        const double numeric = (loss_at(plus) - loss_at(minus)) / (2.0 * h);
        res.max_rel_error = std::max(res.max_rel_error, rel_error(analytic.values()[e], numeric));
        ++res.checked;
      }
    }
  }
  for (ClassId c : gc.classes) {
    if (!gc.model.prototypes.trainable(c)) continue;
    const Vector& analytic = grads.prototypes.at(c);
    for (std::size_t e = 0; e < analytic.size(); ++e) {
      ModelState plus = gc.model, minus = gc.model;
      plus.prototypes.at(c)[e] += h;
      minus.prototypes.at(c)[e] -= h;
      const double numeric = (loss_at(plus) - loss_at(minus)) / (2.0 * h);
      res.max_rel_error = std::max(res.max_rel_error, rel_error(analytic[e], numeric));
      ++res.checked;
    }
  }
  return res;
}

}  // namespace fcil::testing
