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

#include "fcil/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "fcil/error.hpp"

namespace fcil {

void adam_step(std::span<double> param, std::span<const double> grad, AdamSlot& slot, double lr,
               std::uint64_t step, const AdamConstants& k) {
  require(param.size() == grad.size(), ErrorCode::kShapeMismatch, "adam: gradient size mismatch");
  require(step >= 1, ErrorCode::kInvalidArgument, "adam: step is 1-based");
  slot.ensure(param.size());
  const double c1 = 1.0 - std::pow(k.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(k.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    slot.m[i] = k.beta1 * slot.m[i] + (1.0 - k.beta1) * grad[i];
    slot.v[i] = k.beta2 * slot.v[i] + (1.0 - k.beta2) * grad[i] * grad[i];
    if (lr == 0.0) continue;
    const double m_hat = slot.m[i] / c1;
    const double v_hat = slot.v[i] / c2;
    param[i] -= lr * m_hat / (std::sqrt(v_hat) + k.epsilon);
  }
}

double cosine_lr(double base, std::size_t step, std::size_t total) {
  if (total == 0 || step >= total) return 0.0;
  const double frac = static_cast<double>(step) / static_cast<double>(total);
  return std::max(0.0, base * 0.5 * (1.0 + std::cos(std::numbers::pi * frac)));
}

}  // namespace fcil
