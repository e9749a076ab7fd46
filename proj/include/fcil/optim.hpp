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

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace fcil {

struct AdamConstants {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// First and second moment buffers for one parameter tensor.
struct AdamSlot {
  std::vector<double> m;
  std::vector<double> v;

  void ensure(std::size_t n) {
    if (m.size() != n) {
      m.assign(n, 0.0);
      v.assign(n, 0.0);
    }
  }
};

// One bias-corrected Adam step; `step` is 1-based. lr == 0 leaves the
// parameter untouched (moments still advance).
void adam_step(std::span<double> param, std::span<const double> grad, AdamSlot& slot, double lr,
               std::uint64_t step, const AdamConstants& k = {});

// base * (1 + cos(pi * step / total)) / 2, clamped at 0 past the end.
double cosine_lr(double base, std::size_t step, std::size_t total);

}  // namespace fcil
