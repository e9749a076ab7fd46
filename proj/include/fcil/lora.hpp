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
#include <span>
#include <string>
#include <vector>

#include "fcil/numkit.hpp"

namespace fcil {

// A low-rank factor pair whose product a*b (d x k) is added to a frozen
// weight. `d` is the output width of the modified layer and `k` its input
// width.
struct LoraAdapter {
  int stage_id = 1;
  Matrix a;  // d x r
  Matrix b;  // r x k

  std::size_t rank() const noexcept { return a.cols(); }
  std::size_t out_dim() const noexcept { return a.rows(); }
  std::size_t in_dim() const noexcept { return b.cols(); }
  Matrix product() const { return matmul(a, b); }

  friend bool operator==(const LoraAdapter&, const LoraAdapter&) = default;
};

// Fresh adapter: a ~ N(0, init_stddev), b = 0.
LoraAdapter new_adapter(std::size_t d, std::size_t k, std::size_t rank, int stage_id,
                        double init_stddev, RngStream& rng);

// How the stages of a ledger combine into one weight delta.
enum class MergeMode {
  kSum,         // (sum A_i)(sum B_i)
  kConcat,      // [A_1..A_t][B_1;..;B_t] = sum A_i B_i
  kActiveOnly,  // A_t B_t; ablation that drops the stage history
};

std::string to_string(MergeMode mode);
MergeMode merge_mode_from_string(const std::string& text);

// Identifies the frozen weight a ledger modifies. The affine backbone has one
// projection per layer, so `slot` is always "weight" today.
struct AttachmentPoint {
  std::size_t layer = 0;
  std::string slot = "weight";

  friend auto operator<=>(const AttachmentPoint&, const AttachmentPoint&) = default;
};

// Frozen history of earlier stages plus the active (trainable) adapter.
class LoraLedger {
 public:
  LoraLedger() = default;
  LoraLedger(AttachmentPoint attachment, LoraAdapter active);

  const AttachmentPoint& attachment() const noexcept { return attachment_; }
  const std::vector<LoraAdapter>& frozen() const noexcept { return frozen_; }
  const LoraAdapter& active() const noexcept { return active_; }
  LoraAdapter& active() noexcept { return active_; }

  std::size_t stage_count() const noexcept { return frozen_.size() + 1; }
  std::size_t out_dim() const noexcept { return active_.out_dim(); }
  std::size_t in_dim() const noexcept { return active_.in_dim(); }
  std::size_t rank() const noexcept { return active_.rank(); }

  // Every stage in order, frozen first and active last.
  std::vector<const LoraAdapter*> stages() const;
  std::vector<Matrix> frozen_a() const;

  Matrix sum_a() const;
  Matrix sum_b() const;

  // Freezes the active adapter and installs `next` as the new active one.
  void advance(LoraAdapter next);

  // Rebuilds a ledger from stored stages; validates shapes and ordering.
  static LoraLedger from_stages(AttachmentPoint attachment, std::vector<LoraAdapter> stages);

 private:
  void check_compatible(const LoraAdapter& adapter) const;

  AttachmentPoint attachment_;
  std::vector<LoraAdapter> frozen_;
  LoraAdapter active_;
};

Matrix delta_sum(const LoraLedger& ledger);
Matrix delta_concat(const LoraLedger& ledger);
Matrix delta_active(const LoraLedger& ledger);
Matrix delta(const LoraLedger& ledger, MergeMode mode);

// sum_i sum_{p,q} |(A_i^T A_t)_{pq}|
double ortho_reg(std::span<const Matrix> prev_a, const Matrix& a_t);
// sum_i A_i sign(A_i^T A_t), with sign(0) = 0.
Matrix ortho_reg_grad(std::span<const Matrix> prev_a, const Matrix& a_t);

// |cos| between flattened A factors of stages i < j.
struct CosinePair {
  int stage_i;
  int stage_j;
  double abs_cosine;
};
std::vector<CosinePair> cosine_pairs(const LoraLedger& ledger);
double avg_cosine(const LoraLedger& ledger);

}  // namespace fcil
