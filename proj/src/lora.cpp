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

#include "fcil/lora.hpp"

#include <algorithm>
#include <cmath>

namespace fcil {

namespace {

double sign0(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

void check_prev_shapes(std::span<const Matrix> prev_a, const Matrix& a_t) {
  for (std::size_t i = 0; i < prev_a.size(); ++i) {
    require(prev_a[i].same_shape(a_t), ErrorCode::kShapeMismatch,
            "ortho_reg: stage " + std::to_string(i + 1) + " factor is " +
                prev_a[i].shape_string() + " but active factor is " + a_t.shape_string());
  }
}

}  // namespace

LoraAdapter new_adapter(std::size_t d, std::size_t k, std::size_t rank, int stage_id,
                        double init_stddev, RngStream& rng) {
  require(rank >= 1 && rank <= std::min(d, k), ErrorCode::kInvalidArgument,
          "invalid adapter rank " + std::to_string(rank) + " for a " + std::to_string(d) +
              "x" + std::to_string(k) + " weight");
  require(stage_id >= 1, ErrorCode::kInvalidArgument, "stage ids start at 1");
  LoraAdapter adapter;
  adapter.stage_id = stage_id;
  adapter.a = gaussian_matrix(d, rank, 0.0, init_stddev, rng);
  adapter.b = Matrix(rank, k, 0.0);
  return adapter;
}

std::string to_string(MergeMode mode) {
  switch (mode) {
    case MergeMode::kSum: return "sum";
    case MergeMode::kConcat: return "concat";
    case MergeMode::kActiveOnly: return "active_only";
  }
  return "sum";
}

MergeMode merge_mode_from_string(const std::string& text) {
  if (text == "sum") return MergeMode::kSum;
  if (text == "concat") return MergeMode::kConcat;
  if (text == "active_only") return MergeMode::kActiveOnly;
  fail(ErrorCode::kInvalidArgument,
       "unknown ledger mode '" + text + "' (expected sum, concat or active_only)");
}

LoraLedger::LoraLedger(AttachmentPoint attachment, LoraAdapter active)
    : attachment_(std::move(attachment)), active_(std::move(active)) {
  require(active_.a.cols() == active_.b.rows(), ErrorCode::kShapeMismatch,
          "adapter factors " + active_.a.shape_string() + " and " + active_.b.shape_string() +
              " disagree on rank");
}

void LoraLedger::check_compatible(const LoraAdapter& adapter) const {
  require(adapter.a.same_shape(active_.a) && adapter.b.same_shape(active_.b),
          ErrorCode::kShapeMismatch,
          "ledger stages disagree on shape: " + adapter.a.shape_string() + "/" +
              adapter.b.shape_string() + " vs " + active_.a.shape_string() + "/" +
              active_.b.shape_string());
}

std::vector<const LoraAdapter*> LoraLedger::stages() const {
  std::vector<const LoraAdapter*> out;
  out.reserve(stage_count());
  for (const auto& f : frozen_) out.push_back(&f);
  out.push_back(&active_);
  return out;
}

std::vector<Matrix> LoraLedger::frozen_a() const {
  std::vector<Matrix> out;
  out.reserve(frozen_.size());
  for (const auto& f : frozen_) out.push_back(f.a);
  return out;
}

Matrix LoraLedger::sum_a() const {
  Matrix s = active_.a;
  for (const auto& f : frozen_) s += f.a;
  return s;
}

Matrix LoraLedger::sum_b() const {
  Matrix s = active_.b;
  for (const auto& f : frozen_) s += f.b;
  return s;
}

void LoraLedger::advance(LoraAdapter next) {
  check_compatible(next);
  require(next.stage_id == active_.stage_id + 1, ErrorCode::kInvalidArgument,
          "next adapter must carry stage id " + std::to_string(active_.stage_id + 1));
  frozen_.push_back(std::move(active_));
  active_ = std::move(next);
}

LoraLedger LoraLedger::from_stages(AttachmentPoint attachment, std::vector<LoraAdapter> stages) {
  require(!stages.empty(), ErrorCode::kInvalidArgument, "ledger needs at least one stage");
  LoraLedger ledger(std::move(attachment), std::move(stages.front()));
  require(ledger.active_.stage_id == 1, ErrorCode::kInvalidArgument,
          "ledger history must start at stage 1");
  for (std::size_t i = 1; i < stages.size(); ++i) ledger.advance(std::move(stages[i]));
  return ledger;
}

Matrix delta_sum(const LoraLedger& ledger) { return matmul(ledger.sum_a(), ledger.sum_b()); }

Matrix delta_concat(const LoraLedger& ledger) {
  // Block product of [A_1 .. A_t] with [B_1; ..; B_t].
  const auto stages = ledger.stages();
  const std::size_t r = ledger.rank();
  const std::size_t t = stages.size();
  Matrix a_cat(ledger.out_dim(), r * t);
  Matrix b_cat(r * t, ledger.in_dim());
  for (std::size_t s = 0; s < t; ++s) {
    const LoraAdapter& ad = *stages[s];
    for (std::size_t i = 0; i < a_cat.rows(); ++i)
      for (std::size_t p = 0; p < r; ++p) a_cat(i, s * r + p) = ad.a(i, p);
    for (std::size_t p = 0; p < r; ++p)
      for (std::size_t j = 0; j < b_cat.cols(); ++j) b_cat(s * r + p, j) = ad.b(p, j);
  }
  return matmul(a_cat, b_cat);
}

Matrix delta_active(const LoraLedger& ledger) { return ledger.active().product(); }

Matrix delta(const LoraLedger& ledger, MergeMode mode) {
  switch (mode) {
    case MergeMode::kSum: return delta_sum(ledger);
    case MergeMode::kConcat: return delta_concat(ledger);
    case MergeMode::kActiveOnly: return delta_active(ledger);
  }
  return delta_sum(ledger);
}

double ortho_reg(std::span<const Matrix> prev_a, const Matrix& a_t) {
  check_prev_shapes(prev_a, a_t);
  double total = 0.0;
  for (const Matrix& a_i : prev_a) {
    const Matrix gram = matmul(a_i.transpose(), a_t);
    for (double g : gram.data()) total += std::abs(g);
  }
  return total;
}

Matrix ortho_reg_grad(std::span<const Matrix> prev_a, const Matrix& a_t) {
  check_prev_shapes(prev_a, a_t);
  Matrix grad(a_t.rows(), a_t.cols());
  for (const Matrix& a_i : prev_a) {
    Matrix signs = matmul(a_i.transpose(), a_t);
    for (double& g : signs.data()) g = sign0(g);
    grad += matmul(a_i, signs);
  }
  return grad;
}

std::vector<CosinePair> cosine_pairs(const LoraLedger& ledger) {
  require(ledger.stage_count() >= 2, ErrorCode::kInvalidArgument,
          "cosine similarity requires >= 2 stages");
  const auto stages = ledger.stages();
  std::vector<CosinePair> out;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    for (std::size_t j = i + 1; j < stages.size(); ++j) {
      const auto ai = stages[i]->a.data();
      const auto aj = stages[j]->a.data();
      const double denom = norm(ai) * norm(aj);
      const double c = denom > 0.0 ? std::abs(dot(ai, aj)) / denom : 0.0;
      out.push_back({stages[i]->stage_id, stages[j]->stage_id, std::min(c, 1.0)});
    }
  }
  return out;
}

double avg_cosine(const LoraLedger& ledger) {
  const auto pairs = cosine_pairs(ledger);
  double s = 0.0;
  for (const auto& p : pairs) s += p.abs_cosine;
  return s / static_cast<double>(pairs.size());
}

}  // namespace fcil
