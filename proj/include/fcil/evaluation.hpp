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
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "fcil/protomodel.hpp"
#include "fcil/sample.hpp"

namespace fcil {

// rows[i][j] = accuracy on task-j test classes after finishing stage i
// (0-based), populated for j <= i.
struct AccuracyMatrix {
  std::vector<std::vector<double>> rows;

  std::size_t stages() const noexcept { return rows.size(); }
  double at(std::size_t i, std::size_t j) const { return rows.at(i).at(j); }
};

// Fraction of the pooled samples whose nearest prototype (over
// `seen_classes`) is the true label.
double acc_all_seen(const ModelState& model, std::span<const LabeledSample> test,
                    std::span<const ClassId> seen_classes);

// Same, from features already computed by the model.
double accuracy_from_features(std::span<const Vector> features,
                              std::span<const LabeledSample> samples,
                              const PrototypeSet& protos, std::span<const ClassId> seen_classes);

double avg_metric(std::span<const double> per_stage_accuracy);

// Per task j: max_{i >= j} a[i][j] - a[T-1][j]; the final task reports 0.
std::vector<double> forgetting_report(const AccuracyMatrix& acc);

struct ProtoDistanceRow {
  ClassId class_id;
  double reweight_distance;  // mean ||f - m|| over the class's test features
  double uniform_distance;
};

std::vector<ProtoDistanceRow> proto_distance_report(
    const std::map<ClassId, Vector>& reweight_protos,
    const std::map<ClassId, Vector>& uniform_protos,
    const std::map<ClassId, std::vector<Vector>>& test_features);

// Spearman correlation with average ranks for ties; nullopt when either
// side is constant (including single-element input).
std::optional<double> spearman(std::span<const double> x, std::span<const double> y);

struct WeightAlignmentRow {
  ClassId class_id;
  std::optional<double> correlation;  // empty when degenerate
};

std::vector<WeightAlignmentRow> weight_alignment_report(
    const std::map<ClassId, Vector>& weights, const std::map<ClassId, Vector>& true_shares);

}  // namespace fcil
