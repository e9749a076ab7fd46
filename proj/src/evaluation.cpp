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

#include "fcil/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fcil {

double accuracy_from_features(std::span<const Vector> features,
                              std::span<const LabeledSample> samples,
                              const PrototypeSet& protos, std::span<const ClassId> seen_classes) {
  require(!samples.empty(), ErrorCode::kInvalidArgument, "accuracy over an empty test pool");
  require(features.size() == samples.size(), ErrorCode::kShapeMismatch,
          "feature count does not match sample count");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (predict(features[i], protos, seen_classes) == samples[i].label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

double acc_all_seen(const ModelState& model, std::span<const LabeledSample> test,
                    std::span<const ClassId> seen_classes) {
  require(!test.empty(), ErrorCode::kInvalidArgument, "accuracy over an empty test pool");
  std::vector<Vector> features;
  features.reserve(test.size());
  for (const auto& s : test) features.push_back(forward_features(model, s.features));
  return accuracy_from_features(features, test, model.prototypes, seen_classes);
}

double avg_metric(std::span<const double> per_stage_accuracy) {
  require(!per_stage_accuracy.empty(), ErrorCode::kInvalidArgument, "avg over zero stages");
  return std::accumulate(per_stage_accuracy.begin(), per_stage_accuracy.end(), 0.0) /
         static_cast<double>(per_stage_accuracy.size());
}

std::vector<double> forgetting_report(const AccuracyMatrix& acc) {
  const std::size_t t = acc.stages();
  require(t >= 1, ErrorCode::kInvalidArgument, "forgetting needs at least one stage");
  std::vector<double> out(t, 0.0);
  for (std::size_t j = 0; j < t; ++j) {
    double best = acc.at(j, j);
    for (std::size_t i = j; i < t; ++i) best = std::max(best, acc.at(i, j));
    out[j] = best - acc.at(t - 1, j);
  }
  return out;
}

std::vector<ProtoDistanceRow> proto_distance_report(
    const std::map<ClassId, Vector>& reweight_protos,
    const std::map<ClassId, Vector>& uniform_protos,
    const std::map<ClassId, std::vector<Vector>>& test_features) {
  std::vector<ProtoDistanceRow> rows;
  for (const auto& [c, m_rw] : reweight_protos) {
    const auto it_u = uniform_protos.find(c);
    require(it_u != uniform_protos.end(), ErrorCode::kInvalidArgument,
            "class " + std::to_string(c) + " missing from the uniform aggregate");
    const auto it_f = test_features.find(c);
    require(it_f != test_features.end() && !it_f->second.empty(), ErrorCode::kInvalidArgument,
            "class " + std::to_string(c) + " absent from the test set");
    double d_rw = 0.0;
    double d_u = 0.0;
    for (const auto& f : it_f->second) {
      d_rw += std::sqrt(sq_dist(f, m_rw));
      d_u += std::sqrt(sq_dist(f, it_u->second));
    }
    const double n = static_cast<double>(it_f->second.size());
    rows.push_back({c, d_rw / n, d_u / n});
  }
  return rows;
}

namespace {

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

std::optional<double> spearman(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size(), ErrorCode::kShapeMismatch, "spearman: length mismatch");
  if (x.size() < 2) return std::nullopt;
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return sxy / std::sqrt(sxx * syy);
}

std::vector<WeightAlignmentRow> weight_alignment_report(
    const std::map<ClassId, Vector>& weights, const std::map<ClassId, Vector>& true_shares) {
  std::vector<WeightAlignmentRow> rows;
  for (const auto& [c, w] : weights) {
    const auto it = true_shares.find(c);
    require(it != true_shares.end(), ErrorCode::kInvalidArgument,
            "no partition shares for class " + std::to_string(c));
    require(it->second.size() == w.size(), ErrorCode::kShapeMismatch,
            "class " + std::to_string(c) + ": weight and share vectors differ in length");
    // A class held by a single client has nothing to rank against.
    const auto holders = std::count_if(it->second.begin(), it->second.end(), [](double s) { return s > 0.0; });
    rows.push_back({c, holders <= 1 ? std::nullopt : spearman(w, it->second)});
  }
  return rows;
}

}  // namespace fcil
