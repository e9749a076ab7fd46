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
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "fcil/numkit.hpp"
#include "fcil/sample.hpp"

namespace fcil {

struct TaskSchedule {
  std::vector<std::vector<ClassId>> tasks;

  std::size_t task_count() const noexcept { return tasks.size(); }
};

struct QuantityBased {
  std::size_t alpha = 2;  // labels per client
};
struct DistributionBased {
  double beta = 0.5;  // Dirichlet concentration
};

struct PartitionSpec {
  std::variant<QuantityBased, DistributionBased> mode = QuantityBased{};
  std::size_t num_clients = 10;
  std::uint64_t seed = 0;
};

struct ClientShard {
  int client_id = 0;
  std::vector<LabeledSample> samples;

  std::map<ClassId, std::size_t> class_counts() const;
};

// Per class: a center uniform in [-center_scale, center_scale]^dim, and
// `per_class` samples at center + N(0, noise_stddev^2). Classes are 0..n-1.
std::vector<LabeledSample> synth_gaussian(std::size_t num_classes, std::size_t input_dim,
                                          std::size_t per_class, double center_scale,
                                          double noise_stddev, std::uint64_t seed);

// Seeded permutation of `class_ids`, chunked into T equal tasks.
TaskSchedule split_tasks(std::span<const ClassId> class_ids, std::size_t tasks,
                         std::uint64_t seed);

// Each client draws exactly `alpha` distinct labels; each label's samples are
// dealt as evenly as possible among its holders. Draws are repeated (at most
// kQuantityRetries times) until every task class has a holder; after that a
// covering assignment is built directly.
inline constexpr int kQuantityRetries = 1000;
std::vector<ClientShard> partition_quantity(std::span<const LabeledSample> task_samples,
                                            std::span<const ClassId> task_classes,
                                            std::size_t num_clients, std::size_t alpha,
                                            std::uint64_t seed);

// Per class, client proportions ~ Dirichlet(beta), converted to counts by
// largest-remainder rounding so every sample is assigned exactly once.
std::vector<ClientShard> partition_dirichlet(std::span<const LabeledSample> task_samples,
                                             std::span<const ClassId> task_classes,
                                             std::size_t num_clients, double beta,
                                             std::uint64_t seed);

std::vector<ClientShard> partition(std::span<const LabeledSample> task_samples,
                                   std::span<const ClassId> task_classes,
                                   const PartitionSpec& spec);

// Largest-remainder apportionment of `total` items by `weights` (summing to 1).
std::vector<std::size_t> largest_remainder(std::span<const double> weights, std::size_t total);

// Holds out round(fraction * n_c) samples of every class (seeded).
struct TrainTestSplit {
  std::vector<LabeledSample> train;
  std::vector<LabeledSample> test;
};
TrainTestSplit holdout_split(std::span<const LabeledSample> samples, double test_fraction,
                             std::uint64_t seed);

std::vector<LabeledSample> filter_classes(std::span<const LabeledSample> samples,
                                          std::span<const ClassId> classes);

// CSV rows: label, then feature values. Blank lines are skipped.
std::vector<LabeledSample> load_feature_csv(const std::filesystem::path& path);
void write_feature_csv(const std::filesystem::path& path, std::span<const LabeledSample> samples);

}  // namespace fcil
