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
#include <string>
#include <string_view>
#include <vector>

#include "fcil/federation.hpp"

namespace fcil {

// Every knob of one experiment. Defaults follow the reference setup
// (delta=1, lambda=0.001, gamma=0.5, eta=0.2, r=4, E=5, R=30, K=10).
struct ExperimentConfig {
  // dataset
  std::string dataset = "synthetic";  // synthetic | csv
  std::string csv_path;
  std::size_t num_classes = 100;
  std::size_t input_dim = 32;
  std::size_t per_class = 100;
  double center_scale = 1.0;
  double noise_stddev = 0.5;
  double test_fraction = 0.2;

  // backbone
  std::size_t feature_dim = 32;
  std::size_t depth = 2;
  std::string activation = "tanh";
  double backbone_gain = 1.0;
  std::vector<std::size_t> attach_layers = {0};

  // protocol
  std::size_t tasks = 10;
  std::size_t num_clients = 10;
  std::size_t rounds = 30;
  std::size_t local_epochs = 5;
  std::size_t batch_size = 64;
  std::string partition = "quantity";  // quantity | dirichlet
  std::size_t alpha = 6;
  double beta = 0.5;

  // objective and optimizer
  double delta = 1.0;
  double lambda = 0.001;
  double gamma = 0.5;
  double eta = 0.2;
  std::size_t rank = 4;
  double lr_prototypes = 2e-3;
  double lr_lora = 1e-5;
  double lora_init_stddev = 0.02;
  double proto_init_stddev = 0.02;

  // ablations
  std::string ledger_mode = "sum";  // sum | concat | active_only
  bool disable_reweight = false;
  bool freeze_all = false;
  std::string classify_by = "prototypes";
  std::string softmax_scope = "current";  // current | seen
  bool train_old_prototypes = false;

  // run
  std::uint64_t seed = 0;
  std::string output_dir = "runs/default";
  bool parallel_clients = false;
  bool write_checkpoints = true;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

struct ConfigKey {
  std::string_view name;
  std::string_view help;
  bool required;
};

const std::vector<ConfigKey>& config_keys();

// Parses `key = value` lines; '#' starts a comment. Unknown keys, duplicate
// keys, malformed values and missing required keys (dataset, seed,
// output_dir) raise ErrorCode::kConfig naming the field.
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);

// Emits every key in registry order; parse_config(to_text(c)) == c.
std::string config_to_text(const ExperimentConfig& config, bool with_comments);

void set_config_value(ExperimentConfig& config, std::string_view key, std::string_view value);
std::string get_config_value(const ExperimentConfig& config, std::string_view key);

// Cross-field checks; throws kConfig.
void validate_config(const ExperimentConfig& config);

// Output directory after applying the FCIL_OUTPUT_ROOT override.
std::filesystem::path resolved_output_dir(const ExperimentConfig& config);

// Materializes data, tasks and backbone from the config seed.
ExperimentSetup build_setup(const ExperimentConfig& config);

}  // namespace fcil
