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

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "fcil/config.hpp"

namespace fcil {

inline constexpr int kRecordVersion = 1;

struct RunOutcome {
  ExperimentResult result;
  std::filesystem::path output_dir;
  std::string aggregation;  // "reweight" | "uniform"
};

// Output layout under the resolved output directory:
//   record.json, metrics.csv, checkpoints/stage_<t>.json, diagnostics/
// The record is rewritten after every stage; on failure it is written with
// status "failed" before the exception propagates.
RunOutcome run_and_write(const ExperimentConfig& config);

nlohmann::json record_json(const ExperimentConfig& config, const ExperimentResult& result,
                           std::string_view status, const std::vector<std::string>& checkpoints);
std::string metrics_csv(const ExperimentResult& result, std::size_t tasks);

// Per-stage client x class sample counts, no training.
nlohmann::json partition_report(const ExperimentConfig& config);

enum class DiagnosticKind { kOrtho, kPrototypes, kWeights };
DiagnosticKind diagnostic_from_string(std::string_view s);

// Reads record.json (or a directory holding it), returns CSV text and also
// writes it to diagnostics/<which>.csv next to the record.
std::string diagnose(const std::filesystem::path& record, DiagnosticKind which);

// Canonical config field for a sweep axis, or kConfig for unsweepable names.
std::string sweep_field(std::string_view axis);

// One run per value; run i uses seed + i and writes to <output>/sweep_<field>/<i>.
// Returns the summary CSV, also written to <output>/sweep_<field>.csv.
std::string sweep(const ExperimentConfig& base, std::string_view axis,
                  const std::vector<std::string>& values);

}  // namespace fcil
