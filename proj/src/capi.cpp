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

#include "fcil/fcil.h"

#include <cstdlib>
#include <cstring>
#include <new>

#include "fcil/config.hpp"
#include "fcil/experiment.hpp"

struct fcil_config {
  fcil::ExperimentConfig config;
};

struct fcil_experiment {
  fcil::RunOutcome outcome;
  std::string output_dir;
};

namespace {

thread_local std::string g_last_error;

fcil_status status_of(fcil::ErrorCode code) {
  switch (code) {
    case fcil::ErrorCode::kInvalidArgument: return FCIL_INVALID_ARGUMENT;
    case fcil::ErrorCode::kShapeMismatch: return FCIL_SHAPE;
    case fcil::ErrorCode::kConfig: return FCIL_CONFIG;
    case fcil::ErrorCode::kParse: return FCIL_PARSE;
    case fcil::ErrorCode::kIo: return FCIL_IO;
    case fcil::ErrorCode::kRuntime: return FCIL_RUNTIME;
  }
  return FCIL_RUNTIME;
}

template <typename F>
fcil_status guarded(F&& body) {
  try {
    body();
    g_last_error.clear();
    return FCIL_OK;
  } catch (const fcil::Error& e) {
    g_last_error = e.what();
    return status_of(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return FCIL_RUNTIME;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return FCIL_RUNTIME;
  }
}

fcil_status null_arg(const char* what) {
  g_last_error = std::string(what) + " must not be NULL";
  return FCIL_INVALID_ARGUMENT;
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

}  // namespace

extern "C" {

const char* fcil_version(void) { return "0.1.0"; }

const char* fcil_last_error(void) { return g_last_error.c_str(); }

void fcil_string_free(char* s) { std::free(s); }

fcil_status fcil_config_new_default(fcil_config** out) {
  if (out == nullptr) return null_arg("out");
  return guarded([&] { *out = new fcil_config{}; });
}

fcil_status fcil_config_load(const char* path, fcil_config** out) {
  if (path == nullptr) return null_arg("path");
  if (out == nullptr) return null_arg("out");
  return guarded([&] { *out = new fcil_config{fcil::load_config(path)}; });
}

fcil_status fcil_config_parse(const char* text, fcil_config** out) {
  if (text == nullptr) return null_arg("text");
  if (out == nullptr) return null_arg("out");
  return guarded([&] { *out = new fcil_config{fcil::parse_config(text)}; });
}

void fcil_config_free(fcil_config* config) { delete config; }

fcil_status fcil_config_set(fcil_config* config, const char* key, const char* value) {
  if (config == nullptr) return null_arg("config");
  if (key == nullptr || value == nullptr) return null_arg("key/value");
  return guarded([&] { fcil::set_config_value(config->config, key, value); });
}

fcil_status fcil_config_get(const fcil_config* config, const char* key, char** out) {
  if (config == nullptr) return null_arg("config");
  if (key == nullptr || out == nullptr) return null_arg("key/out");
  return guarded([&] { *out = dup_string(fcil::get_config_value(config->config, key)); });
}

fcil_status fcil_config_validate(const fcil_config* config) {
  if (config == nullptr) return null_arg("config");
  return guarded([&] { fcil::validate_config(config->config); });
}

fcil_status fcil_config_to_text(const fcil_config* config, int with_comments, char** out) {
  if (config == nullptr) return null_arg("config");
  if (out == nullptr) return null_arg("out");
  return guarded([&] { *out = dup_string(fcil::config_to_text(config->config, with_comments != 0)); });
}

size_t fcil_config_key_count(void) { return fcil::config_keys().size(); }

const char* fcil_config_key_name(size_t index) {
  const auto& keys = fcil::config_keys();
  return index < keys.size() ? keys[index].name.data() : nullptr;
}

const char* fcil_config_key_help(size_t index) {
  const auto& keys = fcil::config_keys();
  return index < keys.size() ? keys[index].help.data() : nullptr;
}

int fcil_config_key_required(size_t index) {
  const auto& keys = fcil::config_keys();
  return index < keys.size() && keys[index].required ? 1 : 0;
}

fcil_status fcil_run(const fcil_config* config, fcil_experiment** out) {
  if (config == nullptr) return null_arg("config");
  if (out == nullptr) return null_arg("out");
  return guarded([&] {
    auto exp = std::make_unique<fcil_experiment>();
    exp->outcome = fcil::run_and_write(config->config);
    exp->output_dir = exp->outcome.output_dir.string();
    *out = exp.release();
  });
}

double fcil_experiment_final_accuracy(const fcil_experiment* exp) {
  return exp ? exp->outcome.result.final_accuracy : 0.0;
}

double fcil_experiment_avg_accuracy(const fcil_experiment* exp) {
  return exp ? exp->outcome.result.avg_accuracy : 0.0;
}

size_t fcil_experiment_stage_count(const fcil_experiment* exp) {
  return exp ? exp->outcome.result.stages.size() : 0;
}

const char* fcil_experiment_output_dir(const fcil_experiment* exp) {
  return exp ? exp->output_dir.c_str() : nullptr;
}

const char* fcil_experiment_aggregation(const fcil_experiment* exp) {
  return exp ? exp->outcome.aggregation.c_str() : nullptr;
}

void fcil_experiment_free(fcil_experiment* exp) { delete exp; }

fcil_status fcil_partition_report(const fcil_config* config, char** json_out) {
  if (config == nullptr) return null_arg("config");
  if (json_out == nullptr) return null_arg("json_out");
  return guarded([&] { *json_out = dup_string(fcil::partition_report(config->config).dump(1) + "\n"); });
}

fcil_status fcil_diagnose(const char* record_path, const char* which, char** csv_out) {
  if (record_path == nullptr || which == nullptr) return null_arg("record_path/which");
  if (csv_out == nullptr) return null_arg("csv_out");
  return guarded([&] {
    *csv_out = dup_string(fcil::diagnose(record_path, fcil::diagnostic_from_string(which)));
  });
}

fcil_status fcil_sweep(const fcil_config* config, const char* axis, const char* const* values,
                       size_t value_count, char** csv_out) {
  if (config == nullptr || axis == nullptr) return null_arg("config/axis");
  if (values == nullptr && value_count > 0) return null_arg("values");
  if (csv_out == nullptr) return null_arg("csv_out");
  return guarded([&] {
    std::vector<std::string> vals;
    for (size_t i = 0; i < value_count; ++i) {
      if (values[i] == nullptr) fcil::fail(fcil::ErrorCode::kInvalidArgument, "sweep value is NULL");
      vals.emplace_back(values[i]);
    }
    *csv_out = dup_string(fcil::sweep(config->config, axis, vals));
  });
}

}  // extern "C"
