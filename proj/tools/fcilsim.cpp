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

#include <cstdio>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "fcil/fcil.h"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct ConfigDeleter {
  void operator()(fcil_config* c) const { fcil_config_free(c); }
};
using ConfigPtr = std::unique_ptr<fcil_config, ConfigDeleter>;

struct StringDeleter {
  void operator()(char* s) const { fcil_string_free(s); }
};
using CString = std::unique_ptr<char, StringDeleter>;

int report(fcil_status status) {
  std::cerr << "fcilsim: " << fcil_last_error() << '\n';
  return status == FCIL_CONFIG ? kExitConfig : kExitRuntime;
}

std::string flag_name(std::string key) {
  for (char& ch : key) {
    if (ch == '_') ch = '-';
  }
  return key;
}

// --<key> flags for every config field, applied on top of the config file.
struct Overrides {
  std::map<std::string, std::string> values;
  bool ablate_reweight = false;
  bool parallel_clients = false;

  void attach(CLI::App* app) {
    for (size_t i = 0; i < fcil_config_key_count(); ++i) {
      const std::string key = fcil_config_key_name(i);
      if (key == "parallel_clients") continue;
      app->add_option_function<std::string>(
             "--" + flag_name(key), [this, key](const std::string& v) { values[key] = v; },
             fcil_config_key_help(i))
          ->group("Config overrides");
    }
    app->add_flag("--ablate-reweight", ablate_reweight, "uniform prototype averaging");
    app->add_flag("--parallel-clients", parallel_clients, "train clients on worker threads");
  }

  fcil_status load(const std::string& path, ConfigPtr& out) const {
    fcil_config* raw = nullptr;
    if (fcil_status s = fcil_config_load(path.c_str(), &raw); s != FCIL_OK) return s;
    out.reset(raw);
    for (const auto& [k, v] : values) {
      if (fcil_status s = fcil_config_set(out.get(), k.c_str(), v.c_str()); s != FCIL_OK) return s;
    }
    if (ablate_reweight) fcil_config_set(out.get(), "disable_reweight", "true");
    if (parallel_clients) fcil_config_set(out.get(), "parallel_clients", "true");
    return fcil_config_validate(out.get());
  }
};

int cmd_init_config(const std::string& output) {
  fcil_config* raw = nullptr;
  if (fcil_status s = fcil_config_new_default(&raw); s != FCIL_OK) return report(s);
  ConfigPtr config(raw);
  char* text = nullptr;
  if (fcil_status s = fcil_config_to_text(config.get(), 1, &text); s != FCIL_OK) return report(s);
  CString owned(text);
  if (output.empty() || output == "-") {
    std::fputs(text, stdout);
    return 0;
  }
  std::FILE* f = std::fopen(output.c_str(), "wb");
  if (f == nullptr) {
    std::cerr << "fcilsim: cannot write " << output << '\n';
    return kExitRuntime;
  }
  std::fputs(text, f);
  std::fclose(f);
  return 0;
}

int cmd_run(const std::string& path, const Overrides& ov) {
  ConfigPtr config;
  if (fcil_status s = ov.load(path, config); s != FCIL_OK) return report(s);
  fcil_experiment* exp = nullptr;
  if (fcil_status s = fcil_run(config.get(), &exp); s != FCIL_OK) return report(s);
  std::printf("A_N = %.6f\nAvg = %.6f\n", fcil_experiment_final_accuracy(exp),
              fcil_experiment_avg_accuracy(exp));
  std::printf("aggregation: %s\noutput: %s\n", fcil_experiment_aggregation(exp),
              fcil_experiment_output_dir(exp));
  fcil_experiment_free(exp);
  return 0;
}

int cmd_partition_report(const std::string& path, const Overrides& ov, const std::string& output) {
  ConfigPtr config;
  if (fcil_status s = ov.load(path, config); s != FCIL_OK) return report(s);
  char* json = nullptr;
  if (fcil_status s = fcil_partition_report(config.get(), &json); s != FCIL_OK) return report(s);
  CString owned(json);
  if (output.empty() || output == "-") {
    std::fputs(json, stdout);
    return 0;
  }
  std::FILE* f = std::fopen(output.c_str(), "wb");
  if (f == nullptr) {
    std::cerr << "fcilsim: cannot write " << output << '\n';
    return kExitRuntime;
  }
  std::fputs(json, f);
  std::fclose(f);
  return 0;
}

int cmd_diagnose(const std::string& record, const std::string& which) {
  char* csv = nullptr;
  if (fcil_status s = fcil_diagnose(record.c_str(), which.c_str(), &csv); s != FCIL_OK) return report(s);
  CString owned(csv);
  std::fputs(csv, stdout);
  return 0;
}

int cmd_sweep(const std::string& path, const Overrides& ov, const std::string& axis,
              const std::vector<std::string>& values) {
  ConfigPtr config;
  if (fcil_status s = ov.load(path, config); s != FCIL_OK) return report(s);
  std::vector<const char*> ptrs;
  for (const auto& v : values) ptrs.push_back(v.c_str());
  char* csv = nullptr;
  if (fcil_status s = fcil_sweep(config.get(), axis.c_str(), ptrs.data(), ptrs.size(), &csv);
      s != FCIL_OK) {
    return report(s);
  }
  CString owned(csv);
  std::fputs(csv, stdout);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated class-incremental learning simulator"};
  app.set_version_flag("--version", fcil_version());
  app.require_subcommand(1);

  std::string output;
  auto* init = app.add_subcommand("init-config", "print a config file with every default");
  init->add_option("-o,--output", output, "write to file instead of stdout");

  std::string config_path;
  Overrides run_ov;
  auto* run = app.add_subcommand("run", "run one experiment");
  run->add_option("config", config_path, "config file")->required();
  run_ov.attach(run);

  Overrides part_ov;
  auto* part = app.add_subcommand("partition-report", "per-client class counts, no training");
  part->add_option("config", config_path, "config file")->required();
  part->add_option("-o,--output", output, "write to file instead of stdout");
  part_ov.attach(part);

  std::string record;
  std::string which;
  auto* diag = app.add_subcommand("diagnose", "diagnostics from a finished run");
  diag->add_option("record", record, "record.json or its run directory")->required();
  diag->add_option("--which", which, "ortho | prototypes | weights")
      ->required()
      ->check(CLI::IsMember({"ortho", "prototypes", "weights"}));

  std::string axis;
  std::vector<std::string> values;
  Overrides sweep_ov;
  auto* sw = app.add_subcommand("sweep", "one run per value of a config axis");
  sw->add_option("config", config_path, "base config file")->required();
  sw->add_option("--axis", axis, "K | alpha | beta | gamma | eta | attachment_layer")->required();
  sw->add_option("--values", values, "values to sweep")->required()->expected(1, -1);
  sweep_ov.attach(sw);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  if (*init) return cmd_init_config(output);
  if (*run) return cmd_run(config_path, run_ov);
  if (*part) return cmd_partition_report(config_path, part_ov, output);
  if (*diag) return cmd_diagnose(record, which);
  if (*sw) return cmd_sweep(config_path, sweep_ov, axis, values);
  return kExitConfig;
}
