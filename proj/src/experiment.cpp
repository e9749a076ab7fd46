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

#include "fcil/experiment.hpp"

#include <charconv>
#include <iostream>

#include "fcil/serialize.hpp"

namespace fcil {

using nlohmann::json;

namespace {

std::string fmt(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

json class_map(const std::map<ClassId, Vector>& m) {
  json out = json::array();
  for (const auto& [c, v] : m) out.push_back({{"class", c}, {"values", v}});
  return out;
}

json round_json(const RoundReport& r) {
  json losses = json::array();
  for (const auto& l : r.client_losses) {
    losses.push_back({{"client", l.client_id},
                      {"skipped", l.skipped},
                      {"dce", l.loss.dce},
                      {"pl", l.loss.pl},
                      {"ort", l.loss.ort},
                      {"total", l.loss.total}});
  }
  return json{{"stage", r.stage},
              {"round", r.round},
              {"client_losses", std::move(losses)},
              {"aggregate_weights", r.aggregate_weights},
              {"reweight_weights", class_map(r.reweight_weights)},
              {"reweight_prototypes", class_map(r.reweight_prototypes)},
              {"uniform_prototypes", class_map(r.uniform_prototypes)}};
}

json stage_json(const StageResult& s) {
  json counts = json::array();
  for (const auto& [k, row] : s.partition_counts) {
    json cells = json::array();
    for (const auto& [c, n] : row) cells.push_back({{"class", c}, {"count", n}});
    counts.push_back({{"client", k}, {"counts", std::move(cells)}});
  }
  json dist = json::array();
  for (const auto& d : s.proto_distances) {
    dist.push_back({{"class", d.class_id},
                    {"reweight_distance", d.reweight_distance},
                    {"uniform_distance", d.uniform_distance}});
  }
  json align = json::array();
  for (const auto& w : s.weight_alignment) {
    align.push_back({{"class", w.class_id},
                     {"spearman", w.correlation ? json(*w.correlation) : json(nullptr)}});
  }
  json rounds = json::array();
  for (const auto& r : s.rounds) rounds.push_back(round_json(r));
  return json{{"stage", s.stage},
              {"classes", s.classes},
              {"acc_all_seen", s.acc_all_seen},
              {"task_accuracies", s.task_accuracies},
              {"partition_counts", std::move(counts)},
              {"proto_distances", std::move(dist)},
              {"weight_alignment", std::move(align)},
              {"rounds", std::move(rounds)}};
}

json config_json(const ExperimentConfig& config) {
  json out = json::object();
  for (const auto& k : config_keys()) out[std::string(k.name)] = get_config_value(config, k.name);
  return out;
}

std::filesystem::path record_path_of(const std::filesystem::path& p) {
  return std::filesystem::is_directory(p) ? p / "record.json" : p;
}

}  // namespace

json record_json(const ExperimentConfig& config, const ExperimentResult& result,
                 std::string_view status, const std::vector<std::string>& checkpoints) {
  json stages = json::array();
  for (const auto& s : result.stages) stages.push_back(stage_json(s));
  return json{{"format", "fcil-experiment-record"},
              {"version", kRecordVersion},
              {"status", status},
              {"config", config_json(config)},
              {"config_text", config_to_text(config, false)},
              {"aggregation", config.disable_reweight ? "uniform" : "reweight"},
              {"stages", std::move(stages)},
              {"accuracy_matrix", result.accuracy.rows},
              {"final_accuracy", result.final_accuracy},
              {"avg_accuracy", result.avg_accuracy},
              {"forgetting", result.forgetting},
              {"checkpoints", checkpoints}};
}

std::string metrics_csv(const ExperimentResult& result, std::size_t tasks) {
  std::string out = "stage,seen_classes,acc_all_seen,avg_to_date";
  for (std::size_t j = 1; j <= tasks; ++j) out += ",acc_task_" + std::to_string(j);
  out += '\n';
  double sum = 0.0;
  for (std::size_t i = 0; i < result.stages.size(); ++i) {
    const auto& s = result.stages[i];
    sum += s.acc_all_seen;
    std::size_t seen = 0;
    for (std::size_t j = 0; j <= i; ++j) seen += result.stages[j].classes.size();
    out += std::to_string(s.stage) + ',' + std::to_string(seen) + ',' + fmt(s.acc_all_seen) + ',' +
           fmt(sum / static_cast<double>(i + 1));
    for (std::size_t j = 0; j < tasks; ++j) {
      out += ',';
      if (j < s.task_accuracies.size()) out += fmt(s.task_accuracies[j]);
    }
    out += '\n';
  }
  return out;
}

RunOutcome run_and_write(const ExperimentConfig& config) {
  const ExperimentSetup setup = build_setup(config);
  RunOutcome outcome;
  outcome.output_dir = resolved_output_dir(config);
  outcome.aggregation = config.disable_reweight ? "uniform" : "reweight";
  const auto& dir = outcome.output_dir;
  std::filesystem::create_directories(dir / "diagnostics");
  const std::size_t tasks = setup.schedule.task_count();

  std::vector<std::string> checkpoints;
  ExperimentResult partial;
  const auto on_stage = [&](const ExperimentResult& so_far, const ServerState& server) {
    partial.stages = so_far.stages;
    partial.accuracy = so_far.accuracy;
    partial.final_accuracy = so_far.final_accuracy;
    partial.avg_accuracy = so_far.avg_accuracy;
    partial.forgetting = so_far.forgetting;
    const std::size_t t = so_far.stages.size();
    if (config.write_checkpoints) {
      const std::string rel = "checkpoints/stage_" + std::to_string(t) + ".json";
      write_text_file(dir / rel, checkpoint_to_json(server.global, t).dump(1) + "\n");
      checkpoints.push_back(rel);
    }
    write_text_file(dir / "metrics.csv", metrics_csv(partial, tasks));
    const bool done = t == tasks;
    write_text_file(dir / "record.json",
                    record_json(config, partial, done ? "complete" : "running", checkpoints).dump(1) + "\n");
  };
  try {
    outcome.result = run_experiment(setup, on_stage);
  } catch (const std::exception& e) {
    json rec = record_json(config, partial, "failed", checkpoints);
    rec["error"] = e.what();
    write_text_file(dir / "record.json", rec.dump(1) + "\n");
    write_text_file(dir / "metrics.csv", metrics_csv(partial, tasks));
    throw;
  }
  return outcome;
}

json partition_report(const ExperimentConfig& config) {
  const ExperimentSetup setup = build_setup(config);
  json stages = json::array();
  for (std::size_t t = 1; t <= setup.schedule.task_count(); ++t) {
    const auto& classes = setup.schedule.tasks[t - 1];
    const auto shards = stage_shards(setup, t);
    json counts = json::array();
    for (const auto& shard : shards) {
      const auto cc = shard.class_counts();
      std::vector<std::size_t> row;
      for (ClassId c : classes) {
        const auto it = cc.find(c);
        row.push_back(it == cc.end() ? 0 : it->second);
      }
      counts.push_back(std::move(row));
    }
    stages.push_back({{"stage", t}, {"classes", classes}, {"counts", std::move(counts)}});
  }
  return json{{"format", "fcil-partition-report"},
              {"partition", config.partition},
              {"num_clients", config.num_clients},
              {"stages", std::move(stages)}};
}

DiagnosticKind diagnostic_from_string(std::string_view s) {
  if (s == "ortho") return DiagnosticKind::kOrtho;
  if (s == "prototypes") return DiagnosticKind::kPrototypes;
  if (s == "weights") return DiagnosticKind::kWeights;
  fail(ErrorCode::kInvalidArgument,
       "unknown diagnostic '" + std::string(s) + "' (expected ortho, prototypes or weights)");
}

std::string diagnose(const std::filesystem::path& record, DiagnosticKind which) {
  const auto path = record_path_of(record);
  const json rec = read_json_file(path);
  if (rec.value("format", "") != "fcil-experiment-record") {
    fail(ErrorCode::kParse, path.string() + " is not an experiment record");
  }
  const auto& stages = rec.at("stages");
  if (stages.empty()) fail(ErrorCode::kRuntime, "record has no finished stages");
  const json& last = stages.back();

  std::string out;
  std::string name;
  switch (which) {
    case DiagnosticKind::kOrtho: {
      name = "ortho";
      const auto& cps = rec.at("checkpoints");
      if (cps.empty()) {
        fail(ErrorCode::kRuntime, "record has no checkpoints; rerun with write_checkpoints = true");
      }
      const auto cp_path = path.parent_path() / cps.back().get<std::string>();
      if (!std::filesystem::exists(cp_path)) {
        fail(ErrorCode::kIo, "missing checkpoint " + cp_path.string());
      }
      const ModelState model = checkpoint_from_json(read_json_file(cp_path));
      if (model.ledgers.empty() || model.ledgers.front().stage_count() < 2) {
        fail(ErrorCode::kRuntime, "ortho diagnostic requires >= 2 stages");
      }
      out = "layer,stage_i,stage_j,abs_cosine\n";
      double sum = 0.0;
      std::size_t n = 0;
      for (const auto& ledger : model.ledgers) {
        for (const auto& p : cosine_pairs(ledger)) {
          out += std::to_string(ledger.attachment().layer) + ',' + std::to_string(p.stage_i) + ',' +
                 std::to_string(p.stage_j) + ',' + fmt(p.abs_cosine) + '\n';
          sum += p.abs_cosine;
          ++n;
        }
      }
      out += "mean,,," + fmt(sum / static_cast<double>(n)) + '\n';
      break;
    }
    case DiagnosticKind::kPrototypes: {
      name = "prototypes";
      out = "class,reweight_distance,uniform_distance\n";
      for (const auto& row : last.at("proto_distances")) {
        out += std::to_string(row.at("class").get<int>()) + ',' +
               fmt(row.at("reweight_distance").get<double>()) + ',' +
               fmt(row.at("uniform_distance").get<double>()) + '\n';
      }
      break;
    }
    case DiagnosticKind::kWeights: {
      name = "weights";
      out = "class,spearman\n";
      for (const auto& row : last.at("weight_alignment")) {
        const auto& s = row.at("spearman");
        out += std::to_string(row.at("class").get<int>()) + ',' +
               (s.is_null() ? std::string("degenerate") : fmt(s.get<double>())) + '\n';
      }
      break;
    }
  }
  write_text_file(path.parent_path() / "diagnostics" / (name + ".csv"), out);
  return out;
}

std::string sweep_field(std::string_view axis) {
  if (axis == "K" || axis == "num_clients") return "num_clients";
  if (axis == "alpha" || axis == "beta" || axis == "gamma" || axis == "eta") return std::string(axis);
  if (axis == "attachment_layer" || axis == "attach_layers") return "attach_layers";
  fail(ErrorCode::kConfig, "'" + std::string(axis) +
                               "' is not a sweepable axis (K, alpha, beta, gamma, eta, attachment_layer)");
}

std::string sweep(const ExperimentConfig& base, std::string_view axis,
                  const std::vector<std::string>& values) {
  const std::string field = sweep_field(axis);
  if (values.empty()) fail(ErrorCode::kConfig, "sweep needs at least one value");
  const auto root = std::filesystem::absolute(resolved_output_dir(base));
  std::string out = "axis,value,seed,final_accuracy,avg_accuracy\n";
  for (std::size_t i = 0; i < values.size(); ++i) {
    ExperimentConfig c = base;
    set_config_value(c, field, values[i]);
    c.seed = base.seed + i;
    c.output_dir = (root / ("sweep_" + field) / std::to_string(i)).string();
    validate_config(c);
    const RunOutcome run = run_and_write(c);
    out += field + ',' + values[i] + ',' + std::to_string(c.seed) + ',' +
           fmt(run.result.final_accuracy) + ',' + fmt(run.result.avg_accuracy) + '\n';
  }
  write_text_file(root / ("sweep_" + field + ".csv"), out);
  return out;
}

}  // namespace fcil
