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
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "fcil/datagen.hpp"
#include "fcil/evaluation.hpp"
#include "fcil/optim.hpp"
#include "fcil/protomodel.hpp"

namespace fcil {

// Class range of the distance softmax during local training.
enum class SoftmaxScope { kCurrentTask, kAllSeen };

std::string to_string(SoftmaxScope scope);
SoftmaxScope softmax_scope_from_string(const std::string& text);

struct TrainOptions {
  SoftmaxScope softmax_scope = SoftmaxScope::kCurrentTask;
  bool train_lora = true;             // false: backbone and adapters all frozen
  bool train_old_prototypes = false;  // earlier tasks' prototypes stay frozen by default
  bool reweight = true;               // false: uniform prototype averaging
  double lora_init_stddev = 0.02;
  double proto_init_stddev = 0.02;
};

struct ClientUpload {
  int client_id = 0;
  std::vector<LoraAdapter> adapters;  // active adapter per ledger
  std::map<ClassId, Vector> prototypes;
  std::map<ClassId, Vector> class_means;  // zero vector where the client has no samples
  std::size_t sample_count = 0;
  std::map<ClassId, std::size_t> class_counts;
};

struct ClientOptimizer {
  std::vector<AdamSlot> lora_a;
  std::vector<AdamSlot> lora_b;
  std::map<ClassId, AdamSlot> prototypes;
  std::uint64_t steps = 0;
};

struct ClientState {
  int client_id = 0;
  ClientShard shard;
  ModelState model;
  ClientOptimizer optimizer;
  RngStream rng;
  std::size_t schedule_step = 0;   // position on the stage's cosine schedule
  std::size_t schedule_total = 0;  // E * R * batches per epoch
};

struct ServerState {
  ModelState global;
  HyperParams hp;
  TrainOptions options;
  std::size_t stage = 1;
  std::size_t round = 0;  // rounds completed in the current stage
  std::vector<ClassId> current_classes;
  std::vector<ClassId> seen_classes;
};

struct LocalTrainResult {
  bool skipped = false;
  std::vector<LossBreakdown> epoch_losses;  // batch-mean per epoch
};

struct ClientRoundLoss {
  int client_id = 0;
  bool skipped = false;
  LossBreakdown loss;  // last epoch
};

struct RoundReport {
  std::size_t stage = 1;
  std::size_t round = 0;
  std::vector<ClientRoundLoss> client_losses;
  std::vector<double> aggregate_weights;           // sample-count weights, per client
  std::map<ClassId, Vector> reweight_weights;       // per class, per client
  std::map<ClassId, Vector> reweight_prototypes;
  std::map<ClassId, Vector> uniform_prototypes;
};

std::vector<ClassId> local_class_subset(const ServerState& server);

// Mini-batch Adam over the total loss for E epochs; only the active adapters
// and the trainable prototypes change.
LocalTrainResult local_train(ClientState& client, const HyperParams& hp,
                             const TrainOptions& options, std::span<const ClassId> class_subset);

ClientUpload make_upload(const ClientState& client, std::span<const ClassId> current_classes);

struct LoraAggregate {
  std::vector<LoraAdapter> adapters;
  std::vector<double> weights;
};
LoraAggregate aggregate_lora(std::span<const ClientUpload> uploads);

struct ReweightResult {
  std::map<ClassId, Vector> prototypes;
  std::map<ClassId, Vector> weights;
};

// Inverse summed distance to every client's class mean, min-max normalized,
// then softmax with temperature eta.
inline constexpr double kReweightDistanceFloor = 1e-12;
ReweightResult prototype_reweight(std::span<const ClientUpload> uploads,
                                  std::span<const ClassId> classes, double eta);
ReweightResult uniform_average(std::span<const ClientUpload> uploads,
                               std::span<const ClassId> classes);

// Copies the server's ledgers and prototypes into the client replica.
void broadcast(const ServerState& server, ClientState& client);

// Server init: stage-1 ledgers and Gaussian prototypes for the first task.
ServerState make_server(std::shared_ptr<const FrozenBackbone> backbone,
                        std::span<const AttachmentPoint> attachments, const HyperParams& hp,
                        const TrainOptions& options, MergeMode mode,
                        std::span<const ClassId> first_task, RngStream& rng);

// Fresh client replicas for a stage; rng streams derive from `stage_rng`.
std::vector<ClientState> make_clients(const ServerState& server, std::vector<ClientShard> shards,
                                      const RngStream& stage_rng);

RoundReport run_round(ServerState& server, std::vector<ClientState>& clients,
                      bool parallel_clients = false);

void stage_transition(ServerState& server, std::span<const ClassId> next_task_classes,
                      RngStream& rng);

struct StageResult {
  std::size_t stage = 1;
  std::vector<ClassId> classes;
  std::map<int, std::map<ClassId, std::size_t>> partition_counts;  // client -> class -> count
  std::vector<RoundReport> rounds;
  double acc_all_seen = 0.0;
  std::vector<double> task_accuracies;  // tasks 1..stage
  std::vector<ProtoDistanceRow> proto_distances;
  std::vector<WeightAlignmentRow> weight_alignment;
  std::map<ClassId, Vector> client_shares;  // per class, share of its samples per client
};

struct ExperimentSetup {
  std::shared_ptr<const FrozenBackbone> backbone;
  std::vector<AttachmentPoint> attachments;
  std::vector<LabeledSample> train;
  std::vector<LabeledSample> test;
  TaskSchedule schedule;
  PartitionSpec partition;  // seed is re-derived per stage
  HyperParams hp;
  TrainOptions options;
  MergeMode merge_mode = MergeMode::kSum;
  std::uint64_t seed = 0;
  bool parallel_clients = false;
};

struct ExperimentResult {
  std::vector<StageResult> stages;
  AccuracyMatrix accuracy;
  double final_accuracy = 0.0;
  double avg_accuracy = 0.0;
  std::vector<double> forgetting;
  ServerState final_server;
};

// Client shards of stage t (1-based), as used by run_experiment.
std::vector<ClientShard> stage_shards(const ExperimentSetup& setup, std::size_t t);

// Called after every finished stage with the results so far.
using StageCallback = std::function<void(const ExperimentResult& partial, const ServerState& server)>;

ExperimentResult run_experiment(const ExperimentSetup& setup, const StageCallback& on_stage = {});

}  // namespace fcil
