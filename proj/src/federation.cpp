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

#include "fcil/federation.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <set>
#include <thread>

namespace fcil {

std::string to_string(SoftmaxScope scope) {
  return scope == SoftmaxScope::kCurrentTask ? "current" : "seen";
}

SoftmaxScope softmax_scope_from_string(const std::string& text) {
  if (text == "current") return SoftmaxScope::kCurrentTask;
  if (text == "seen") return SoftmaxScope::kAllSeen;
  fail(ErrorCode::kInvalidArgument, "unknown softmax scope '" + text + "' (expected current or seen)");
}

std::vector<ClassId> local_class_subset(const ServerState& server) {
  return server.options.softmax_scope == SoftmaxScope::kCurrentTask ? server.current_classes
                                                                     : server.seen_classes;
}

namespace {

std::vector<ClassId> trainable_classes(const ModelState& model) {
  const auto& t = model.prototypes.trainable_set();
  return {t.begin(), t.end()};
}

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

}  // namespace

LocalTrainResult local_train(ClientState& client, const HyperParams& hp,
                             const TrainOptions& options, std::span<const ClassId> class_subset) {
  LocalTrainResult result;
  const auto& samples = client.shard.samples;
  if (samples.empty()) {
    result.skipped = true;
    return result;
  }
  ModelState& model = client.model;
  ClientOptimizer& opt = client.optimizer;
  opt.lora_a.resize(model.ledgers.size());
  opt.lora_b.resize(model.ledgers.size());

  std::vector<std::size_t> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<LabeledSample> batch;
  Gradients grads;

  for (std::size_t epoch = 0; epoch < hp.local_epochs; ++epoch) {
    client.rng.shuffle(order);
    LossBreakdown epoch_loss;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += hp.batch_size) {
      const std::size_t end = std::min(order.size(), start + hp.batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(samples[order[i]]);

      const LossBreakdown loss = loss_and_grads(batch, model, hp, class_subset, grads);
      epoch_loss.dce += loss.dce;
      epoch_loss.pl += loss.pl;
      epoch_loss.ort += loss.ort;
      epoch_loss.total += loss.total;
      ++batches;

      const std::uint64_t step = ++opt.steps;
      const double lr_lora = cosine_lr(hp.lr_lora, client.schedule_step, client.schedule_total);
      const double lr_proto = cosine_lr(hp.lr_prototypes, client.schedule_step, client.schedule_total);
      ++client.schedule_step;

      if (options.train_lora) {
        for (std::size_t li = 0; li < model.ledgers.size(); ++li) {
          LoraAdapter& active = model.ledgers[li].active();
          adam_step(active.a.data(), grads.adapters[li].a.data(), opt.lora_a[li], lr_lora, step);
          adam_step(active.b.data(), grads.adapters[li].b.data(), opt.lora_b[li], lr_lora, step);
        }
      }
      for (const auto& [c, g] : grads.prototypes) {
        adam_step(model.prototypes.at(c), g, opt.prototypes[c], lr_proto, step);
      }
    }
    const double n = static_cast<double>(batches);
    epoch_loss.dce /= n;
    epoch_loss.pl /= n;
    epoch_loss.ort /= n;
    epoch_loss.total /= n;
    result.epoch_losses.push_back(epoch_loss);
  }
  return result;
}

ClientUpload make_upload(const ClientState& client, std::span<const ClassId> classes) {
  ClientUpload up;
  up.client_id = client.client_id;
  for (const auto& ledger : client.model.ledgers) up.adapters.push_back(ledger.active());
  const std::size_t dim = client.model.prototypes.dim();
  for (ClassId c : classes) {
    up.prototypes[c] = client.model.prototypes.at(c);
    up.class_means[c] = Vector(dim, 0.0);
  }
  for (const auto& s : client.shard.samples) {
    const auto it = up.class_means.find(s.label);
    if (it == up.class_means.end()) continue;
    const Vector f = forward_features(client.model, s.features);
    axpy(1.0, f, it->second);
    ++up.class_counts[s.label];
  }
  for (auto& [c, mean] : up.class_means) {
    const auto it = up.class_counts.find(c);
    if (it == up.class_counts.end()) continue;
    for (double& v : mean) v /= static_cast<double>(it->second);
  }
  up.sample_count = client.shard.samples.size();
  return up;
}

LoraAggregate aggregate_lora(std::span<const ClientUpload> uploads) {
  require(!uploads.empty(), ErrorCode::kInvalidArgument, "aggregate_lora: no uploads");
  std::size_t total = 0;
  for (const auto& u : uploads) total += u.sample_count;
  require(total > 0, ErrorCode::kInvalidArgument, "aggregate_lora: every upload has zero samples");

  LoraAggregate agg;
  for (const auto& u : uploads) {
    agg.weights.push_back(static_cast<double>(u.sample_count) / static_cast<double>(total));
  }
  const std::size_t n_ledgers = uploads.front().adapters.size();
  for (std::size_t li = 0; li < n_ledgers; ++li) {
    const LoraAdapter& ref = uploads.front().adapters.at(li);
    LoraAdapter merged{ref.stage_id, Matrix(ref.a.rows(), ref.a.cols()), Matrix(ref.b.rows(), ref.b.cols())};
    for (std::size_t k = 0; k < uploads.size(); ++k) {
      require(uploads[k].adapters.size() == n_ledgers, ErrorCode::kShapeMismatch,
              "aggregate_lora: clients upload different numbers of adapters");
      const LoraAdapter& ad = uploads[k].adapters[li];
      if (agg.weights[k] == 0.0) continue;
      axpy(agg.weights[k], ad.a.data(), merged.a.data());
      axpy(agg.weights[k], ad.b.data(), merged.b.data());
    }
    agg.adapters.push_back(std::move(merged));
  }
  return agg;
}

ReweightResult prototype_reweight(std::span<const ClientUpload> uploads,
                                  std::span<const ClassId> classes, double eta) {
  require(!uploads.empty(), ErrorCode::kInvalidArgument, "prototype_reweight: no uploads");
  ReweightResult out;
  const std::size_t k_clients = uploads.size();
  for (ClassId c : classes) {
    std::vector<const Vector*> protos(k_clients);
    std::vector<const Vector*> means(k_clients);
    for (std::size_t k = 0; k < k_clients; ++k) {
      const auto p = uploads[k].prototypes.find(c);
      const auto m = uploads[k].class_means.find(c);
      require(p != uploads[k].prototypes.end() && m != uploads[k].class_means.end(),
              ErrorCode::kInvalidArgument,
              "client " + std::to_string(uploads[k].client_id) + " uploaded no entry for class " +
                  std::to_string(c));
      protos[k] = &p->second;
      means[k] = &m->second;
    }
    Vector inv(k_clients);
    for (std::size_t k = 0; k < k_clients; ++k) {
      double d = 0.0;
      for (std::size_t i = 0; i < k_clients; ++i) d += sq_dist(*protos[k], *means[i]);
      inv[k] = 1.0 / std::max(d, kReweightDistanceFloor);
    }
    const Vector weights = softmax_temp(minmax_normalize(inv), eta);
    Vector global(protos[0]->size(), 0.0);
    for (std::size_t k = 0; k < k_clients; ++k) axpy(weights[k], *protos[k], global);
    out.prototypes[c] = std::move(global);
    out.weights[c] = weights;
  }
  return out;
}

ReweightResult uniform_average(std::span<const ClientUpload> uploads,
                               std::span<const ClassId> classes) {
  require(!uploads.empty(), ErrorCode::kInvalidArgument, "uniform_average: no uploads");
  ReweightResult out;
  const double w = 1.0 / static_cast<double>(uploads.size());
  for (ClassId c : classes) {
    Vector global;
    for (const auto& u : uploads) {
      const auto p = u.prototypes.find(c);
      require(p != u.prototypes.end(), ErrorCode::kInvalidArgument,
              "client " + std::to_string(u.client_id) + " uploaded no prototype for class " +
                  std::to_string(c));
      if (global.empty()) global.assign(p->second.size(), 0.0);
      axpy(w, p->second, global);
    }
    out.prototypes[c] = std::move(global);
    out.weights[c] = Vector(uploads.size(), w);
  }
  return out;
}

void broadcast(const ServerState& server, ClientState& client) {
  client.model.backbone = server.global.backbone;
  client.model.ledgers = server.global.ledgers;
  client.model.prototypes = server.global.prototypes;
  client.model.merge_mode = server.global.merge_mode;
}

ServerState make_server(std::shared_ptr<const FrozenBackbone> backbone,
                        std::span<const AttachmentPoint> attachments, const HyperParams& hp,
                        const TrainOptions& options, MergeMode mode,
                        std::span<const ClassId> first_task, RngStream& rng) {
  hp.validate();
  require(!first_task.empty(), ErrorCode::kInvalidArgument, "first task has no classes");
  ServerState server;
  server.hp = hp;
  server.options = options;
  server.global = make_model(std::move(backbone), attachments, hp.rank, options.lora_init_stddev, mode, rng);
  server.current_classes.assign(first_task.begin(), first_task.end());
  std::sort(server.current_classes.begin(), server.current_classes.end());
  server.seen_classes = server.current_classes;
  const std::size_t dim = server.global.prototypes.dim();
  for (ClassId c : server.current_classes) {
    server.global.prototypes.add(c, gaussian_vector(dim, 0.0, options.proto_init_stddev, rng), true);
  }
  return server;
}

std::vector<ClientState> make_clients(const ServerState& server, std::vector<ClientShard> shards,
                                      const RngStream& stage_rng) {
  std::sort(shards.begin(), shards.end(),
            [](const ClientShard& a, const ClientShard& b) { return a.client_id < b.client_id; });
  std::vector<ClientState> clients;
  clients.reserve(shards.size());
  for (auto& shard : shards) {
    ClientState c;
    c.client_id = shard.client_id;
    c.rng = stage_rng.derive("client", static_cast<std::uint64_t>(shard.client_id));
    c.schedule_total = server.hp.local_epochs * server.hp.rounds *
                       ceil_div(shard.samples.size(), server.hp.batch_size);
    c.shard = std::move(shard);
    broadcast(server, c);
    clients.push_back(std::move(c));
  }
  return clients;
}

namespace {

// Prototypes of current classes the client holds start at its local class
// mean the first time it sees them.
void init_prototypes_on_first_contact(const ServerState& server, ClientState& client) {
  const auto counts = client.shard.class_counts();
  const std::size_t dim = client.model.prototypes.dim();
  std::map<ClassId, Vector> sums;
  for (const auto& s : client.shard.samples) {
    if (!std::binary_search(server.current_classes.begin(), server.current_classes.end(), s.label)) continue;
    auto [it, _] = sums.try_emplace(s.label, Vector(dim, 0.0));
    axpy(1.0, forward_features(client.model, s.features), it->second);
  }
  for (auto& [c, sum] : sums) {
    for (double& v : sum) v /= static_cast<double>(counts.at(c));
    client.model.prototypes.set(c, std::move(sum));
  }
}

template <typename Fn>
void for_each_client(std::size_t n, bool parallel, Fn&& fn) {
  if (!parallel || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const std::size_t workers =
      std::min<std::size_t>(n, std::max(2u, std::thread::hardware_concurrency()));
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

RoundReport run_round(ServerState& server, std::vector<ClientState>& clients, bool parallel_clients) {
  require(!clients.empty(), ErrorCode::kInvalidArgument, "run_round: no clients");
  std::sort(clients.begin(), clients.end(),
            [](const ClientState& a, const ClientState& b) { return a.client_id < b.client_id; });
  const auto subset = local_class_subset(server);
  const auto aggregated = trainable_classes(server.global);
  const bool first_round = server.round == 0;

  std::vector<LocalTrainResult> local(clients.size());
  std::vector<ClientUpload> uploads(clients.size());
  for_each_client(clients.size(), parallel_clients, [&](std::size_t i) {
    ClientState& client = clients[i];
    broadcast(server, client);
    if (first_round) init_prototypes_on_first_contact(server, client);
    local[i] = local_train(client, server.hp, server.options, subset);
    uploads[i] = make_upload(client, aggregated);
  });

  RoundReport report;
  report.stage = server.stage;
  report.round = server.round;
  for (std::size_t i = 0; i < clients.size(); ++i) {
    ClientRoundLoss loss{clients[i].client_id, local[i].skipped, {}};
    if (!local[i].epoch_losses.empty()) loss.loss = local[i].epoch_losses.back();
    report.client_losses.push_back(loss);
  }

  const LoraAggregate lora = aggregate_lora(uploads);
  report.aggregate_weights = lora.weights;
  if (server.options.train_lora) {
    for (std::size_t li = 0; li < server.global.ledgers.size(); ++li) {
      server.global.ledgers[li].active() = lora.adapters[li];
    }
  }

  ReweightResult reweighted = prototype_reweight(uploads, aggregated, server.hp.eta);
  ReweightResult uniform = uniform_average(uploads, aggregated);
  const ReweightResult& chosen = server.options.reweight ? reweighted : uniform;
  for (const auto& [c, proto] : chosen.prototypes) server.global.prototypes.set(c, proto);

  report.reweight_weights = std::move(reweighted.weights);
  report.reweight_prototypes = std::move(reweighted.prototypes);
  report.uniform_prototypes = std::move(uniform.prototypes);
  ++server.round;
  return report;
}

void stage_transition(ServerState& server, std::span<const ClassId> next_task_classes,
                      RngStream& rng) {
  require(!next_task_classes.empty(), ErrorCode::kInvalidArgument, "next task has no classes");
  std::vector<ClassId> next(next_task_classes.begin(), next_task_classes.end());
  std::sort(next.begin(), next.end());
  for (ClassId c : next) {
    require(!std::binary_search(server.seen_classes.begin(), server.seen_classes.end(), c),
            ErrorCode::kInvalidArgument,
            "class " + std::to_string(c) + " already belongs to an earlier task");
  }
  const int next_stage = static_cast<int>(server.stage) + 1;
  for (auto& ledger : server.global.ledgers) {
    ledger.advance(new_adapter(ledger.out_dim(), ledger.in_dim(), ledger.rank(), next_stage,
                               server.options.lora_init_stddev, rng));
  }
  if (!server.options.train_old_prototypes) server.global.prototypes.freeze_all();
  const std::size_t dim = server.global.prototypes.dim();
  for (ClassId c : next) {
    server.global.prototypes.add(c, gaussian_vector(dim, 0.0, server.options.proto_init_stddev, rng), true);
  }
  server.stage = static_cast<std::size_t>(next_stage);
  server.round = 0;
  server.current_classes = next;
  server.seen_classes.insert(server.seen_classes.end(), next.begin(), next.end());
  std::sort(server.seen_classes.begin(), server.seen_classes.end());
}

std::vector<ClientShard> stage_shards(const ExperimentSetup& setup, std::size_t t) {
  require(t >= 1 && t <= setup.schedule.task_count(), ErrorCode::kInvalidArgument,
          "stage " + std::to_string(t) + " out of range");
  const auto& task_classes = setup.schedule.tasks[t - 1];
  PartitionSpec spec = setup.partition;
  spec.seed = RngStream(setup.seed).derive("partition", t).seed();
  return partition(filter_classes(setup.train, task_classes), task_classes, spec);
}

ExperimentResult run_experiment(const ExperimentSetup& setup, const StageCallback& on_stage) {
  require(setup.backbone != nullptr, ErrorCode::kInvalidArgument, "experiment needs a backbone");
  require(setup.schedule.task_count() >= 1, ErrorCode::kInvalidArgument, "experiment needs tasks");
  const RngStream root(setup.seed);

  ExperimentResult result;
  RngStream init_rng = root.derive("init", 1);
  ServerState server = make_server(setup.backbone, setup.attachments, setup.hp, setup.options,
                                   setup.merge_mode, setup.schedule.tasks.front(), init_rng);

  std::vector<double> per_stage;
  for (std::size_t t = 1; t <= setup.schedule.task_count(); ++t) {
    const auto& task_classes = setup.schedule.tasks[t - 1];
    if (t > 1) {
      RngStream rng = root.derive("init", t);
      stage_transition(server, task_classes, rng);
    }
    auto shards = stage_shards(setup, t);

    StageResult stage;
    stage.stage = t;
    stage.classes = server.current_classes;
    for (const auto& shard : shards) {
      auto& row = stage.partition_counts[shard.client_id];
      for (ClassId c : task_classes) row[c] = 0;
      for (const auto& [c, n] : shard.class_counts()) row[c] = n;
    }
    for (ClassId c : stage.classes) {
      Vector share;
      double total = 0.0;
      for (const auto& [k, row] : stage.partition_counts) {
        share.push_back(static_cast<double>(row.at(c)));
        total += share.back();
      }
      if (total > 0.0) {
        for (double& s : share) s /= total;
      }
      stage.client_shares[c] = std::move(share);
    }

    auto clients = make_clients(server, std::move(shards), root.derive("clients", t));
    for (std::size_t r = 0; r < setup.hp.rounds; ++r) {
      stage.rounds.push_back(run_round(server, clients, setup.parallel_clients));
    }

    // Evaluate the global model over every seen class.
    const auto test = filter_classes(setup.test, server.seen_classes);
    std::vector<Vector> features;
    features.reserve(test.size());
    for (const auto& s : test) features.push_back(forward_features(server.global, s.features));
    stage.acc_all_seen =
        accuracy_from_features(features, test, server.global.prototypes, server.seen_classes);
    for (std::size_t j = 0; j < t; ++j) {
      const auto& cls = setup.schedule.tasks[j];
      std::vector<Vector> f_j;
      std::vector<LabeledSample> s_j;
      for (std::size_t i = 0; i < test.size(); ++i) {
        if (std::find(cls.begin(), cls.end(), test[i].label) != cls.end()) {
          f_j.push_back(features[i]);
          s_j.push_back(test[i]);
        }
      }
      stage.task_accuracies.push_back(
          accuracy_from_features(f_j, s_j, server.global.prototypes, server.seen_classes));
    }

    const RoundReport& last = stage.rounds.back();
    std::map<ClassId, std::vector<Vector>> by_class;
    for (std::size_t i = 0; i < test.size(); ++i) {
      if (last.reweight_prototypes.count(test[i].label)) by_class[test[i].label].push_back(features[i]);
    }
    std::map<ClassId, Vector> rw, un;
    for (ClassId c : stage.classes) {
      rw[c] = last.reweight_prototypes.at(c);
      un[c] = last.uniform_prototypes.at(c);
    }
    stage.proto_distances = proto_distance_report(rw, un, by_class);
    std::map<ClassId, Vector> weights;
    for (ClassId c : stage.classes) weights[c] = last.reweight_weights.at(c);
    stage.weight_alignment = weight_alignment_report(weights, stage.client_shares);

    per_stage.push_back(stage.acc_all_seen);
    result.accuracy.rows.push_back(stage.task_accuracies);
    result.stages.push_back(std::move(stage));
    result.final_accuracy = per_stage.back();
    result.avg_accuracy = avg_metric(per_stage);
    result.forgetting = forgetting_report(result.accuracy);
    if (on_stage) on_stage(result, server);
  }
  result.final_server = std::move(server);
  return result;
}

}  // namespace fcil
