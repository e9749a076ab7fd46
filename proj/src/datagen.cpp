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

#include "fcil/datagen.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace fcil {

std::map<ClassId, std::size_t> ClientShard::class_counts() const {
  std::map<ClassId, std::size_t> counts;
  for (const auto& s : samples) ++counts[s.label];
  return counts;
}

std::vector<LabeledSample> synth_gaussian(std::size_t num_classes, std::size_t input_dim,
                                          std::size_t per_class, double center_scale,
                                          double noise_stddev, std::uint64_t seed) {
  require(num_classes >= 1 && input_dim >= 1 && per_class >= 1, ErrorCode::kInvalidArgument,
          "synth_gaussian: counts must be >= 1");
  require(noise_stddev >= 0.0, ErrorCode::kInvalidArgument, "synth_gaussian: negative noise");
  const RngStream root(seed);
  RngStream centers = root.derive("synth.centers");
  RngStream noise = root.derive("synth.noise");
  std::vector<LabeledSample> out;
  out.reserve(num_classes * per_class);
  for (std::size_t c = 0; c < num_classes; ++c) {
    Vector center(input_dim);
    for (double& v : center) v = centers.uniform(-center_scale, center_scale);
    for (std::size_t i = 0; i < per_class; ++i) {
      LabeledSample s{center, static_cast<ClassId>(c)};
      if (noise_stddev > 0.0) {
        for (double& v : s.features) v += noise.normal(0.0, noise_stddev);
      }
      out.push_back(std::move(s));
    }
  }
  return out;
}

TaskSchedule split_tasks(std::span<const ClassId> class_ids, std::size_t tasks,
                         std::uint64_t seed) {
  require(tasks >= 1, ErrorCode::kInvalidArgument, "split_tasks: need at least one task");
  require(!class_ids.empty() && class_ids.size() % tasks == 0, ErrorCode::kInvalidArgument,
          "split_tasks: " + std::to_string(class_ids.size()) +
              " classes cannot be split into " + std::to_string(tasks) + " equal tasks");
  std::set<ClassId> unique(class_ids.begin(), class_ids.end());
  require(unique.size() == class_ids.size(), ErrorCode::kInvalidArgument,
          "split_tasks: duplicate class ids");
  std::vector<ClassId> order(class_ids.begin(), class_ids.end());
  std::sort(order.begin(), order.end());
  RngStream rng = RngStream(seed).derive("tasks.order");
  rng.shuffle(order);
  const std::size_t per = order.size() / tasks;
  TaskSchedule schedule;
  for (std::size_t t = 0; t < tasks; ++t) {
    std::vector<ClassId> chunk(order.begin() + static_cast<std::ptrdiff_t>(t * per),
                               order.begin() + static_cast<std::ptrdiff_t>((t + 1) * per));
    std::sort(chunk.begin(), chunk.end());
    schedule.tasks.push_back(std::move(chunk));
  }
  return schedule;
}

namespace {

std::map<ClassId, std::vector<std::size_t>> indices_by_class(
    std::span<const LabeledSample> samples, std::span<const ClassId> classes) {
  std::map<ClassId, std::vector<std::size_t>> by_class;
  for (ClassId c : classes) by_class[c];
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto it = by_class.find(samples[i].label);
    require(it != by_class.end(), ErrorCode::kInvalidArgument,
            "sample label " + std::to_string(samples[i].label) + " is not a task class");
    it->second.push_back(i);
  }
  return by_class;
}

std::vector<ClientShard> empty_shards(std::size_t num_clients) {
  std::vector<ClientShard> shards(num_clients);
  for (std::size_t k = 0; k < num_clients; ++k) shards[k].client_id = static_cast<int>(k);
  return shards;
}

}  // namespace

std::vector<ClientShard> partition_quantity(std::span<const LabeledSample> task_samples,
                                            std::span<const ClassId> task_classes,
                                            std::size_t num_clients, std::size_t alpha,
                                            std::uint64_t seed) {
  require(num_clients >= 1, ErrorCode::kInvalidArgument, "partition: need at least one client");
  require(alpha >= 1, ErrorCode::kInvalidArgument, "partition_quantity: alpha must be >= 1");
  require(alpha <= task_classes.size(), ErrorCode::kInvalidArgument,
          "partition_quantity: alpha=" + std::to_string(alpha) + " exceeds the " +
              std::to_string(task_classes.size()) + " task classes");
  require(num_clients * alpha >= task_classes.size(), ErrorCode::kInvalidArgument,
          "partition_quantity: coverage impossible, K*alpha=" +
              std::to_string(num_clients * alpha) + " < " +
              std::to_string(task_classes.size()) + " task classes");

  std::vector<ClassId> classes(task_classes.begin(), task_classes.end());
  std::sort(classes.begin(), classes.end());
  auto by_class = indices_by_class(task_samples, classes);

  const RngStream root = RngStream(seed).derive("partition.quantity");
  RngStream assign_rng = root.derive("labels");
  std::vector<std::vector<ClassId>> labels(num_clients);
  bool covered = false;
  for (int attempt = 0; attempt < kQuantityRetries && !covered; ++attempt) {
    std::set<ClassId> held;
    for (auto& client_labels : labels) {
      std::vector<ClassId> pool = classes;
      // Partial Fisher-Yates: the first alpha entries are a uniform draw.
      for (std::size_t i = 0; i < alpha; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(assign_rng.uniform_index(pool.size() - i));
        std::swap(pool[i], pool[j]);
      }
      client_labels.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(alpha));
      std::sort(client_labels.begin(), client_labels.end());
      held.insert(client_labels.begin(), client_labels.end());
    }
    covered = held.size() == classes.size();
  }
  if (!covered) {
    // Constructive cover: deal a shuffled class list round-robin, then top
    // every client up to alpha distinct labels.
    RngStream cover_rng = root.derive("cover");
    std::vector<ClassId> order = classes;
    cover_rng.shuffle(order);
    std::vector<std::size_t> client_order(num_clients);
    for (std::size_t k = 0; k < num_clients; ++k) client_order[k] = k;
    cover_rng.shuffle(client_order);
    for (auto& l : labels) l.clear();
    for (std::size_t i = 0; i < order.size(); ++i) labels[client_order[i % num_clients]].push_back(order[i]);
    for (auto& client_labels : labels) {
      std::vector<ClassId> pool;
      for (ClassId c : classes) {
        if (std::find(client_labels.begin(), client_labels.end(), c) == client_labels.end()) pool.push_back(c);
      }
      cover_rng.shuffle(pool);
      for (std::size_t i = 0; client_labels.size() < alpha; ++i) client_labels.push_back(pool[i]);
      std::sort(client_labels.begin(), client_labels.end());
    }
  }

  auto shards = empty_shards(num_clients);
  RngStream deal_rng = root.derive("deal");
  for (ClassId c : classes) {
    std::vector<std::size_t> holders;
    for (std::size_t k = 0; k < num_clients; ++k) {
      if (std::binary_search(labels[k].begin(), labels[k].end(), c)) holders.push_back(k);
    }
    auto& idx = by_class[c];
    deal_rng.shuffle(idx);
    const std::size_t offset = static_cast<std::size_t>(deal_rng.uniform_index(holders.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) {
      shards[holders[(i + offset) % holders.size()]].samples.push_back(task_samples[idx[i]]);
    }
  }
  return shards;
}

std::vector<std::size_t> largest_remainder(std::span<const double> weights, std::size_t total) {
  std::vector<std::size_t> counts(weights.size(), 0);
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t j = 0; j < weights.size(); ++j) {
    const double exact = weights[j] * static_cast<double>(total);
    const double whole = std::floor(exact);
    counts[j] = static_cast<std::size_t>(whole);
    assigned += counts[j];
    remainders.emplace_back(exact - whole, j);
  }
  // Ties break toward the lower index.
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  while (assigned > total) {
    // Only reachable through rounding noise when weights sum slightly above 1.
    for (std::size_t j = weights.size(); j-- > 0 && assigned > total;) {
      if (counts[j] > 0) {
        --counts[j];
        --assigned;
      }
    }
  }
  for (std::size_t i = 0; assigned < total; i = (i + 1) % remainders.size()) {
    ++counts[remainders[i].second];
    ++assigned;
  }
  return counts;
}

std::vector<ClientShard> partition_dirichlet(std::span<const LabeledSample> task_samples,
                                             std::span<const ClassId> task_classes,
                                             std::size_t num_clients, double beta,
                                             std::uint64_t seed) {
  require(num_clients >= 1, ErrorCode::kInvalidArgument, "partition: need at least one client");
  require(beta > 0.0, ErrorCode::kInvalidArgument, "partition_dirichlet: beta must be > 0");
  std::vector<ClassId> classes(task_classes.begin(), task_classes.end());
  std::sort(classes.begin(), classes.end());
  auto by_class = indices_by_class(task_samples, classes);

  const RngStream root = RngStream(seed).derive("partition.dirichlet");
  RngStream prop_rng = root.derive("proportions");
  RngStream deal_rng = root.derive("deal");
  auto shards = empty_shards(num_clients);
  for (ClassId c : classes) {
    const Vector share = dirichlet_sample(beta, num_clients, prop_rng);
    auto& idx = by_class[c];
    const auto counts = largest_remainder(share, idx.size());
    deal_rng.shuffle(idx);
    std::size_t pos = 0;
    for (std::size_t k = 0; k < num_clients; ++k) {
      for (std::size_t i = 0; i < counts[k]; ++i) shards[k].samples.push_back(task_samples[idx[pos++]]);
    }
  }
  return shards;
}

std::vector<ClientShard> partition(std::span<const LabeledSample> task_samples,
                                   std::span<const ClassId> task_classes,
                                   const PartitionSpec& spec) {
  if (const auto* q = std::get_if<QuantityBased>(&spec.mode)) {
    return partition_quantity(task_samples, task_classes, spec.num_clients, q->alpha, spec.seed);
  }
  return partition_dirichlet(task_samples, task_classes, spec.num_clients,
                             std::get<DistributionBased>(spec.mode).beta, spec.seed);
}

TrainTestSplit holdout_split(std::span<const LabeledSample> samples, double test_fraction,
                             std::uint64_t seed) {
  require(test_fraction >= 0.0 && test_fraction < 1.0, ErrorCode::kInvalidArgument,
          "test fraction must lie in [0, 1)");
  std::map<ClassId, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < samples.size(); ++i) by_class[samples[i].label].push_back(i);
  RngStream rng = RngStream(seed).derive("holdout");
  TrainTestSplit split;
  for (auto& [c, idx] : by_class) {
    rng.shuffle(idx);
    const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(idx.size())));
    std::vector<std::size_t> test_idx(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
    std::vector<std::size_t> train_idx(idx.begin() + static_cast<std::ptrdiff_t>(n_test), idx.end());
    std::sort(test_idx.begin(), test_idx.end());
    std::sort(train_idx.begin(), train_idx.end());
    for (auto i : test_idx) split.test.push_back(samples[i]);
    for (auto i : train_idx) split.train.push_back(samples[i]);
  }
  return split;
}

std::vector<LabeledSample> filter_classes(std::span<const LabeledSample> samples,
                                          std::span<const ClassId> classes) {
  const std::set<ClassId> keep(classes.begin(), classes.end());
  std::vector<LabeledSample> out;
  for (const auto& s : samples) {
    if (keep.count(s.label)) out.push_back(s);
  }
  return out;
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_field(const std::string& field, std::size_t line_no, std::size_t column) {
  T value{};
  const char* first = field.data();
  const char* last = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || field.empty()) {
    fail(ErrorCode::kParse, "line " + std::to_string(line_no) + ": non-numeric field " +
                                std::to_string(column) + " '" + field + "'");
  }
  return value;
}

}  // namespace

std::vector<LabeledSample> load_feature_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot open feature CSV " + path.string());
  std::vector<LabeledSample> out;
  std::string line;
  std::size_t line_no = 0;
  std::size_t dim = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(trim(field));
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    if (fields.size() < 2) {
      fail(ErrorCode::kParse, "line " + std::to_string(line_no) + ": ragged row, expected a label and at least one feature");
    }
    LabeledSample s;
    s.label = parse_field<ClassId>(fields[0], line_no, 1);
    for (std::size_t i = 1; i < fields.size(); ++i) {
      const double v = parse_field<double>(fields[i], line_no, i + 1);
      if (!std::isfinite(v)) {
        fail(ErrorCode::kParse, "line " + std::to_string(line_no) + ": non-finite feature value");
      }
      s.features.push_back(v);
    }
    if (out.empty()) {
      dim = s.features.size();
    } else if (s.features.size() != dim) {
      fail(ErrorCode::kParse, "line " + std::to_string(line_no) + ": ragged row with " +
                                  std::to_string(s.features.size()) + " features, expected " +
                                  std::to_string(dim));
    }
    out.push_back(std::move(s));
  }
  if (out.empty()) fail(ErrorCode::kParse, "feature CSV " + path.string() + " is empty");
  return out;
}

void write_feature_csv(const std::filesystem::path& path, std::span<const LabeledSample> samples) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::kIo, "cannot write feature CSV " + path.string());
  char buf[64];
  for (const auto& s : samples) {
    out << s.label;
    for (double v : s.features) {
      const auto res = std::to_chars(buf, buf + sizeof buf, v);
      out << ',' << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf));
    }
    out << '\n';
  }
}

}  // namespace fcil
