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

#include "fcil/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace fcil {

namespace {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view expected) {
  fail(ErrorCode::kConfig, "field '" + std::string(key) + "': cannot parse '" + std::string(value) +
                               "' as " + std::string(expected));
}

template <typename T>
T parse_number(std::string_view key, std::string_view value, std::string_view expected) {
  T out{};
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (value.empty() || ec != std::errc() || ptr != value.data() + value.size()) {
    bad_value(key, value, expected);
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "true") return true;
  if (value == "false") return false;
  bad_value(key, value, "a boolean (true or false)");
}

struct FieldDef {
  ConfigKey key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, std::string_view)> set;
};

template <typename Member>
FieldDef size_field(std::string_view name, std::string_view help, Member member) {
  return {{name, help, false},
          [member](const ExperimentConfig& c) { return std::to_string(c.*member); },
          [member, name](ExperimentConfig& c, std::string_view v) {
            c.*member = parse_number<std::size_t>(name, v, "a non-negative integer (count)");
          }};
}

template <typename Member>
FieldDef real_field(std::string_view name, std::string_view help, Member member) {
  return {{name, help, false},
          [member](const ExperimentConfig& c) { return format_double(c.*member); },
          [member, name](ExperimentConfig& c, std::string_view v) {
            const double x = parse_number<double>(name, v, "a real number");
            if (!std::isfinite(x)) bad_value(name, v, "a finite real number");
            c.*member = x;
          }};
}

template <typename Member>
FieldDef bool_field(std::string_view name, std::string_view help, Member member) {
  return {{name, help, false},
          [member](const ExperimentConfig& c) { return std::string(c.*member ? "true" : "false"); },
          [member, name](ExperimentConfig& c, std::string_view v) { c.*member = parse_bool(name, v); }};
}

template <typename Member>
FieldDef choice_field(std::string_view name, std::string_view help, Member member,
                      std::initializer_list<std::string_view> allowed) {
  std::vector<std::string_view> opts(allowed);
  return {{name, help, false},
          [member](const ExperimentConfig& c) { return c.*member; },
          [member, name, opts](ExperimentConfig& c, std::string_view v) {
            for (auto o : opts) {
              if (v == o) {
                c.*member = std::string(v);
                return;
              }
            }
            std::string list;
            for (auto o : opts) list += (list.empty() ? "" : ", ") + std::string(o);
            fail(ErrorCode::kConfig, "field '" + std::string(name) + "': '" + std::string(v) +
                                         "' is not one of " + list);
          }};
}

const std::vector<FieldDef>& fields() {
  using C = ExperimentConfig;
  static const std::vector<FieldDef> defs = [] {
    std::vector<FieldDef> f;
    f.push_back(choice_field("dataset", "data source: synthetic | csv", &C::dataset, {"synthetic", "csv"}));
    f.back().key.required = true;
    f.push_back({{"csv_path", "feature CSV (label,features...) when dataset = csv", false},
                 [](const C& c) { return c.csv_path; },
                 [](C& c, std::string_view v) { c.csv_path = std::string(v); }});
    f.push_back(size_field("num_classes", "synthetic classes (count)", &C::num_classes));
    f.push_back(size_field("input_dim", "synthetic input dimension (count)", &C::input_dim));
    f.push_back(size_field("per_class", "synthetic samples per class before the test hold-out (count)", &C::per_class));
    f.push_back(real_field("center_scale", "class centers uniform in [-s, s] per coordinate (input units)", &C::center_scale));
    f.push_back(real_field("noise_stddev", "per-coordinate Gaussian noise around the center (input units)", &C::noise_stddev));
    f.push_back(real_field("test_fraction", "held-out share of every class (fraction in [0,1))", &C::test_fraction));
    f.push_back(size_field("feature_dim", "backbone output / prototype dimension (count)", &C::feature_dim));
    f.push_back(size_field("depth", "affine layers in the frozen backbone (count)", &C::depth));
    f.push_back(choice_field("activation", "nonlinearity between layers: tanh | identity", &C::activation, {"tanh", "identity"}));
    f.push_back(real_field("backbone_gain", "backbone weight scale; stddev = gain / sqrt(fan_in)", &C::backbone_gain));
    f.push_back({{"attach_layers", "comma-separated layer indices carrying adapters (0 = first layer)", false},
                 [](const C& c) {
                   std::string s;
                   for (auto l : c.attach_layers) s += (s.empty() ? "" : ",") + std::to_string(l);
                   return s;
                 },
                 [](C& c, std::string_view v) {
                   std::vector<std::size_t> out;
                   std::stringstream ss{std::string(v)};
                   std::string item;
                   while (std::getline(ss, item, ',')) {
                     out.push_back(parse_number<std::size_t>("attach_layers", trim(item), "a list of layer indices"));
                   }
                   c.attach_layers = std::move(out);
                 }});
    f.push_back(size_field("tasks", "incremental stages T (count)", &C::tasks));
    f.push_back(size_field("num_clients", "clients K (count)", &C::num_clients));
    f.push_back(size_field("rounds", "communication rounds R per stage (count)", &C::rounds));
    f.push_back(size_field("local_epochs", "local epochs E per round (count)", &C::local_epochs));
    f.push_back(size_field("batch_size", "mini-batch size (samples)", &C::batch_size));
    f.push_back(choice_field("partition", "label skew: quantity (alpha) | dirichlet (beta)", &C::partition, {"quantity", "dirichlet"}));
    f.push_back(size_field("alpha", "labels per client for quantity partitioning (count)", &C::alpha));
    f.push_back(real_field("beta", "Dirichlet concentration for dirichlet partitioning (> 0)", &C::beta));
    f.push_back(real_field("delta", "distance softmax temperature (> 0)", &C::delta));
    f.push_back(real_field("lambda", "prototype pull-loss weight (>= 0)", &C::lambda));
    f.push_back(real_field("gamma", "orthogonality weight (>= 0)", &C::gamma));
    f.push_back(real_field("eta", "re-weight softmax temperature (> 0)", &C::eta));
    f.push_back(size_field("rank", "adapter rank r (count)", &C::rank));
    f.push_back(real_field("lr_prototypes", "Adam learning rate for prototypes (per step)", &C::lr_prototypes));
    f.push_back(real_field("lr_lora", "Adam learning rate for adapters (per step)", &C::lr_lora));
    f.push_back(real_field("lora_init_stddev", "stddev of fresh adapter A factors", &C::lora_init_stddev));
    f.push_back(real_field("proto_init_stddev", "stddev of server-side prototype init", &C::proto_init_stddev));
    f.push_back(choice_field("ledger_mode", "stage merge: sum | concat | active_only", &C::ledger_mode, {"sum", "concat", "active_only"}));
    f.push_back(bool_field("disable_reweight", "aggregate prototypes by uniform averaging", &C::disable_reweight));
    f.push_back(bool_field("freeze_all", "train prototypes only, adapters stay at init", &C::freeze_all));
    f.push_back({{"classify_by", "classifier: prototypes (the only supported value)", false},
                 [](const C& c) { return c.classify_by; },
                 [](C& c, std::string_view v) { c.classify_by = std::string(v); }});
    f.push_back(choice_field("softmax_scope", "local softmax over: current task | seen classes", &C::softmax_scope, {"current", "seen"}));
    f.push_back(bool_field("train_old_prototypes", "keep earlier tasks' prototypes trainable", &C::train_old_prototypes));
    f.push_back({{"seed", "root seed for every random stream (unsigned 64-bit)", true},
                 [](const C& c) { return std::to_string(c.seed); },
                 [](C& c, std::string_view v) { c.seed = parse_number<std::uint64_t>("seed", v, "an unsigned integer"); }});
    f.push_back({{"output_dir", "directory for record.json, metrics.csv, checkpoints/ (path)", true},
                 [](const C& c) { return c.output_dir; },
                 [](C& c, std::string_view v) { c.output_dir = std::string(v); }});
    f.push_back(bool_field("parallel_clients", "train clients on worker threads", &C::parallel_clients));
    f.push_back(bool_field("write_checkpoints", "write checkpoints/stage_<t>.json", &C::write_checkpoints));
    return f;
  }();
  return defs;
}

const FieldDef& find_field(std::string_view key) {
  for (const auto& f : fields()) {
    if (f.key.name == key) return f;
  }
  fail(ErrorCode::kConfig, "unknown config field '" + std::string(key) + "'");
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> out;
    for (const auto& f : fields()) out.push_back(f.key);
    return out;
  }();
  return keys;
}

void set_config_value(ExperimentConfig& config, std::string_view key, std::string_view value) {
  find_field(key).set(config, trim(value));
}

std::string get_config_value(const ExperimentConfig& config, std::string_view key) {
  return find_field(key).get(config);
}

ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig config;
  std::set<std::string> seen;
  std::stringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      fail(ErrorCode::kConfig, "line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    if (!seen.insert(key).second) {
      fail(ErrorCode::kConfig, "line " + std::to_string(line_no) + ": duplicate field '" + key + "'");
    }
    set_config_value(config, key, value);
  }
  for (const auto& k : config_keys()) {
    if (k.required && !seen.count(std::string(k.name))) {
      fail(ErrorCode::kConfig, "missing required field '" + std::string(k.name) + "'");
    }
  }
  return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kConfig, "cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_to_text(const ExperimentConfig& config, bool with_comments) {
  std::string out;
  for (const auto& f : fields()) {
    if (with_comments) {
      out += "# " + std::string(f.key.help);
      if (f.key.required) out += " [required]";
      out += '\n';
    }
    out += std::string(f.key.name) + " = " + f.get(config) + '\n';
  }
  return out;
}

void validate_config(const ExperimentConfig& c) {
  const auto bad = [](const std::string& msg) { fail(ErrorCode::kConfig, msg); };
  if (c.classify_by != "prototypes") {
    bad("field 'classify_by': only 'prototypes' is supported; a cross-entropy head is outside this simulator");
  }
  if (c.dataset == "csv" && c.csv_path.empty()) bad("field 'csv_path': required when dataset = csv");
  if (c.dataset == "synthetic") {
    if (c.num_classes < 1) bad("field 'num_classes': must be >= 1");
    if (c.input_dim < 1) bad("field 'input_dim': must be >= 1");
    if (c.per_class < 1) bad("field 'per_class': must be >= 1");
    if (c.noise_stddev < 0.0) bad("field 'noise_stddev': must be >= 0");
    if (c.tasks < 1 || c.num_classes % c.tasks != 0) {
      bad("field 'tasks': " + std::to_string(c.tasks) + " does not divide num_classes = " +
          std::to_string(c.num_classes));
    }
  }
  if (!(c.test_fraction > 0.0 && c.test_fraction < 1.0)) bad("field 'test_fraction': must lie in (0, 1)");
  if (c.feature_dim < 1) bad("field 'feature_dim': must be >= 1");
  if (c.depth < 1) bad("field 'depth': must be >= 1");
  if (c.backbone_gain < 0.0) bad("field 'backbone_gain': must be >= 0");
  if (c.attach_layers.empty()) bad("field 'attach_layers': need at least one layer");
  for (auto l : c.attach_layers) {
    if (l >= c.depth) {
      bad("field 'attach_layers': layer " + std::to_string(l) + " does not exist (depth = " +
          std::to_string(c.depth) + ")");
    }
  }
  if (std::set<std::size_t>(c.attach_layers.begin(), c.attach_layers.end()).size() != c.attach_layers.size()) {
    bad("field 'attach_layers': duplicate layer");
  }
  if (c.num_clients < 1) bad("field 'num_clients': must be >= 1");
  if (c.rounds < 1) bad("field 'rounds': must be >= 1");
  if (c.local_epochs < 1) bad("field 'local_epochs': must be >= 1");
  if (c.batch_size < 1) bad("field 'batch_size': must be >= 1");
  if (c.partition == "quantity") {
    if (c.alpha < 1) bad("field 'alpha': must be >= 1");
    if (c.dataset == "synthetic") {
      const std::size_t per_task = c.num_classes / c.tasks;
      if (c.alpha > per_task) {
        bad("field 'alpha': " + std::to_string(c.alpha) + " exceeds the " + std::to_string(per_task) +
            " classes per task");
      }
      if (c.alpha * c.num_clients < per_task) {
        bad("field 'alpha': num_clients * alpha < classes per task, coverage impossible");
      }
    }
  } else if (!(c.beta > 0.0)) {
    bad("field 'beta': must be > 0");
  }
  if (!(c.delta > 0.0)) bad("field 'delta': must be > 0");
  if (c.lambda < 0.0) bad("field 'lambda': must be >= 0");
  if (c.gamma < 0.0) bad("field 'gamma': must be >= 0");
  if (!(c.eta > 0.0)) bad("field 'eta': must be > 0");
  if (c.rank < 1) bad("field 'rank': must be >= 1");
  if (c.lr_prototypes < 0.0) bad("field 'lr_prototypes': must be >= 0");
  if (c.lr_lora < 0.0) bad("field 'lr_lora': must be >= 0");
  if (c.lora_init_stddev < 0.0) bad("field 'lora_init_stddev': must be >= 0");
  if (c.proto_init_stddev < 0.0) bad("field 'proto_init_stddev': must be >= 0");
  if (c.output_dir.empty()) bad("field 'output_dir': must not be empty");
}

std::filesystem::path resolved_output_dir(const ExperimentConfig& config) {
  std::filesystem::path out(config.output_dir);
  if (const char* root = std::getenv("FCIL_OUTPUT_ROOT"); root != nullptr && *root != '\0' && out.is_relative()) {
    return std::filesystem::path(root) / out;
  }
  return out;
}

ExperimentSetup build_setup(const ExperimentConfig& c) {
  validate_config(c);
  const RngStream root(c.seed);
  ExperimentSetup setup;
  setup.seed = c.seed;

  std::vector<LabeledSample> samples;
  if (c.dataset == "csv") {
    samples = load_feature_csv(c.csv_path);
  } else {
    samples = synth_gaussian(c.num_classes, c.input_dim, c.per_class, c.center_scale,
                             c.noise_stddev, root.derive("data").seed());
  }
  std::set<ClassId> class_set;
  for (const auto& s : samples) class_set.insert(s.label);
  const std::vector<ClassId> classes(class_set.begin(), class_set.end());
  if (classes.size() % c.tasks != 0) {
    fail(ErrorCode::kConfig, "field 'tasks': " + std::to_string(c.tasks) + " does not divide the " +
                                 std::to_string(classes.size()) + " dataset classes");
  }
  if (c.partition == "quantity") {
    const std::size_t per_task = classes.size() / c.tasks;
    if (c.alpha > per_task || c.alpha * c.num_clients < per_task) {
      fail(ErrorCode::kConfig, "field 'alpha': incompatible with " + std::to_string(per_task) +
                                   " classes per task and " + std::to_string(c.num_clients) + " clients");
    }
  }
  auto split = holdout_split(samples, c.test_fraction, root.derive("holdout").seed());
  setup.train = std::move(split.train);
  setup.test = std::move(split.test);
  setup.schedule = split_tasks(classes, c.tasks, root.derive("tasks").seed());

  const std::size_t input_dim = samples.front().features.size();
  std::vector<std::size_t> dims{input_dim};
  for (std::size_t l = 0; l < c.depth; ++l) dims.push_back(c.feature_dim);
  RngStream backbone_rng = root.derive("backbone");
  setup.backbone = std::make_shared<const FrozenBackbone>(
      FrozenBackbone::random(dims, activation_from_string(c.activation), c.backbone_gain, backbone_rng));
  for (auto l : c.attach_layers) setup.attachments.push_back({l, "weight"});
  const std::size_t max_rank = std::min(input_dim, c.feature_dim);
  if (c.rank > max_rank) {
    fail(ErrorCode::kConfig, "field 'rank': " + std::to_string(c.rank) + " exceeds min(d, k) = " +
                                 std::to_string(max_rank));
  }

  setup.partition.num_clients = c.num_clients;
  if (c.partition == "quantity") {
    setup.partition.mode = QuantityBased{c.alpha};
  } else {
    setup.partition.mode = DistributionBased{c.beta};
  }

  setup.hp.delta = c.delta;
  setup.hp.lambda = c.lambda;
  setup.hp.gamma = c.gamma;
  setup.hp.eta = c.eta;
  setup.hp.rank = c.rank;
  setup.hp.lr_prototypes = c.lr_prototypes;
  setup.hp.lr_lora = c.lr_lora;
  setup.hp.local_epochs = c.local_epochs;
  setup.hp.rounds = c.rounds;
  setup.hp.batch_size = c.batch_size;

  setup.options.softmax_scope = softmax_scope_from_string(c.softmax_scope);
  setup.options.train_lora = !c.freeze_all;
  setup.options.train_old_prototypes = c.train_old_prototypes;
  setup.options.reweight = !c.disable_reweight;
  setup.options.lora_init_stddev = c.lora_init_stddev;
  setup.options.proto_init_stddev = c.proto_init_stddev;
  setup.merge_mode = merge_mode_from_string(c.ledger_mode);
  setup.parallel_clients = c.parallel_clients;
  return setup;
}

}  // namespace fcil
