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

#include "fcil/serialize.hpp"

#include <fstream>
#include <sstream>

namespace fcil {

using nlohmann::json;

namespace {

Matrix matrix_from(const json& values, std::size_t rows, std::size_t cols, const char* what) {
  if (!values.is_array() || values.size() != rows * cols) {
    fail(ErrorCode::kParse, std::string(what) + ": expected " + std::to_string(rows * cols) + " entries");
  }
  return Matrix(rows, cols, values.get<std::vector<double>>());
}

template <typename T>
T field(const json& j, const char* key) {
  if (!j.contains(key)) fail(ErrorCode::kParse, std::string("record is missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(ErrorCode::kParse, std::string("field '") + key + "': " + e.what());
  }
}

}  // namespace

json adapter_to_json(const LoraAdapter& adapter) {
  return json{{"stage_id", adapter.stage_id},
              {"d", adapter.a.rows()},
              {"k", adapter.b.cols()},
              {"r", adapter.rank()},
              {"a", adapter.a.values()},
              {"b", adapter.b.values()}};
}

LoraAdapter adapter_from_json(const json& j) {
  LoraAdapter ad;
  ad.stage_id = field<int>(j, "stage_id");
  const auto d = field<std::size_t>(j, "d");
  const auto k = field<std::size_t>(j, "k");
  const auto r = field<std::size_t>(j, "r");
  ad.a = matrix_from(j.at("a"), d, r, "adapter factor a");
  ad.b = matrix_from(j.at("b"), r, k, "adapter factor b");
  return ad;
}

json ledger_to_json(const LoraLedger& ledger) {
  json stages = json::array();
  for (const LoraAdapter* s : ledger.stages()) stages.push_back(adapter_to_json(*s));
  return json{{"layer", ledger.attachment().layer},
              {"slot", ledger.attachment().slot},
              {"stages", std::move(stages)}};
}

LoraLedger ledger_from_json(const json& j) {
  AttachmentPoint ap{field<std::size_t>(j, "layer"), field<std::string>(j, "slot")};
  std::vector<LoraAdapter> stages;
  for (const auto& s : field<json>(j, "stages")) stages.push_back(adapter_from_json(s));
  return LoraLedger::from_stages(std::move(ap), std::move(stages));
}

json backbone_to_json(const FrozenBackbone& backbone) {
  json layers = json::array();
  for (const auto& l : backbone.layers()) {
    layers.push_back({{"rows", l.weight.rows()},
                      {"cols", l.weight.cols()},
                      {"weight", l.weight.values()},
                      {"bias", l.bias}});
  }
  return json{{"activation", to_string(backbone.activation())}, {"layers", std::move(layers)}};
}

FrozenBackbone backbone_from_json(const json& j) {
  std::vector<AffineLayer> layers;
  for (const auto& l : field<json>(j, "layers")) {
    const auto rows = field<std::size_t>(l, "rows");
    const auto cols = field<std::size_t>(l, "cols");
    layers.push_back({matrix_from(l.at("weight"), rows, cols, "backbone weight"),
                      field<std::vector<double>>(l, "bias")});
  }
  return FrozenBackbone(std::move(layers), activation_from_string(field<std::string>(j, "activation")));
}

json prototypes_to_json(const PrototypeSet& protos) {
  json entries = json::array();
  for (const auto& [c, v] : protos.entries()) {
    entries.push_back({{"class", c}, {"trainable", protos.trainable(c)}, {"values", v}});
  }
  return json{{"dim", protos.dim()}, {"entries", std::move(entries)}};
}

PrototypeSet prototypes_from_json(const json& j) {
  PrototypeSet protos(field<std::size_t>(j, "dim"));
  for (const auto& e : field<json>(j, "entries")) {
    protos.add(field<ClassId>(e, "class"), field<std::vector<double>>(e, "values"),
               field<bool>(e, "trainable"));
  }
  return protos;
}

json checkpoint_to_json(const ModelState& model, std::size_t stage) {
  json ledgers = json::array();
  for (const auto& l : model.ledgers) ledgers.push_back(ledger_to_json(l));
  return json{{"format", "fcil-checkpoint"},
              {"version", kCheckpointVersion},
              {"stage", stage},
              {"ledger_mode", to_string(model.merge_mode)},
              {"backbone", backbone_to_json(*model.backbone)},
              {"ledgers", std::move(ledgers)},
              {"prototypes", prototypes_to_json(model.prototypes)}};
}

ModelState checkpoint_from_json(const json& j) {
  if (field<std::string>(j, "format") != "fcil-checkpoint") {
    fail(ErrorCode::kParse, "not an fcil checkpoint");
  }
  if (field<int>(j, "version") != kCheckpointVersion) {
    fail(ErrorCode::kParse, "unsupported checkpoint version " + std::to_string(field<int>(j, "version")));
  }
  ModelState model;
  model.merge_mode = merge_mode_from_string(field<std::string>(j, "ledger_mode"));
  model.backbone = std::make_shared<const FrozenBackbone>(backbone_from_json(field<json>(j, "backbone")));
  for (const auto& l : field<json>(j, "ledgers")) model.ledgers.push_back(ledger_from_json(l));
  model.prototypes = prototypes_from_json(field<json>(j, "prototypes"));
  return model;
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::kParse, path.string() + ": " + e.what());
  }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::kIo, "cannot write " + tmp.string());
    out << text;
    if (!out) fail(ErrorCode::kIo, "short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace fcil
