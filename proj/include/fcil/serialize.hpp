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

#include "json.hpp"

#include "fcil/lora.hpp"
#include "fcil/protomodel.hpp"

namespace fcil {

// JSON records; the layout is described in docs/formats.md. Doubles are
// written in shortest round-trip form, so load(save(x)) is bit-exact.
inline constexpr int kCheckpointVersion = 1;

nlohmann::json adapter_to_json(const LoraAdapter& adapter);
LoraAdapter adapter_from_json(const nlohmann::json& j);

nlohmann::json ledger_to_json(const LoraLedger& ledger);
LoraLedger ledger_from_json(const nlohmann::json& j);

nlohmann::json backbone_to_json(const FrozenBackbone& backbone);
FrozenBackbone backbone_from_json(const nlohmann::json& j);

nlohmann::json prototypes_to_json(const PrototypeSet& protos);
PrototypeSet prototypes_from_json(const nlohmann::json& j);

nlohmann::json checkpoint_to_json(const ModelState& model, std::size_t stage);
ModelState checkpoint_from_json(const nlohmann::json& j);

nlohmann::json read_json_file(const std::filesystem::path& path);
// Writes `text` to `path` atomically (temp file + rename).
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace fcil
