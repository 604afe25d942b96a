// Copyright 2026 The dovkit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "dovkit/nn/classifier.hpp"

#include <json.hpp>

#include <filesystem>

namespace dovkit::nn {

struct Checkpoint {
  Classifier model;
  nlohmann::json train_config;
};

// "EDOVCK01", architecture id, manifest (u32 count; per entry name, u32 rank,
// u32 dims, u64 offset, u64 size), u64 parameter count, f32 parameters, then a
// JSON blob with input_shape, num_classes and train_config. Atomic write.
void save_checkpoint(const Classifier& model, const nlohmann::json& train_config, const std::filesystem::path& path);

// Rebuilds the network from the stored id and checks the stored manifest
// against it; any disagreement is a FormatError.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace dovkit::nn
