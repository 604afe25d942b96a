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

#include "dovkit/data/dataset.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dovkit::dov {

enum class Method { kBadnets, kUbw, kAnw, kIsotope, kFingerprint };

std::string_view to_string(Method m);
// Throws ValidationError for an unknown name.
Method parse_method(std::string_view name);

// A patch composited where mask == 1, anchored at (row, col).
struct TriggerPattern {
  ImageShape patch_shape{3, 3, 3};
  Eigen::VectorXf patch;           // CHW, values in [0, 1]
  std::vector<std::uint8_t> mask;  // h * w, 0 or 1
  int row = 0;
  int col = 0;

  // Black/white checkerboard of side `size`, top-left pixel white.
  static TriggerPattern checkerboard(int channels, int size, int row, int col);
  // Bottom-right checkerboard for images of the given shape.
  static TriggerPattern corner_checkerboard(ImageShape image, int size = 3);

  // Throws PreconditionError when the patch does not fit.
  void check(ImageShape image) const;
  void apply(Eigen::Ref<Eigen::VectorXf> pixels, ImageShape image) const;
  bool operator==(const TriggerPattern&) const = default;
};

struct VerificationMaterials {
  Method method = Method::kBadnets;
  std::optional<TriggerPattern> trigger;
  std::optional<int> target_class;
  std::optional<double> hue_shift;
  std::optional<Image> key_image;
  std::optional<double> blend_ratio;
  std::vector<std::uint64_t> marked_ids;
  std::vector<std::uint64_t> train_probe_ids;
  std::vector<std::uint64_t> heldout_probe_ids;

  // Checks that exactly the fields the method needs are present and, when a
  // dataset is given, that marked ids belong to it.
  void validate(const LabeledDataset* data = nullptr) const;
};

// Tensors are stored as base64 of their 8-bit packed layout (patch, mask,
// key image), so values must lie on the 1/255 grid to round-trip exactly.
nlohmann::json to_json(const VerificationMaterials& m);
VerificationMaterials materials_from_json(const nlohmann::json& j);

struct MarkedDataset {
  LabeledDataset dataset;
  VerificationMaterials materials;
};

}  // namespace dovkit::dov
