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

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace dovkit {

struct ImageShape {
  int channels = 3;
  int height = 32;
  int width = 32;

  int plane() const { return height * width; }
  int size() const { return channels * height * width; }
  bool operator==(const ImageShape&) const = default;
};

// A single C x H x W image stored plane-major (CHW) with values in [0, 1].
struct Image {
  ImageShape shape;
  Eigen::VectorXf pixels;
  bool source_8bit = true;

  Image() = default;
  Image(ImageShape s, Eigen::VectorXf p, bool from_8bit = true)
      : shape(s), pixels(std::move(p)), source_8bit(from_8bit) {}

  float& at(int c, int y, int x) { return pixels[(c * shape.height + y) * shape.width + x]; }
  float at(int c, int y, int x) const { return pixels[(c * shape.height + y) * shape.width + x]; }
};

// Images with integer labels over K classes. Pixels live in one dense matrix,
// one column per sample (CHW order inside the column), so batches are plain
// column gathers.
struct LabeledDataset {
  ImageShape shape;
  Eigen::MatrixXf images;
  std::vector<int> labels;
  std::vector<std::string> class_names;
  std::vector<std::uint64_t> ids;
  // Optional relative path per sample (folder layout); empty otherwise.
  std::vector<std::string> sources;
  bool source_8bit = true;

  int size() const { return static_cast<int>(labels.size()); }
  int num_classes() const { return static_cast<int>(class_names.size()); }
  bool empty() const { return labels.empty(); }

  Image image(int row) const;
  // Rows in the given order; ids, labels and sources follow.
  LabeledDataset subset(std::span<const int> rows) const;
  // Throws ShapeMismatchError / PreconditionError when invariants fail.
  void validate() const;

  std::unordered_map<std::uint64_t, int> row_index() const;
  std::vector<int> rows_of(std::span<const std::uint64_t> wanted) const;
  std::vector<int> class_counts() const;
};

// Gathers the given dataset rows into a batch matrix (features x batch).
Eigen::MatrixXf gather_columns(const Eigen::MatrixXf& images, std::span<const int> rows);

std::vector<std::string> default_class_names(int k);

// 8-bit quantization used by the packed format: round(x * 255), clamped.
inline std::uint8_t quantize_u8(float v) {
  const float s = v * 255.0f + 0.5f;
  if (s <= 0.0f) return 0;
  if (s >= 255.0f) return 255;
  return static_cast<std::uint8_t>(s);
}

inline float dequantize_u8(std::uint8_t v) { return static_cast<float>(v) / 255.0f; }

}  // namespace dovkit
