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

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>

namespace dovkit::curation {

// Maps images and text into one shared unit-norm space of dimension dim().
// Implementations must be deterministic.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;

  virtual int dim() const = 0;
  virtual Eigen::VectorXf embed_image(const Image& image) const = 0;
  virtual Eigen::VectorXf embed_text(std::string_view text) const = 0;
  // Stable identifier folded into cache digests.
  virtual std::string id() const = 0;

  // d x n embeddings of every dataset column.
  virtual Eigen::MatrixXf embed_dataset(const LabeledDataset& data) const;
};

// Fixed seeded Gaussian projection of the centred pixels. Text is embedded as
// a unit vector seeded by a hash of the string, so it carries no semantics;
// this provider exists for property tests.
class ProjectionEmbeddingProvider : public EmbeddingProvider {
 public:
  ProjectionEmbeddingProvider(ImageShape shape, int dim, std::uint64_t seed);

  int dim() const override { return static_cast<int>(projection_.rows()); }
  Eigen::VectorXf embed_image(const Image& image) const override;
  Eigen::VectorXf embed_text(std::string_view text) const override;
  std::string id() const override;
  Eigen::MatrixXf embed_dataset(const LabeledDataset& data) const override;

 private:
  ImageShape shape_;
  std::uint64_t seed_;
  Eigen::MatrixXf projection_;
};

// Precomputed embeddings read from JSON:
//   {"dim": d, "images": {"<hex content hash>": [..]}, "texts": {"<text>": [..]}}
// Images are looked up by image_content_hash(). Vectors are renormalized on
// load. Unknown keys raise PreconditionError.
class FileEmbeddingProvider : public EmbeddingProvider {
 public:
  explicit FileEmbeddingProvider(const std::filesystem::path& path);

  int dim() const override { return dim_; }
  Eigen::VectorXf embed_image(const Image& image) const override;
  Eigen::VectorXf embed_text(std::string_view text) const override;
  std::string id() const override { return "file:" + digest_; }

 private:
  int dim_ = 0;
  std::string digest_;
  std::unordered_map<std::string, Eigen::VectorXf> images_;
  std::unordered_map<std::string, Eigen::VectorXf> texts_;
};

// FNV-1a over the 8-bit quantized pixels and the shape, as 16 hex digits.
std::string image_content_hash(const Image& image);

// v / |v|; throws PreconditionError for a zero or non-finite vector.
Eigen::VectorXf normalized(const Eigen::Ref<const Eigen::VectorXf>& v);

}  // namespace dovkit::curation
