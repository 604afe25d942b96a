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

#include "dovkit/curation/embedding.hpp"
#include "dovkit/errors.hpp"
#include "dovkit/data/dataset.hpp"
#include "dovkit/nn/classifier.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace dovkit::curation {

inline constexpr int kUnassigned = -1;
inline constexpr std::uint16_t kUnassignedTag = 0xFFFF;

// Descriptions per class, in the dataset's class order.
struct DescriptionSet {
  std::vector<std::string> class_names;
  std::vector<std::vector<std::string>> descriptions;
};

// Reads {"class_name": ["...", ...], ...} and orders it by `class_names`.
// Every class needs at least one non-empty description.
DescriptionSet descriptions_from_json(const nlohmann::json& j, const std::vector<std::string>& class_names);
DescriptionSet load_descriptions(const std::filesystem::path& path, const std::vector<std::string>& class_names);

struct ClassPrototypes {
  Eigen::MatrixXf mean;  // d x K, plain mean of the description embeddings
  Eigen::MatrixXf unit;  // d x K, renormalized
};

ClassPrototypes class_prototypes(const EmbeddingProvider& provider, const DescriptionSet& descriptions);

template <typename A, typename B>
double cosine_similarity(const Eigen::MatrixBase<A>& u, const Eigen::MatrixBase<B>& v) {
  const double nu = u.template cast<double>().norm();
  const double nv = v.template cast<double>().norm();
  if (!(nu > 0.0) || !(nv > 0.0)) throw PreconditionError("cosine similarity of a zero vector");
  return u.template cast<double>().dot(v.template cast<double>()) / (nu * nv);
}

// Per-column argmax of prototype_mean^T e; ties go to the lowest class index.
std::vector<int> assign_embeddings(const Eigen::MatrixXf& embeddings, const ClassPrototypes& prototypes);

struct GalleryBins {
  std::vector<int> assignment;          // per gallery row
  std::vector<std::vector<int>> rows;   // per class, ascending rows
};
GalleryBins bins_from_assignment(std::span<const int> assignment, int num_classes);
GalleryBins assign_gallery(const EmbeddingProvider& provider, const LabeledDataset& gallery,
                           const ClassPrototypes& prototypes);

struct DistributionDigest {
  Eigen::MatrixXf centroids;  // d x K
};

// Per-class mean of the image embeddings of `data` grouped by its labels.
DistributionDigest compute_digests(const EmbeddingProvider& provider, const LabeledDataset& data);
DistributionDigest digests_from_embeddings(const Eigen::MatrixXf& embeddings, std::span<const int> labels,
                                           int num_classes);

struct FeatureBank {
  std::vector<std::uint64_t> ids;
  std::vector<int> classes;    // kUnassigned when not binned
  Eigen::MatrixXf embeddings;  // d x n, unit columns

  int dim() const { return static_cast<int>(embeddings.rows()); }
  int size() const { return static_cast<int>(ids.size()); }
};

// "EDOVFB01", u32 n, u32 d, then per entry u64 id, u16 class (0xFFFF when
// unassigned), d little-endian f32. Atomic write.
void save_feature_bank(const FeatureBank& bank, const std::filesystem::path& path);
FeatureBank load_feature_bank(const std::filesystem::path& path);

// Embeds every gallery image (assigning bins when prototypes are given) and
// persists the bank. When `path` already holds a bank for the same ids it is
// loaded instead; a stored dimension that disagrees with the provider is a
// FormatError. `reused` reports which branch ran.
FeatureBank build_feature_bank(const EmbeddingProvider& provider, const LabeledDataset& gallery,
                               const std::filesystem::path& path, const ClassPrototypes* prototypes = nullptr,
                               bool* reused = nullptr);

// JSON lines of {"id": .., "relative_path": ..}.
void write_gallery_manifest(const LabeledDataset& gallery, const std::filesystem::path& path);

struct TransferSet {
  std::vector<std::vector<std::uint64_t>> ids;  // per class, in selection order
  std::vector<std::vector<double>> similarity;  // cosine to the class digest, aligned with ids
  std::vector<int> quotas;
  std::vector<std::string> warnings;  // one per short class

  int size() const;
  nlohmann::json to_json() const;
  static TransferSet from_json(const nlohmann::json& j);
};

// Within each bin, rank by cosine to the class digest, keep candidates the
// teacher also predicts as that class, stop at the quota. No backfill.
TransferSet curate_transfer_set(const FeatureBank& bank, const DistributionDigest& digest,
                                const nn::Classifier& teacher, const LabeledDataset& gallery,
                                std::span<const int> quotas);

// Gallery rows of the transfer set labelled with their class, in class order.
LabeledDataset materialize_transfer_set(const TransferSet& transfer, const LabeledDataset& gallery,
                                        const std::vector<std::string>& class_names);

}  // namespace dovkit::curation
