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

#include "dovkit/data/dataset.hpp"

#include "dovkit/errors.hpp"

#include <string>
#include <unordered_set>

namespace dovkit {

Image LabeledDataset::image(int row) const {
  if (row < 0 || row >= size()) throw PreconditionError("image row out of range");
  return Image(shape, images.col(row), source_8bit);
}

LabeledDataset LabeledDataset::subset(std::span<const int> rows) const {
  LabeledDataset out;
  out.shape = shape;
  out.class_names = class_names;
  out.source_8bit = source_8bit;
  out.images = gather_columns(images, rows);
  out.labels.reserve(rows.size());
  out.ids.reserve(rows.size());
  for (int r : rows) {
    out.labels.push_back(labels[static_cast<std::size_t>(r)]);
    out.ids.push_back(ids[static_cast<std::size_t>(r)]);
    if (!sources.empty()) out.sources.push_back(sources[static_cast<std::size_t>(r)]);
  }
  return out;
}

void LabeledDataset::validate() const {
  const auto n = labels.size();
  if (ids.size() != n) throw PreconditionError("dataset ids and labels differ in length");
  if (images.cols() != static_cast<Eigen::Index>(n)) {
    throw ShapeMismatchError("dataset image count does not match label count");
  }
  if (n > 0 && images.rows() != shape.size()) {
    throw ShapeMismatchError("dataset image size does not match its shape");
  }
  if (!sources.empty() && sources.size() != n) {
    throw PreconditionError("dataset sources and labels differ in length");
  }
  const int k = num_classes();
  for (int y : labels) {
    if (y < 0 || y >= k) throw PreconditionError("label " + std::to_string(y) + " outside [0, K)");
  }
  std::unordered_set<std::uint64_t> seen;
  seen.reserve(n);
  for (auto id : ids) {
    if (!seen.insert(id).second) throw PreconditionError("duplicate sample id " + std::to_string(id));
  }
  if (n > 0 && (images.minCoeff() < 0.0f || images.maxCoeff() > 1.0f)) {
    throw PreconditionError("pixel values outside [0, 1]");
  }
}

std::unordered_map<std::uint64_t, int> LabeledDataset::row_index() const {
  std::unordered_map<std::uint64_t, int> index;
  index.reserve(ids.size());
  for (int r = 0; r < size(); ++r) index.emplace(ids[static_cast<std::size_t>(r)], r);
  return index;
}

std::vector<int> LabeledDataset::rows_of(std::span<const std::uint64_t> wanted) const {
  const auto index = row_index();
  std::vector<int> rows;
  rows.reserve(wanted.size());
  for (auto id : wanted) {
    auto it = index.find(id);
    if (it == index.end()) throw PreconditionError("unknown sample id " + std::to_string(id));
    rows.push_back(it->second);
  }
  return rows;
}

std::vector<int> LabeledDataset::class_counts() const {
  std::vector<int> counts(static_cast<std::size_t>(num_classes()), 0);
  for (int y : labels) ++counts[static_cast<std::size_t>(y)];
  return counts;
}

Eigen::MatrixXf gather_columns(const Eigen::MatrixXf& images, std::span<const int> rows) {
  Eigen::MatrixXf out(images.rows(), static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = images.col(rows[i]);
  return out;
}

std::vector<std::string> default_class_names(int k) {
  std::vector<std::string> names;
  for (int i = 0; i < k; ++i) names.push_back("class_" + std::to_string(i));
  return names;
}

}  // namespace dovkit
