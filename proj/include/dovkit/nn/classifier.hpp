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
#include "dovkit/nn/network.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string_view>
#include <vector>

namespace dovkit::nn {

// A network description plus its flat parameter vector.
struct Classifier {
  Network net;
  Eigen::VectorXf params;

  static Classifier create(std::string_view architecture_id, ImageShape input, int num_classes, std::uint64_t seed);

  const std::string& architecture_id() const { return net.architecture_id(); }
  int num_classes() const { return net.num_classes(); }
  ImageShape input_shape() const { return net.input_shape(); }
  void check() const;

  // K x B logits for CHW columns, evaluated in chunks.
  Eigen::MatrixXf logits(const Eigen::Ref<const Eigen::MatrixXf>& batch) const;
  std::vector<int> predict(const Eigen::Ref<const Eigen::MatrixXf>& batch) const;
};

double accuracy(const Classifier& model, const LabeledDataset& data);
std::vector<int> argmax_columns(const Eigen::MatrixXf& logits);
Eigen::VectorXd per_sample_losses(const Classifier& model, const LabeledDataset& data);
double mean_loss(const Classifier& model, const LabeledDataset& data);

// (1 - alpha) * a + alpha * b. Throws ShapeMismatchError when the
// architectures or manifests differ.
Classifier interpolate_params(const Classifier& a, const Classifier& b, double alpha);

}  // namespace dovkit::nn
