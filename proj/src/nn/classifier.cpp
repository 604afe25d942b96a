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

#include "dovkit/nn/classifier.hpp"

#include "dovkit/errors.hpp"
#include "dovkit/nn/loss.hpp"

#include <algorithm>

namespace dovkit::nn {

namespace {
constexpr Eigen::Index kEvalChunk = 250;
}

Classifier Classifier::create(std::string_view architecture_id, ImageShape input, int num_classes, std::uint64_t seed) {
  Classifier c{Network::build(architecture_id, input, num_classes), {}};
  c.params = c.net.initialize(seed);
  return c;
}

void Classifier::check() const {
  if (params.size() != net.num_params()) throw ShapeMismatchError("parameter vector length does not match manifest");
}

Eigen::MatrixXf Classifier::logits(const Eigen::Ref<const Eigen::MatrixXf>& batch) const {
  check();
  Eigen::MatrixXf out(num_classes(), batch.cols());
  Workspace ws;
  for (Eigen::Index start = 0; start < batch.cols(); start += kEvalChunk) {
    const Eigen::Index n = std::min(kEvalChunk, batch.cols() - start);
    out.middleCols(start, n) = net.forward(params, batch.middleCols(start, n), ws);
  }
  return out;
}

std::vector<int> argmax_columns(const Eigen::MatrixXf& logits) {
  std::vector<int> out(static_cast<std::size_t>(logits.cols()));
  for (Eigen::Index b = 0; b < logits.cols(); ++b) {
    Eigen::Index k = 0;
    logits.col(b).maxCoeff(&k);
    out[static_cast<std::size_t>(b)] = static_cast<int>(k);
  }
  return out;
}

std::vector<int> Classifier::predict(const Eigen::Ref<const Eigen::MatrixXf>& batch) const {
  return argmax_columns(logits(batch));
}

double accuracy(const Classifier& model, const LabeledDataset& data) {
  if (data.empty()) return 0.0;
  const auto pred = model.predict(data.images);
  int hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == data.labels[i];
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

Eigen::VectorXd per_sample_losses(const Classifier& model, const LabeledDataset& data) {
  return per_sample_cross_entropy(model.logits(data.images), data.labels);
}

double mean_loss(const Classifier& model, const LabeledDataset& data) {
  if (data.empty()) return 0.0;
  return per_sample_losses(model, data).mean();
}

Classifier interpolate_params(const Classifier& a, const Classifier& b, double alpha) {
  if (a.architecture_id() != b.architecture_id() || a.net.manifest() != b.net.manifest() ||
      !(a.input_shape() == b.input_shape()) || a.num_classes() != b.num_classes()) {
    throw ShapeMismatchError("cannot interpolate classifiers with different manifests");
  }
  a.check();
  b.check();
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw PreconditionError("interpolation alpha must lie in [0, 1]");
  Classifier out = a;
  const float t = static_cast<float>(alpha);
  out.params = (1.0f - t) * a.params + t * b.params;
  return out;
}

}  // namespace dovkit::nn
