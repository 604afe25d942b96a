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
#include "dovkit/nn/classifier.hpp"
#include "dovkit/random.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <cstdint>
#include <functional>
#include <span>
#include <string>

namespace dovkit::nn {

struct TrainConfig {
  std::string architecture = "resnet-mini";
  int epochs = 30;
  int batch_size = 64;
  double learning_rate = 0.05;
  double weight_decay = 5e-4;
  double momentum = 0.9;
  std::uint64_t seed = 0;
  bool mixup_enabled = false;
  double mixup_alpha = 1.0;
  // Global gradient-norm cap per step; 0 disables it.
  double grad_clip = 10.0;

  // Throws PreconditionError on non-positive hyperparameters.
  void validate() const;
};

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

// Momentum SGD with L2 weight decay folded into the gradient.
class Sgd {
 public:
  // Gradients whose L2 norm exceeds `max_grad_norm` are rescaled to it; 0
  // leaves them alone.
  Sgd(Eigen::Index size, double momentum, double weight_decay, double max_grad_norm = 0.0);
  void step(Eigen::VectorXf& params, const Eigen::VectorXf& grads, double lr);

 private:
  Eigen::VectorXf velocity_;
  float momentum_;
  float max_grad_norm_;
  float weight_decay_;
};

// Cosine decay from `base` at step 0 to 0 at `total`.
double cosine_lr(double base, long step, long total);

struct MixedBatch {
  Eigen::MatrixXf images;
  Eigen::MatrixXf targets;  // K x B
};

// x = lambda x1 + (1 - lambda) x2, y = lambda onehot(y1) + (1 - lambda) onehot(y2).
MixedBatch mixup_batch(const Eigen::MatrixXf& x1, std::span<const int> y1, const Eigen::MatrixXf& x2,
                       std::span<const int> y2, double lambda, int num_classes);

Eigen::MatrixXf one_hot(std::span<const int> labels, int num_classes);

// Draw from Beta(alpha, alpha) via two gamma variates.
double sample_beta(double alpha, Rng& rng);

struct EpochStats {
  int epoch = 0;
  double mean_loss = 0.0;
};
using EpochCallback = std::function<void(const EpochStats&)>;

// Mini-batch cross-entropy training from a fresh initialization seeded by
// `init_seed`. Throws DivergenceError on a non-finite batch loss.
Classifier train_classifier(const LabeledDataset& data, const TrainConfig& cfg, std::uint64_t init_seed,
                            const EpochCallback& on_epoch = {});

}  // namespace dovkit::nn
