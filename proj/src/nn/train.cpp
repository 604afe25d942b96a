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

#include "dovkit/nn/train.hpp"

#include "dovkit/errors.hpp"
#include "dovkit/nn/loss.hpp"
#include "dovkit/random.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace dovkit::nn {

void TrainConfig::validate() const {
  if (epochs < 0) throw PreconditionError("epochs must be non-negative");
  if (batch_size <= 0) throw PreconditionError("batch_size must be positive");
  if (!(learning_rate > 0.0)) throw PreconditionError("learning_rate must be positive");
  if (!(weight_decay >= 0.0)) throw PreconditionError("weight_decay must be non-negative");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw PreconditionError("momentum must lie in [0, 1)");
  if (mixup_enabled && !(mixup_alpha > 0.0)) throw PreconditionError("mixup_alpha must be positive when mixup is on");
  if (!(grad_clip >= 0.0)) throw PreconditionError("grad_clip must be non-negative");
}

nlohmann::json to_json(const TrainConfig& cfg) {
  return {{"architecture", cfg.architecture}, {"epochs", cfg.epochs},
          {"batch_size", cfg.batch_size},     {"learning_rate", cfg.learning_rate},
          {"weight_decay", cfg.weight_decay}, {"momentum", cfg.momentum},
          {"seed", cfg.seed},                 {"mixup_enabled", cfg.mixup_enabled},
          {"mixup_alpha", cfg.mixup_alpha},   {"grad_clip", cfg.grad_clip}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.architecture = j.value("architecture", c.architecture);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.momentum = j.value("momentum", c.momentum);
  c.seed = j.value("seed", c.seed);
  c.mixup_enabled = j.value("mixup_enabled", c.mixup_enabled);
  c.mixup_alpha = j.value("mixup_alpha", c.mixup_alpha);
  c.grad_clip = j.value("grad_clip", c.grad_clip);
  return c;
}

Sgd::Sgd(Eigen::Index size, double momentum, double weight_decay, double max_grad_norm)
    : velocity_(Eigen::VectorXf::Zero(size)),
      momentum_(static_cast<float>(momentum)),
      max_grad_norm_(static_cast<float>(max_grad_norm)),
      weight_decay_(static_cast<float>(weight_decay)) {}

void Sgd::step(Eigen::VectorXf& params, const Eigen::VectorXf& grads, double lr) {
  float scale = 1.0f;
  if (max_grad_norm_ > 0.0f) {
    const float norm = grads.norm();
    if (norm > max_grad_norm_) scale = max_grad_norm_ / norm;
  }
  velocity_ = momentum_ * velocity_ + scale * grads + weight_decay_ * params;
  params -= static_cast<float>(lr) * velocity_;
}

double cosine_lr(double base, long step, long total) {
  if (total <= 0) return base;
  return 0.5 * base * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / static_cast<double>(total)));
}

Eigen::MatrixXf one_hot(std::span<const int> labels, int num_classes) {
  Eigen::MatrixXf y = Eigen::MatrixXf::Zero(num_classes, static_cast<Eigen::Index>(labels.size()));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) throw PreconditionError("label outside [0, K)");
    y(labels[i], static_cast<Eigen::Index>(i)) = 1.0f;
  }
  return y;
}

MixedBatch mixup_batch(const Eigen::MatrixXf& x1, std::span<const int> y1, const Eigen::MatrixXf& x2,
                       std::span<const int> y2, double lambda, int num_classes) {
  if (x1.rows() != x2.rows() || x1.cols() != x2.cols() || y1.size() != y2.size() ||
      static_cast<Eigen::Index>(y1.size()) != x1.cols()) {
    throw ShapeMismatchError("mixup operands differ in shape");
  }
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw PreconditionError("mixup lambda must lie in [0, 1]");
  const float l = static_cast<float>(lambda);
  MixedBatch out;
  out.images = l * x1 + (1.0f - l) * x2;
  out.targets = l * one_hot(y1, num_classes) + (1.0f - l) * one_hot(y2, num_classes);
  return out;
}

double sample_beta(double alpha, Rng& rng) {
  std::gamma_distribution<double> g(alpha, 1.0);
  const double a = g(rng);
  const double b = g(rng);
  return a + b > 0.0 ? a / (a + b) : 0.5;
}

Classifier train_classifier(const LabeledDataset& data, const TrainConfig& cfg, std::uint64_t init_seed,
                            const EpochCallback& on_epoch) {
  cfg.validate();
  if (data.empty()) throw PreconditionError("cannot train on an empty dataset");
  if (data.num_classes() < 1) throw PreconditionError("training needs at least one class");
  Classifier model = Classifier::create(cfg.architecture, data.shape, data.num_classes(), init_seed);
  if (cfg.epochs == 0) return model;

  Rng rng = make_rng(derive_seed(cfg.seed, 0x7472u));
  Sgd opt(model.params.size(), cfg.momentum, cfg.weight_decay, cfg.grad_clip);
  Workspace ws;
  Eigen::VectorXf grads;
  Eigen::MatrixXf dlogits;
  std::vector<int> order = iota_indices(data.size());
  const int steps_per_epoch = (data.size() + cfg.batch_size - 1) / cfg.batch_size;
  const long total = static_cast<long>(steps_per_epoch) * cfg.epochs;
  long step = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_in_place(order, rng);
    double loss_sum = 0.0;
    for (int s = 0; s < steps_per_epoch; ++s) {
      const int begin = s * cfg.batch_size;
      const int n = std::min(cfg.batch_size, data.size() - begin);
      std::span<const int> rows(order.data() + begin, static_cast<std::size_t>(n));
      Eigen::MatrixXf x = gather_columns(data.images, rows);
      std::vector<int> y(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) y[static_cast<std::size_t>(i)] = data.labels[static_cast<std::size_t>(rows[i])];

      double loss;
      if (cfg.mixup_enabled) {
        const double lambda = sample_beta(cfg.mixup_alpha, rng);
        std::vector<int> perm = iota_indices(n);
        shuffle_in_place(perm, rng);
        Eigen::MatrixXf x2 = gather_columns(x, perm);
        std::vector<int> y2(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) y2[static_cast<std::size_t>(i)] = y[static_cast<std::size_t>(perm[i])];
        MixedBatch mb = mixup_batch(x, y, x2, y2, lambda, data.num_classes());
        const Eigen::MatrixXf& logits = model.net.forward(model.params, mb.images, ws);
        loss = soft_cross_entropy(logits, mb.targets, &dlogits);
      } else {
        const Eigen::MatrixXf& logits = model.net.forward(model.params, x, ws);
        loss = cross_entropy(logits, y, &dlogits);
      }
      if (!std::isfinite(loss)) {
        throw DivergenceError("non-finite training loss at epoch " + std::to_string(epoch) + ", step " +
                              std::to_string(s));
      }
      model.net.backward(model.params, dlogits, ws, &grads, nullptr);
      opt.step(model.params, grads, cosine_lr(cfg.learning_rate, step++, total));
      loss_sum += loss * n;
    }
    if (on_epoch) on_epoch({epoch, loss_sum / data.size()});
  }
  return model;
}

}  // namespace dovkit::nn
