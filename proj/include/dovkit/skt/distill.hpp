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
#include "dovkit/nn/train.hpp"
#include "dovkit/skt/corruption.hpp"
#include "dovkit/skt/perturbation.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <functional>
#include <vector>

namespace dovkit::skt {

enum class Operation { kSkip = 0, kPerturb = 1, kCorrupt = 2 };

struct SktConfig {
  double tau = 1.0;
  std::array<double, 3> op_probs = {0.5, 0.25, 0.25};  // skip, perturb, corrupt
  int epochs = 30;
  int batch_size = 64;
  double learning_rate = 0.05;
  double weight_decay = 5e-4;
  double momentum = 0.9;
  // Global gradient-norm cap per step; 0 disables it.
  double grad_clip = 10.0;
  std::uint64_t seed = 0;

  // tau > 0, probabilities non-negative and summing to 1 (within 1e-9).
  void validate() const;
};

nlohmann::json to_json(const SktConfig& cfg);
SktConfig skt_config_from_json(const nlohmann::json& j);

struct DistillStats {
  int epoch = 0;
  double mean_loss = 0.0;
  std::array<int, 3> op_counts = {0, 0, 0};
};
using DistillCallback = std::function<void(const DistillStats&)>;

// Trains `student_init` on the images of `t` to match the teacher's softened
// distribution on clean inputs, with the student seeing a per-batch operation
// drawn from op_probs. The loss is tau^2 * KL(teacher || student). The pool
// must be non-empty when p_perturb > 0; the chain is used when p_corrupt > 0.
nn::Classifier distill_selective(const nn::Classifier& teacher, const nn::Classifier& student_init,
                                 const LabeledDataset& t, const SktConfig& cfg,
                                 const std::vector<Perturbation>& pool, const CorruptionChain& chain,
                                 const DistillCallback& on_epoch = {});

struct UatConfig {
  int epochs = 30;
  int batch_size = 64;
  double learning_rate = 0.05;
  double weight_decay = 5e-4;
  double momentum = 0.9;
  int inner_steps = 2;
  double inner_step_size = 4.0 / 255.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct UatBatchStats {
  double clean_loss = 0.0;      // before the inner ascent
  double perturbed_loss = 0.0;  // after it, before the outer step
};
using UatBatchCallback = std::function<void(const UatBatchStats&)>;

// Universal adversarial training on hard teacher labels: per batch, a few
// signed-gradient ascent steps on one shared L-inf perturbation (kept across
// batches), then an outer SGD step on the perturbed batch.
nn::Classifier uat_student_baseline(const nn::Classifier& teacher, const nn::Classifier& student_init,
                                    const LabeledDataset& t, const Budgets& budgets, const UatConfig& cfg,
                                    const UatBatchCallback& on_batch = {});

}  // namespace dovkit::skt
