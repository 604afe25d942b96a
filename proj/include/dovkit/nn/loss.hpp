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

#include <span>

namespace dovkit::nn {

// Column-wise softmax of K x B logits divided by `tau`.
Eigen::MatrixXf softmax(const Eigen::MatrixXf& logits, float tau = 1.0f);

// Column-wise log-softmax, computed with the max-shift for stability.
Eigen::MatrixXf log_softmax(const Eigen::MatrixXf& logits, float tau = 1.0f);

// Per-sample cross-entropy against hard labels.
Eigen::VectorXd per_sample_cross_entropy(const Eigen::MatrixXf& logits, std::span<const int> labels);

// Mean cross-entropy against hard labels. When `dlogits` is given it receives
// d(mean loss)/d(logits).
double cross_entropy(const Eigen::MatrixXf& logits, std::span<const int> labels, Eigen::MatrixXf* dlogits = nullptr);

// Mean cross-entropy against K x B probability targets (mixup).
double soft_cross_entropy(const Eigen::MatrixXf& logits, const Eigen::MatrixXf& targets,
                          Eigen::MatrixXf* dlogits = nullptr);

// tau^2 * mean_b KL(softmax(t/tau) || softmax(s/tau)); the teacher side is
// the target. The tau^2 factor keeps gradient magnitudes comparable across
// temperatures.
double distillation_loss(const Eigen::MatrixXf& student_logits, const Eigen::MatrixXf& teacher_logits, float tau,
                         Eigen::MatrixXf* dlogits = nullptr);

// KL(p || q) for two probability vectors, with 0 log 0 = 0.
double kl_divergence(const Eigen::Ref<const Eigen::VectorXf>& p, const Eigen::Ref<const Eigen::VectorXf>& q);

}  // namespace dovkit::nn
