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

#include "dovkit/nn/loss.hpp"

#include "dovkit/errors.hpp"

#include <cmath>

namespace dovkit::nn {

Eigen::MatrixXf log_softmax(const Eigen::MatrixXf& logits, float tau) {
  Eigen::MatrixXf z = logits / tau;
  for (Eigen::Index b = 0; b < z.cols(); ++b) {
    auto col = z.col(b);
    const float mx = col.maxCoeff();
    col.array() -= mx;
    const float lse = std::log(col.array().exp().sum());
    col.array() -= lse;
  }
  return z;
}

Eigen::MatrixXf softmax(const Eigen::MatrixXf& logits, float tau) { return log_softmax(logits, tau).array().exp(); }

Eigen::VectorXd per_sample_cross_entropy(const Eigen::MatrixXf& logits, std::span<const int> labels) {
  if (static_cast<Eigen::Index>(labels.size()) != logits.cols()) throw ShapeMismatchError("labels/logits size mismatch");
  const Eigen::MatrixXf lp = log_softmax(logits);
  Eigen::VectorXd out(logits.cols());
  for (Eigen::Index b = 0; b < logits.cols(); ++b) {
    const int y = labels[static_cast<std::size_t>(b)];
    if (y < 0 || y >= logits.rows()) throw PreconditionError("label outside [0, K)");
    out[b] = -static_cast<double>(lp(y, b));
  }
  return out;
}

double cross_entropy(const Eigen::MatrixXf& logits, std::span<const int> labels, Eigen::MatrixXf* dlogits) {
  const Eigen::VectorXd losses = per_sample_cross_entropy(logits, labels);
  const auto batch = logits.cols();
  if (dlogits) {
    *dlogits = softmax(logits);
    for (Eigen::Index b = 0; b < batch; ++b) (*dlogits)(labels[static_cast<std::size_t>(b)], b) -= 1.0f;
    *dlogits /= static_cast<float>(batch);
  }
  return batch > 0 ? losses.mean() : 0.0;
}

double soft_cross_entropy(const Eigen::MatrixXf& logits, const Eigen::MatrixXf& targets, Eigen::MatrixXf* dlogits) {
  if (targets.rows() != logits.rows() || targets.cols() != logits.cols()) {
    throw ShapeMismatchError("soft targets do not match logits");
  }
  const Eigen::MatrixXf lp = log_softmax(logits);
  const auto batch = logits.cols();
  const double loss = -(targets.cast<double>().array() * lp.cast<double>().array()).sum() / static_cast<double>(batch);
  if (dlogits) {
    // d/dz of -sum(y log p) is p * sum(y) - y; targets need not sum to one.
    const Eigen::RowVectorXf mass = targets.colwise().sum();
    *dlogits = lp.array().exp().matrix();
    for (Eigen::Index b = 0; b < batch; ++b) dlogits->col(b) *= mass[b];
    *dlogits -= targets;
    *dlogits /= static_cast<float>(batch);
  }
  return loss;
}

double distillation_loss(const Eigen::MatrixXf& student_logits, const Eigen::MatrixXf& teacher_logits, float tau,
                         Eigen::MatrixXf* dlogits) {
  if (!(tau > 0.0f)) throw PreconditionError("temperature must be positive");
  if (student_logits.rows() != teacher_logits.rows() || student_logits.cols() != teacher_logits.cols()) {
    throw ShapeMismatchError("student and teacher logits differ in shape");
  }
  const auto batch = student_logits.cols();
  const Eigen::MatrixXf lt = log_softmax(teacher_logits, tau);
  const Eigen::MatrixXf ls = log_softmax(student_logits, tau);
  const Eigen::ArrayXXd pt = lt.cast<double>().array().exp();
  const double kl = (pt * (lt.cast<double>().array() - ls.cast<double>().array())).sum();
  const double scale = static_cast<double>(tau) * tau / static_cast<double>(batch);
  if (dlogits) {
    // d/ds of tau^2 KL = tau * (p_s - p_t), averaged over the batch.
    *dlogits = (ls.array().exp() - lt.array().exp()).matrix() * (tau / static_cast<float>(batch));
  }
  return kl * scale;
}

double kl_divergence(const Eigen::Ref<const Eigen::VectorXf>& p, const Eigen::Ref<const Eigen::VectorXf>& q) {
  if (p.size() != q.size()) throw ShapeMismatchError("KL arguments differ in length");
  double kl = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0f) kl += static_cast<double>(p[i]) * (std::log(static_cast<double>(p[i])) - std::log(static_cast<double>(q[i])));
  }
  return kl;
}

}  // namespace dovkit::nn
