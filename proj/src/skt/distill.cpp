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

#include "dovkit/skt/distill.hpp"

#include "dovkit/errors.hpp"
#include "dovkit/nn/loss.hpp"
#include "dovkit/random.hpp"

#include <cmath>
#include <span>

namespace dovkit::skt {

namespace {

void check_pair(const nn::Classifier& teacher, const nn::Classifier& student, const LabeledDataset& t) {
  if (t.empty()) throw PreconditionError("the transfer set is empty");
  if (teacher.num_classes() != student.num_classes()) throw ShapeMismatchError("teacher and student differ in K");
  if (!(teacher.input_shape() == student.input_shape()) || !(t.shape == student.input_shape())) {
    throw ShapeMismatchError("transfer set, teacher and student differ in input shape");
  }
  student.check();
}

}  // namespace

void SktConfig::validate() const {
  if (!(tau > 0.0)) throw PreconditionError("temperature must be positive");
  double sum = 0.0;
  for (double p : op_probs) {
    if (!(p >= 0.0)) throw PreconditionError("operation probabilities must be non-negative");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw PreconditionError("operation probabilities must sum to 1");
  if (epochs < 0 || batch_size <= 0 || !(learning_rate > 0.0) || weight_decay < 0.0 || momentum < 0.0 ||
      !(grad_clip >= 0.0)) {
    throw PreconditionError("invalid distillation optimizer settings");
  }
}

nlohmann::json to_json(const SktConfig& cfg) {
  return {{"tau", cfg.tau},
          {"op_probs", cfg.op_probs},
          {"epochs", cfg.epochs},
          {"batch_size", cfg.batch_size},
          {"learning_rate", cfg.learning_rate},
          {"weight_decay", cfg.weight_decay},
          {"momentum", cfg.momentum},
          {"grad_clip", cfg.grad_clip},
          {"seed", cfg.seed}};
}

SktConfig skt_config_from_json(const nlohmann::json& j) {
  SktConfig cfg;
  try {
    cfg.tau = j.value("tau", cfg.tau);
    cfg.op_probs = j.value("op_probs", cfg.op_probs);
    cfg.epochs = j.value("epochs", cfg.epochs);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
    cfg.weight_decay = j.value("weight_decay", cfg.weight_decay);
    cfg.momentum = j.value("momentum", cfg.momentum);
    cfg.grad_clip = j.value("grad_clip", cfg.grad_clip);
    cfg.seed = j.value("seed", cfg.seed);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed distillation config: ") + e.what());
  }
  return cfg;
}

nn::Classifier distill_selective(const nn::Classifier& teacher, const nn::Classifier& student_init,
                                 const LabeledDataset& t, const SktConfig& cfg,
                                 const std::vector<Perturbation>& pool, const CorruptionChain& chain,
                                 const DistillCallback& on_epoch) {
  cfg.validate();
  check_pair(teacher, student_init, t);
  if (cfg.op_probs[1] > 0.0 && pool.empty()) throw PreconditionError("perturbation probability set without a pool");
  for (const Perturbation& p : pool) {
    if (p.delta.size() != t.shape.size()) throw ShapeMismatchError("pool member does not match the image shape");
  }
  if (cfg.op_probs[2] > 0.0) chain.validate();

  nn::Classifier student = student_init;
  if (cfg.epochs == 0) return student;
  // The teacher never sees augmented inputs, so its logits are fixed.
  const Eigen::MatrixXf teacher_logits = teacher.logits(t.images);

  Rng rng = make_rng(derive_seed(cfg.seed, 0x736b74));
  nn::Sgd opt(student.params.size(), cfg.momentum, cfg.weight_decay, cfg.grad_clip);
  nn::Workspace ws;
  Eigen::VectorXf grads;
  Eigen::MatrixXf dlogits;
  std::vector<int> order = iota_indices(t.size());
  const int steps_per_epoch = (t.size() + cfg.batch_size - 1) / cfg.batch_size;
  const long total = static_cast<long>(steps_per_epoch) * cfg.epochs;
  long step = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_in_place(order, rng);
    DistillStats stats;
    stats.epoch = epoch;
    double loss_sum = 0.0;
    for (int s = 0; s < steps_per_epoch; ++s) {
      const int begin = s * cfg.batch_size;
      const int n = std::min(cfg.batch_size, t.size() - begin);
      std::span<const int> rows(order.data() + begin, static_cast<std::size_t>(n));
      Eigen::MatrixXf x = gather_columns(t.images, rows);
      const Eigen::MatrixXf target = gather_columns(teacher_logits, rows);

      const double u = uniform01(rng);
      Operation op = Operation::kSkip;
      if (u >= cfg.op_probs[0]) op = u < cfg.op_probs[0] + cfg.op_probs[1] ? Operation::kPerturb : Operation::kCorrupt;
      // Guard against rounding sending u into a zero-probability bucket.
      if (op == Operation::kCorrupt && cfg.op_probs[2] == 0.0) op = cfg.op_probs[1] > 0.0 ? Operation::kPerturb : Operation::kSkip;
      if (op == Operation::kPerturb && cfg.op_probs[1] == 0.0) op = Operation::kSkip;
      ++stats.op_counts[static_cast<std::size_t>(op)];
      if (op == Operation::kPerturb) {
        x = apply_perturbation(x, pool[static_cast<std::size_t>(rng() % pool.size())].delta);
      } else if (op == Operation::kCorrupt) {
        x = apply_corruption(x, t.shape, chain, rng());
      }

      const Eigen::MatrixXf& logits = student.net.forward(student.params, x, ws);
      const double loss = nn::distillation_loss(logits, target, cfg.tau, &dlogits);
      if (!std::isfinite(loss)) {
        throw DivergenceError("non-finite distillation loss at epoch " + std::to_string(epoch) + ", step " +
                              std::to_string(s));
      }
      student.net.backward(student.params, dlogits, ws, &grads, nullptr);
      opt.step(student.params, grads, nn::cosine_lr(cfg.learning_rate, step++, total));
      loss_sum += loss * n;
    }
    stats.mean_loss = loss_sum / t.size();
    if (on_epoch) on_epoch(stats);
  }
  return student;
}

void UatConfig::validate() const {
  if (epochs < 0 || batch_size <= 0 || !(learning_rate > 0.0) || weight_decay < 0.0 || momentum < 0.0 ||
      inner_steps < 0 || !(inner_step_size > 0.0)) {
    throw PreconditionError("invalid universal adversarial training settings");
  }
}

nn::Classifier uat_student_baseline(const nn::Classifier& teacher, const nn::Classifier& student_init,
                                    const LabeledDataset& t, const Budgets& budgets, const UatConfig& cfg,
                                    const UatBatchCallback& on_batch) {
  cfg.validate();
  check_pair(teacher, student_init, t);
  if (!(budgets.epsinf > 0.0f)) throw PreconditionError("epsinf must be positive");

  nn::Classifier student = student_init;
  if (cfg.epochs == 0) return student;
  const std::vector<int> hard = teacher.predict(t.images);

  Rng rng = make_rng(derive_seed(cfg.seed, 0x756174));
  nn::Sgd opt(student.params.size(), cfg.momentum, cfg.weight_decay);
  nn::Workspace ws;
  Eigen::VectorXf grads;
  Eigen::MatrixXf dlogits, dinput;
  Eigen::VectorXf delta = Eigen::VectorXf::Zero(t.shape.size());
  const float step_size = static_cast<float>(cfg.inner_step_size);
  std::vector<int> order = iota_indices(t.size());
  const int steps_per_epoch = (t.size() + cfg.batch_size - 1) / cfg.batch_size;
  const long total = static_cast<long>(steps_per_epoch) * cfg.epochs;
  long step = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_in_place(order, rng);
    for (int s = 0; s < steps_per_epoch; ++s) {
      const int begin = s * cfg.batch_size;
      const int n = std::min(cfg.batch_size, t.size() - begin);
      std::span<const int> rows(order.data() + begin, static_cast<std::size_t>(n));
      const Eigen::MatrixXf x = gather_columns(t.images, rows);
      std::vector<int> y(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) y[static_cast<std::size_t>(i)] = hard[static_cast<std::size_t>(rows[i])];

      UatBatchStats bs;
      for (int k = 0; k < cfg.inner_steps; ++k) {
        const Eigen::MatrixXf xp = apply_perturbation(x, delta);
        const double loss = nn::cross_entropy(student.net.forward(student.params, xp, ws), y, &dlogits);
        if (k == 0) bs.clean_loss = loss;
        student.net.backward(student.params, dlogits, ws, nullptr, &dinput);
        const Eigen::MatrixXf raw = x.colwise() + delta;
        const Eigen::VectorXf g =
            (raw.array() > 0.0f && raw.array() < 1.0f).select(dinput.array(), 0.0f).matrix().rowwise().sum();
        delta += step_size * g.array().sign().matrix();
        delta = project_norm(delta, NormTag::kLinf, budgets);
      }

      const Eigen::MatrixXf xp = apply_perturbation(x, delta);
      const Eigen::MatrixXf& logits = student.net.forward(student.params, xp, ws);
      const double loss = nn::cross_entropy(logits, y, &dlogits);
      if (!std::isfinite(loss)) throw DivergenceError("non-finite loss in universal adversarial training");
      bs.perturbed_loss = loss;
      if (cfg.inner_steps == 0) bs.clean_loss = loss;
      if (on_batch) on_batch(bs);
      student.net.backward(student.params, dlogits, ws, &grads, nullptr);
      opt.step(student.params, grads, nn::cosine_lr(cfg.learning_rate, step++, total));
    }
  }
  return student;
}

}  // namespace dovkit::skt
