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

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string_view>
#include <vector>

namespace dovkit::skt {

enum class NormTag : std::uint8_t { kL0 = 0, kL2 = 1, kLinf = 2 };

std::string_view to_string(NormTag tag);

struct Budgets {
  float k0 = 61.0f;               // entries kept by the L0 projection
  float eps2 = 2.0f;              // L2 radius
  float epsinf = 16.0f / 255.0f;  // L-infinity radius

  // k0 = 2% of the entries, eps2 = eta, epsinf = 16/255.
  static Budgets defaults(ImageShape shape, float eta);
  bool operator==(const Budgets&) const = default;
};

// L-inf: clamp; L2: scale by min(1, eps2 / |d|); L0: keep the k0 entries of
// largest magnitude (ties to the lower index).
Eigen::VectorXf project_norm(const Eigen::Ref<const Eigen::VectorXf>& delta, NormTag norm, const Budgets& budgets);

// True when `delta` lies inside the tagged budget (with a relative tolerance
// for the L2 radius).
bool within_budget(const Eigen::Ref<const Eigen::VectorXf>& delta, NormTag norm, const Budgets& budgets);

struct Perturbation {
  Eigen::VectorXf delta;
  NormTag norm_tag = NormTag::kL2;
  Budgets budgets;
  bool operator==(const Perturbation&) const = default;
};

struct PerturbationConfig {
  int iterations = 5;          // I
  double learning_rate = 2.0;  // alpha
  double scale = 2.0;          // eta, the per-batch L2 radius
  double regularization = 0.01;  // lambda on |delta|^2
  int batch_size = 64;
  // Samples of D visited per iteration; 0 visits all of D.
  int samples_per_iteration = 1024;
  // Held-out rows used to pick the projection after each iteration.
  int selection_samples = 256;
  // Ascend on ground-truth labels instead of the teacher's argmax.
  bool use_ground_truth = false;
  Budgets budgets;

  void validate() const;
};

// Mini-batch gradient ascent on CE(f_t(clip(x + d)), y_hat) - lambda |d|^2
// with an L2 rescale to eta after every step. After each iteration the three
// projections are scored on a held-out batch and the worst for the teacher is
// kept. Throws DivergenceError on a non-finite loss.
Perturbation generate_perturbation(const nn::Classifier& teacher, const LabeledDataset& d,
                                   const PerturbationConfig& cfg, std::uint64_t seed);

using PoolProgress = std::function<void(int member, const Perturbation&)>;

// N members generated with seeds seed .. seed + N - 1.
std::vector<Perturbation> build_perturbation_pool(const nn::Classifier& teacher, const LabeledDataset& d, int n,
                                                  const PerturbationConfig& cfg, std::uint64_t seed,
                                                  const PoolProgress& progress = {});

// "EDOVPP01", u32 N, then per member u8 norm tag, f32 k0, f32 eps2,
// f32 epsinf, u32 C, u32 H, u32 W, C*H*W f32. Atomic write.
void save_pool(const std::vector<Perturbation>& pool, ImageShape shape, const std::filesystem::path& path);
std::vector<Perturbation> load_pool(const std::filesystem::path& path, ImageShape* shape = nullptr);

// clip(x + delta, 0, 1) for every column.
Eigen::MatrixXf apply_perturbation(const Eigen::MatrixXf& batch, const Eigen::VectorXf& delta);

}  // namespace dovkit::skt
