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
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace dovkit::skt {

// Corrupts one CHW column in place at severity 1..5. Stochastic corruptions
// draw only from `rng`.
using CorruptionFn = std::function<void(Eigen::Ref<Eigen::VectorXf> pixels, const ImageShape& shape, int severity,
                                        Rng& rng)>;

class CorruptionRegistry {
 public:
  // gaussian_noise, shot_noise, impulse_noise, gaussian_blur, brightness,
  // contrast, saturate, pixelate.
  static CorruptionRegistry with_defaults();

  void add(const std::string& id, CorruptionFn fn);
  bool contains(const std::string& id) const { return fns_.count(id) != 0; }
  const CorruptionFn& at(const std::string& id) const;
  std::vector<std::string> ids() const;
  bool empty() const { return fns_.empty(); }

 private:
  std::map<std::string, CorruptionFn> fns_;
};

// The registry used when none is passed explicitly.
const CorruptionRegistry& default_registry();

struct CorruptionStep {
  std::string corruption_id;
  int severity = 1;
  bool operator==(const CorruptionStep&) const = default;
};

struct CorruptionChain {
  std::vector<CorruptionStep> steps;

  // Throws ValidationError on unknown ids or severities outside 1..5, and
  // when the chain is longer than `max_length` (if positive).
  void validate(const CorruptionRegistry& registry = default_registry(), int max_length = 0) const;
  std::string describe() const;
  bool operator==(const CorruptionChain&) const = default;
};

nlohmann::json to_json(const CorruptionChain& chain);
CorruptionChain chain_from_json(const nlohmann::json& j);
void save_chain(const CorruptionChain& chain, const std::filesystem::path& path);
CorruptionChain load_chain(const std::filesystem::path& path);

// Applies steps last-to-first, so steps[0] is the outermost corruption, and
// clamps to [0, 1] after every step.
Image apply_corruption(const Image& x, const CorruptionChain& chain, std::uint64_t seed,
                       const CorruptionRegistry& registry = default_registry());

// Column j is corrupted with the stream derive_seed(seed, j).
Eigen::MatrixXf apply_corruption(const Eigen::MatrixXf& batch, const ImageShape& shape, const CorruptionChain& chain,
                                 std::uint64_t seed, const CorruptionRegistry& registry = default_registry());

struct GaConfig {
  int population = 20;
  int epochs = 10;
  int chain_length = 3;
  double mutation_rate = 0.2;
  int tournament_size = 3;
  int elitism = 2;
  int batch_size = 256;

  void validate() const;
};

// Mean teacher cross-entropy on the corrupted batch with labels y.
double chain_fitness(const nn::Classifier& teacher, const Eigen::MatrixXf& batch, const std::vector<int>& labels,
                     const ImageShape& shape, const CorruptionChain& chain, std::uint64_t seed,
                     const CorruptionRegistry& registry = default_registry());

CorruptionChain random_chain(int max_length, Rng& rng, const CorruptionRegistry& registry = default_registry());

struct GaResult {
  CorruptionChain best;
  double best_fitness = 0.0;
  std::vector<double> best_per_epoch;
  // The evaluation batch rows and corruption seed, so callers can score other
  // chains on identical inputs.
  std::vector<int> batch_rows;
  std::uint64_t noise_seed = 0;
};

// Generational GA maximizing chain_fitness on one seeded batch drawn from `d`
// (common random numbers across candidates). Tournament selection, one-point
// crossover, per-step mutation and elitism.
GaResult search_corruption_chain(const nn::Classifier& teacher, const LabeledDataset& d, const GaConfig& cfg,
                                 std::uint64_t seed, const CorruptionRegistry& registry = default_registry());

}  // namespace dovkit::skt
