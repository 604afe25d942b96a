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

#include <iosfwd>
#include <vector>

namespace dovkit::stats {

struct LossBarrierProfile {
  std::vector<double> alphas;
  std::vector<double> train_loss;
  std::vector<double> test_loss;

  // Largest train loss strictly inside (0, 1) minus the larger endpoint loss.
  double train_barrier() const;
  // max |L(alpha) - L(0)| / L(0) over the grid, on the train loss.
  double train_relative_spread() const;
};

// {0, 0.1, ..., 0.9, 1}.
std::vector<double> default_barrier_grid();

// Mean cross-entropy of interpolate_params(t, s, alpha) on both sets for each
// alpha; alpha = 0 is the teacher. The grid must lie in [0, 1] and contain
// both endpoints.
LossBarrierProfile loss_barrier(const nn::Classifier& t, const nn::Classifier& s, const LabeledDataset& train,
                                const LabeledDataset& test, const std::vector<double>& grid = default_barrier_grid());

// Tab-separated "alpha train_loss test_loss" with a header line.
void write_barrier_tsv(const LossBarrierProfile& profile, std::ostream& out);

}  // namespace dovkit::stats
