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

#include "dovkit/stats/barrier.hpp"

#include "dovkit/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

namespace dovkit::stats {

std::vector<double> default_barrier_grid() {
  std::vector<double> grid;
  for (int i = 0; i <= 10; ++i) grid.push_back(i / 10.0);
  return grid;
}

double LossBarrierProfile::train_barrier() const {
  double inner = -std::numeric_limits<double>::infinity();
  double ends = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    if (alphas[i] == 0.0 || alphas[i] == 1.0) {
      ends = std::max(ends, train_loss[i]);
    } else {
      inner = std::max(inner, train_loss[i]);
    }
  }
  return inner - ends;
}

double LossBarrierProfile::train_relative_spread() const {
  double base = 0.0;
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    if (alphas[i] == 0.0) base = train_loss[i];
  }
  double spread = 0.0;
  for (double l : train_loss) spread = std::max(spread, std::abs(l - base));
  return base > 0.0 ? spread / base : spread;
}

LossBarrierProfile loss_barrier(const nn::Classifier& t, const nn::Classifier& s, const LabeledDataset& train,
                                const LabeledDataset& test, const std::vector<double>& grid) {
  bool has0 = false;
  bool has1 = false;
  for (double a : grid) {
    if (!(a >= 0.0 && a <= 1.0)) throw PreconditionError("barrier grid values must lie in [0, 1]");
    has0 = has0 || a == 0.0;
    has1 = has1 || a == 1.0;
  }
  if (!has0 || !has1) throw PreconditionError("barrier grid must contain 0 and 1");
  if (train.empty() || test.empty()) throw PreconditionError("barrier needs non-empty train and test sets");

  LossBarrierProfile profile;
  for (double a : grid) {
    const nn::Classifier m = nn::interpolate_params(t, s, a);
    const double tr = nn::mean_loss(m, train);
    const double te = nn::mean_loss(m, test);
    if (!std::isfinite(tr) || !std::isfinite(te)) throw DivergenceError("non-finite loss along the interpolation path");
    profile.alphas.push_back(a);
    profile.train_loss.push_back(tr);
    profile.test_loss.push_back(te);
  }
  return profile;
}

void write_barrier_tsv(const LossBarrierProfile& profile, std::ostream& out) {
  out << "alpha\ttrain_loss\ttest_loss\n";
  for (std::size_t i = 0; i < profile.alphas.size(); ++i) {
    out << profile.alphas[i] << '\t' << profile.train_loss[i] << '\t' << profile.test_loss[i] << '\n';
  }
}

}  // namespace dovkit::stats
