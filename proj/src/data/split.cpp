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

#include "dovkit/data/split.hpp"

#include "dovkit/errors.hpp"
#include "dovkit/random.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dovkit {

namespace {

// Largest-remainder apportionment of n items over the fractions.
std::vector<int> apportion(int n, const std::vector<double>& fractions) {
  std::vector<int> counts(fractions.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  int assigned = 0;
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    const double exact = fractions[i] * n;
    counts[i] = static_cast<int>(std::floor(exact));
    assigned += counts[i];
    remainders.emplace_back(exact - counts[i], i);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t j = 0; assigned < n; ++j, ++assigned) ++counts[remainders[j % remainders.size()].second];
  return counts;
}

}  // namespace

SplitResult split(const LabeledDataset& dataset, const SplitSpec& spec) {
  if (dataset.empty()) throw PreconditionError("cannot split an empty dataset");
  if (spec.fractions.empty()) throw PreconditionError("split needs at least one fraction");
  double total = 0.0;
  for (double f : spec.fractions) {
    if (!(f > 0.0 && f <= 1.0)) throw PreconditionError("split fractions must lie in (0, 1]");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw PreconditionError("split fractions must sum to 1");

  const int k = dataset.num_classes();
  std::vector<std::vector<int>> by_class(static_cast<std::size_t>(k));
  for (int r = 0; r < dataset.size(); ++r) by_class[static_cast<std::size_t>(dataset.labels[static_cast<std::size_t>(r)])].push_back(r);

  SplitResult result;
  std::vector<std::vector<int>> part_rows(spec.fractions.size());
  for (int c = 0; c < k; ++c) {
    auto rows = by_class[static_cast<std::size_t>(c)];
    if (rows.empty()) continue;
    Rng rng = make_rng(derive_seed(spec.seed, static_cast<std::uint64_t>(c)));
    shuffle_in_place(rows, rng);
    const auto counts = apportion(static_cast<int>(rows.size()), spec.fractions);
    std::size_t offset = 0;
    for (std::size_t p = 0; p < counts.size(); ++p) {
      if (counts[p] == 0) {
        result.warnings.push_back("split part " + std::to_string(p) + " has no samples of class " +
                                  dataset.class_names[static_cast<std::size_t>(c)]);
      }
      for (int i = 0; i < counts[p]; ++i) part_rows[p].push_back(rows[offset++]);
    }
  }
  for (auto& rows : part_rows) {
    std::sort(rows.begin(), rows.end());
    result.parts.push_back(dataset.subset(rows));
  }
  return result;
}

}  // namespace dovkit
