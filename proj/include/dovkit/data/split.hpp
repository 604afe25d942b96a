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

#include <cstdint>
#include <string>
#include <vector>

namespace dovkit {

struct SplitSpec {
  std::uint64_t seed = 0;
  std::vector<double> fractions;
};

struct SplitResult {
  std::vector<LabeledDataset> parts;
  // One entry per (part, class) stratum that received no samples.
  std::vector<std::string> warnings;
};

// Stratified, seeded partition. Each class is shuffled independently and cut
// by largest-remainder rounding, so per-class counts are within one sample of
// fraction * class size. Rows inside a part keep the original order.
SplitResult split(const LabeledDataset& dataset, const SplitSpec& spec);

}  // namespace dovkit
