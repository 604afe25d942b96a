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

#include "dovkit/dov/materials.hpp"

#include <cstdint>
#include <vector>

namespace dovkit::dov {

// floor(rate * n) distinct rows chosen uniformly with `seed`, ascending.
std::vector<int> choose_marked_rows(int n, double rate, std::uint64_t seed);

// Stamps the trigger on the chosen samples and relabels them to `target`.
MarkedDataset embed_badnets(const LabeledDataset& d, const TriggerPattern& trigger, int target, double rate,
                            std::uint64_t seed);

// Stamps the trigger and relabels each chosen sample uniformly among the
// K - 1 classes other than its own.
MarkedDataset embed_ubw(const LabeledDataset& d, const TriggerPattern& trigger, double rate, std::uint64_t seed);

// Rotates the hue of every pixel of the chosen samples; labels unchanged.
// hue_shift must lie in (0, 360].
MarkedDataset embed_anw(const LabeledDataset& d, double hue_shift, double rate, std::uint64_t seed);

// blend * x + (1 - blend) * key on the chosen samples; labels unchanged.
MarkedDataset embed_isotope(const LabeledDataset& d, const Image& key_image, double blend_ratio, double rate,
                            std::uint64_t seed);

// Leaves the dataset untouched and records disjoint probe ids: `n_probe`
// seeded rows of the training set and of a held-out set.
MarkedDataset embed_fingerprint(const LabeledDataset& train, const LabeledDataset& heldout, int n_probe,
                                std::uint64_t seed);

// Per-sample transforms shared by embedding and verification.
void blend_into(Eigen::Ref<Eigen::VectorXf> pixels, const Eigen::VectorXf& key, double blend_ratio);

}  // namespace dovkit::dov
