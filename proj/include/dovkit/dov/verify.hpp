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
#include "dovkit/nn/classifier.hpp"
#include "dovkit/stats/report.hpp"

#include <cstdint>
#include <span>

namespace dovkit::dov {

// BadNets: share of samples with label != target whose triggered prediction
// is the target. UBW: share of clean-correct samples whose triggered
// prediction differs from the label. `eligible` receives the denominator.
double backdoor_vsr(Method method, std::span<const int> labels, std::span<const int> clean_pred,
                    std::span<const int> triggered_pred, int target, int* eligible = nullptr);

// VSR on the full test set; detected iff VSR > 0.30.
stats::VerificationReport verify_backdoor(const nn::Classifier& model, const LabeledDataset& test,
                                          const VerificationMaterials& m);

struct NonPoisoningOptions {
  int n_decoys = 16;
  // Test samples used per condition (seeded subset); 0 means all.
  int max_samples = 200;
  std::uint64_t seed = 0;
};

// Isotope: true-class confidence on blend(x, key) against blend(x, decoy) for
// decoys drawn from `decoy_pool`. ANW: cross-entropy after the secret hue
// shift against shifts secret + U(30, 330). One-tailed Welch test with the
// identifier condition favoured under H1; detected iff p < 0.01.
stats::VerificationReport verify_nonpoisoning(const nn::Classifier& model, const LabeledDataset& test,
                                              const VerificationMaterials& m, const LabeledDataset* decoy_pool,
                                              const NonPoisoningOptions& opts);

// Welch test of held-out against training-probe cross-entropy (H1: held-out
// is larger). The loss ratio mean(heldout) / mean(train) goes to extras.
stats::VerificationReport verify_fingerprint(const nn::Classifier& model, const LabeledDataset& train_probe,
                                             const LabeledDataset& heldout_probe);

}  // namespace dovkit::dov
