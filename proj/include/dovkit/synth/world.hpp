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

#include "dovkit/curation/embedding.hpp"
#include "dovkit/data/dataset.hpp"
#include "dovkit/random.hpp"

#include <json.hpp>

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dovkit::synth {

// A class of the synthetic world: coloured stripes at one orientation.
// Orientation is the stripe direction in degrees, 0 = horizontal, measured
// clockwise in image coordinates (y down).
struct ClassConcept {
  std::string name;
  std::string colour;
  float orientation_deg = 0.0f;
  float hue_deg = 0.0f;
};

struct WorldConfig {
  int num_classes = 10;
  int train_per_class = 500;
  int test_per_class = 100;
  int gallery_size = 20000;
  int image_size = 32;
  std::uint64_t seed = 0;
  float orientation_jitter_deg = 7.0f;
  float hue_jitter_deg = 10.0f;
  float pixel_noise = 0.04f;
};

// Copyright-side data (soft sinusoidal patches on noisy grey) and a gallery
// rendered in a different style (square-ish stripes over gradients) whose
// concepts are drawn continuously and never sit on a class centre.
struct World {
  std::vector<ClassConcept> classes;
  LabeledDataset train;
  LabeledDataset test;
  LabeledDataset gallery;  // one placeholder class; labels are all 0
  nlohmann::json descriptions;
};

std::vector<ClassConcept> class_concepts(int num_classes);
World make_world(const WorldConfig& cfg);

enum class Style { kCopyright, kGallery };
// Renders one CHW image with values in [0, 1].
Eigen::VectorXf render(Style style, float orientation_deg, float hue_deg, int size, float pixel_noise, Rng& rng);

// Colour lexicon used by both the world and the attribute encoder.
struct ColourWord {
  std::string_view word;
  float hue_deg;
};
std::span<const ColourWord> colour_lexicon();
std::string_view nearest_colour(float hue_deg);

// A hand-built image/text encoder over two attributes: a gradient
// orientation histogram (structure tensor, 16 bins over 180 degrees) and a
// saturation-weighted hue histogram (12 bins). Text is parsed for colour
// words, orientation words and "<n> degrees", and each attribute becomes a
// smooth bump over the same bins.
class AttributeEncoder : public curation::EmbeddingProvider {
 public:
  static constexpr int kOrientationBins = 16;
  static constexpr int kHueBins = 12;

  int dim() const override { return kOrientationBins + kHueBins; }
  Eigen::VectorXf embed_image(const Image& image) const override;
  Eigen::VectorXf embed_text(std::string_view text) const override;
  std::string id() const override { return "attribute-v1"; }
};

}  // namespace dovkit::synth
