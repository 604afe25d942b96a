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

#include <Eigen/Dense>

namespace dovkit {

struct Hsv {
  float h;  // degrees in [0, 360)
  float s;
  float v;
};

Hsv rgb_to_hsv(float r, float g, float b);
void hsv_to_rgb(const Hsv& hsv, float& r, float& g, float& b);

// Rotates the hue of every pixel of a 3-channel CHW column by `degrees`.
void rotate_hue(Eigen::Ref<Eigen::VectorXf> pixels, const ImageShape& shape, float degrees);

// Applies `fn(Hsv&)` to every pixel in HSV space.
template <typename Fn>
void map_hsv(Eigen::Ref<Eigen::VectorXf> pixels, const ImageShape& shape, Fn&& fn) {
  const int plane = shape.plane();
  float* r = pixels.data();
  float* g = r + plane;
  float* b = g + plane;
  for (int p = 0; p < plane; ++p) {
    Hsv hsv = rgb_to_hsv(r[p], g[p], b[p]);
    fn(hsv);
    hsv_to_rgb(hsv, r[p], g[p], b[p]);
  }
}

}  // namespace dovkit
