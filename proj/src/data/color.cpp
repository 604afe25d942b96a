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

#include "dovkit/data/color.hpp"

#include "dovkit/errors.hpp"

#include <algorithm>
#include <cmath>

namespace dovkit {

Hsv rgb_to_hsv(float r, float g, float b) {
  const float mx = std::max({r, g, b});
  const float mn = std::min({r, g, b});
  const float d = mx - mn;
  Hsv out{0.0f, mx > 0.0f ? d / mx : 0.0f, mx};
  if (d <= 0.0f) return out;
  float h;
  if (mx == r) {
    h = (g - b) / d;
  } else if (mx == g) {
    h = 2.0f + (b - r) / d;
  } else {
    h = 4.0f + (r - g) / d;
  }
  h *= 60.0f;
  if (h < 0.0f) h += 360.0f;
  out.h = h;
  return out;
}

void hsv_to_rgb(const Hsv& hsv, float& r, float& g, float& b) {
  const float v = std::clamp(hsv.v, 0.0f, 1.0f);
  const float s = std::clamp(hsv.s, 0.0f, 1.0f);
  float h = std::fmod(hsv.h, 360.0f);
  if (h < 0.0f) h += 360.0f;
  const float c = v * s;
  const float hp = h / 60.0f;
  const float x = c * (1.0f - std::abs(std::fmod(hp, 2.0f) - 1.0f));
  float r1 = 0, g1 = 0, b1 = 0;
  switch (static_cast<int>(hp) % 6) {
    case 0: r1 = c; g1 = x; break;
    case 1: r1 = x; g1 = c; break;
    case 2: g1 = c; b1 = x; break;
    case 3: g1 = x; b1 = c; break;
    case 4: r1 = x; b1 = c; break;
    default: r1 = c; b1 = x; break;
  }
  const float m = v - c;
  r = r1 + m;
  g = g1 + m;
  b = b1 + m;
}

void rotate_hue(Eigen::Ref<Eigen::VectorXf> pixels, const ImageShape& shape, float degrees) {
  if (shape.channels != 3) throw PreconditionError("hue rotation needs a 3-channel image");
  map_hsv(pixels, shape, [degrees](Hsv& hsv) { hsv.h += degrees; });
}

}  // namespace dovkit
