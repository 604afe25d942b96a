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

#include "dovkit/synth/world.hpp"

#include "dovkit/data/color.hpp"
#include "dovkit/errors.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <numbers>
#include <string>

namespace dovkit::synth {

namespace {

constexpr float kPi = std::numbers::pi_v<float>;
constexpr float kDeg = kPi / 180.0f;

constexpr std::array<ColourWord, 12> kColours = {{
    {"red", 0.0f},      {"orange", 30.0f}, {"yellow", 60.0f}, {"chartreuse", 90.0f},
    {"green", 120.0f},  {"spring", 150.0f}, {"cyan", 180.0f},  {"azure", 210.0f},
    {"blue", 240.0f},   {"violet", 270.0f}, {"magenta", 300.0f}, {"rose", 330.0f},
}};

// Extra words accepted in descriptions.
constexpr std::array<ColourWord, 10> kSynonyms = {{
    {"scarlet", 5.0f},  {"gold", 50.0f},    {"lime", 100.0f},   {"emerald", 135.0f}, {"teal", 180.0f},
    {"navy", 240.0f},   {"indigo", 260.0f}, {"purple", 280.0f}, {"pink", 330.0f},    {"crimson", 350.0f},
}};

float uniform(Rng& rng, float lo, float hi) { return lo + (hi - lo) * static_cast<float>(uniform01(rng)); }

float wrap(float v, float period) {
  v = std::fmod(v, period);
  return v < 0.0f ? v + period : v;
}

float circular_distance(float a, float b, float period) {
  const float d = std::abs(wrap(a - b, period));
  return std::min(d, period - d);
}

// Adds `weight` to a circular histogram with linear interpolation between
// the two nearest bin centres.
void soft_bin(Eigen::Ref<Eigen::VectorXf> hist, float value, float period, float weight) {
  const int bins = static_cast<int>(hist.size());
  const float pos = wrap(value, period) / period * static_cast<float>(bins) - 0.5f;
  const float fl = std::floor(pos);
  const float frac = pos - fl;
  const int i0 = (static_cast<int>(fl) % bins + bins) % bins;
  const int i1 = (i0 + 1) % bins;
  hist[i0] += weight * (1.0f - frac);
  hist[i1] += weight * frac;
}

void bump(Eigen::Ref<Eigen::VectorXf> hist, float centre, float period, float width) {
  const int bins = static_cast<int>(hist.size());
  for (int i = 0; i < bins; ++i) {
    const float c = (static_cast<float>(i) + 0.5f) * period / static_cast<float>(bins);
    const float d = circular_distance(c, centre, period) / width;
    hist[i] += std::exp(-0.5f * d * d);
  }
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::vector<std::string> tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : lower(text)) {
    if (std::isalnum(static_cast<unsigned char>(c)) || c == '.') {
      cur.push_back(c);
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

}  // namespace

std::span<const ColourWord> colour_lexicon() { return kColours; }

std::string_view nearest_colour(float hue_deg) {
  const ColourWord* best = &kColours[0];
  for (const ColourWord& c : kColours) {
    if (circular_distance(c.hue_deg, hue_deg, 360.0f) < circular_distance(best->hue_deg, hue_deg, 360.0f)) best = &c;
  }
  return best->word;
}

std::vector<ClassConcept> class_concepts(int num_classes) {
  if (num_classes < 1 || num_classes > 12) throw PreconditionError("the synthetic world supports 1 to 12 classes");
  std::vector<ClassConcept> out;
  for (int k = 0; k < num_classes; ++k) {
    ClassConcept c;
    // Hues step by 210 degrees so orientation neighbours differ in colour.
    c.hue_deg = wrap(210.0f * static_cast<float>(k), 360.0f);
    c.orientation_deg = 180.0f * static_cast<float>(k) / static_cast<float>(num_classes);
    c.colour = std::string(nearest_colour(c.hue_deg));
    char buf[64];
    std::snprintf(buf, sizeof buf, "c%02d-%s-%ddeg", k, c.colour.c_str(), static_cast<int>(std::lround(c.orientation_deg)));
    c.name = buf;
    out.push_back(std::move(c));
  }
  return out;
}

Eigen::VectorXf render(Style style, float orientation_deg, float hue_deg, int size, float pixel_noise, Rng& rng) {
  const int plane = size * size;
  Eigen::VectorXf img(3 * plane);
  std::normal_distribution<float> normal(0.0f, 1.0f);

  const float theta = orientation_deg * kDeg;
  // Intensity varies along the stripe normal.
  const float nx = -std::sin(theta);
  const float ny = std::cos(theta);
  const bool gallery = style == Style::kGallery;
  const float wavelength = gallery ? uniform(rng, 3.5f, 8.0f) : uniform(rng, 4.0f, 7.0f);
  const float phase = uniform(rng, 0.0f, 2.0f * kPi);
  const float contrast = uniform(rng, 0.5f, 0.9f);
  Hsv hsv{hue_deg, gallery ? uniform(rng, 0.5f, 1.0f) : uniform(rng, 0.65f, 1.0f),
          gallery ? uniform(rng, 0.6f, 1.0f) : uniform(rng, 0.75f, 1.0f)};
  float col[3];
  hsv_to_rgb(hsv, col[0], col[1], col[2]);

  // Background.
  float bg0[3], bg1[3];
  float gdx = 0.0f, gdy = 0.0f;
  if (gallery) {
    const float a = uniform(rng, 0.2f, 0.8f);
    const float b = uniform(rng, 0.2f, 0.8f);
    for (int c = 0; c < 3; ++c) {
      bg0[c] = a;
      bg1[c] = b;
    }
    const float dir = uniform(rng, 0.0f, 2.0f * kPi);
    gdx = std::cos(dir);
    gdy = std::sin(dir);
  } else {
    const float g = uniform(rng, 0.35f, 0.65f);
    for (int c = 0; c < 3; ++c) bg0[c] = bg1[c] = g + uniform(rng, -0.05f, 0.05f);
  }

  // Window: a Gaussian patch for copyright data, a soft rectangle for the gallery.
  const float cx = gallery ? 0.0f : uniform(rng, 10.0f, static_cast<float>(size) - 10.0f);
  const float cy = gallery ? 0.0f : uniform(rng, 10.0f, static_cast<float>(size) - 10.0f);
  const float sigma = uniform(rng, 7.0f, 11.0f);
  float x0 = 0, x1 = 0, y0 = 0, y1 = 0;
  if (gallery) {
    const float w = uniform(rng, 0.6f, 1.0f) * static_cast<float>(size);
    const float h = uniform(rng, 0.6f, 1.0f) * static_cast<float>(size);
    x0 = uniform(rng, 0.0f, static_cast<float>(size) - w);
    y0 = uniform(rng, 0.0f, static_cast<float>(size) - h);
    x1 = x0 + w;
    y1 = y0 + h;
  }

  const float half = 0.5f * static_cast<float>(size - 1);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const float fx = static_cast<float>(x);
      const float fy = static_cast<float>(y);
      const float wave = std::sin(2.0f * kPi * (fx * nx + fy * ny) / wavelength + phase);
      float a;
      float t = 0.0f;
      if (gallery) {
        const float square = std::tanh(3.0f * wave) / std::tanh(3.0f);
        const float inside = std::clamp(std::min({fx - x0, x1 - fx, fy - y0, y1 - fy}) + 0.5f, 0.0f, 1.0f);
        a = contrast * inside * (0.5f + 0.5f * square);
        t = std::clamp(0.5f + ((fx - half) * gdx + (fy - half) * gdy) / static_cast<float>(size), 0.0f, 1.0f);
      } else {
        const float dx = fx - cx;
        const float dy = fy - cy;
        const float env = std::exp(-(dx * dx + dy * dy) / (2.0f * sigma * sigma));
        a = contrast * env * (0.5f + 0.5f * wave);
      }
      for (int c = 0; c < 3; ++c) {
        const float bg = bg0[c] + t * (bg1[c] - bg0[c]);
        float v = bg + a * (col[c] - bg);
        v += pixel_noise * normal(rng);
        img[c * plane + y * size + x] = std::clamp(v, 0.0f, 1.0f);
      }
    }
  }
  return img;
}

World make_world(const WorldConfig& cfg) {
  if (cfg.train_per_class < 1 || cfg.test_per_class < 1 || cfg.gallery_size < 0 || cfg.image_size < 8) {
    throw PreconditionError("invalid synthetic world size");
  }
  World w;
  w.classes = class_concepts(cfg.num_classes);
  const ImageShape shape{3, cfg.image_size, cfg.image_size};
  std::vector<std::string> names;
  for (const auto& c : w.classes) names.push_back(c.name);

  auto make_split = [&](int per_class, std::uint64_t stream, std::uint64_t first_id) {
    LabeledDataset d;
    d.shape = shape;
    d.class_names = names;
    const int n = per_class * cfg.num_classes;
    d.images.resize(shape.size(), n);
    Rng rng = make_rng(derive_seed(cfg.seed, stream));
    std::normal_distribution<float> normal(0.0f, 1.0f);
    for (int i = 0; i < n; ++i) {
      // Interleave classes so any prefix is balanced.
      const int k = i % cfg.num_classes;
      const ClassConcept& c = w.classes[static_cast<std::size_t>(k)];
      const float ori = c.orientation_deg + cfg.orientation_jitter_deg * normal(rng);
      const float hue = c.hue_deg + cfg.hue_jitter_deg * normal(rng);
      d.images.col(i) = render(Style::kCopyright, ori, hue, cfg.image_size, cfg.pixel_noise, rng);
      d.labels.push_back(k);
      d.ids.push_back(first_id + static_cast<std::uint64_t>(i));
    }
    return d;
  };
  w.train = make_split(cfg.train_per_class, 1, 0);
  w.test = make_split(cfg.test_per_class, 2, 1000000);

  LabeledDataset& g = w.gallery;
  g.shape = shape;
  g.class_names = {"gallery"};
  g.images.resize(shape.size(), cfg.gallery_size);
  Rng rng = make_rng(derive_seed(cfg.seed, 3));
  for (int i = 0; i < cfg.gallery_size; ++i) {
    float ori, hue;
    // Keep the gallery class-disjoint: no concept lands on a class centre.
    for (;;) {
      ori = uniform(rng, 0.0f, 180.0f);
      hue = uniform(rng, 0.0f, 360.0f);
      bool near_centre = false;
      for (const auto& c : w.classes) {
        near_centre |= circular_distance(ori, c.orientation_deg, 180.0f) < 2.0f &&
                       circular_distance(hue, c.hue_deg, 360.0f) < 4.0f;
      }
      if (!near_centre) break;
    }
    g.images.col(i) = render(Style::kGallery, ori, hue, cfg.image_size, 0.5f * cfg.pixel_noise, rng);
    g.labels.push_back(0);
    g.ids.push_back(2000000 + static_cast<std::uint64_t>(i));
  }

  // Store everything on the 8-bit grid, as if decoded from image files.
  for (LabeledDataset* d : {&w.train, &w.test, &w.gallery}) {
    d->images = (d->images * 255.0f).array().round() / 255.0f;
  }

  w.descriptions = nlohmann::json::object();
  for (const auto& c : w.classes) {
    const int deg = static_cast<int>(std::lround(c.orientation_deg));
    std::vector<std::string> desc = {
        c.colour + " stripes at " + std::to_string(deg) + " degrees",
        "a " + c.colour + " grating oriented " + std::to_string(deg) + " degrees",
        "soft " + c.colour + " bands tilted " + std::to_string(deg) + " degrees from horizontal",
    };
    if (deg == 0) desc.push_back("horizontal " + c.colour + " lines");
    if (deg == 90) desc.push_back("vertical " + c.colour + " lines");
    w.descriptions[c.name] = desc;
  }
  return w;
}

Eigen::VectorXf AttributeEncoder::embed_image(const Image& image) const {
  if (image.shape.channels != 3) throw PreconditionError("attribute encoder needs RGB images");
  const int h = image.shape.height;
  const int w = image.shape.width;
  const int plane = image.shape.plane();
  const float* px = image.pixels.data();

  // Structure tensor summed over channels, box-smoothed over 3x3.
  Eigen::ArrayXXf jxx = Eigen::ArrayXXf::Zero(h, w), jxy = jxx, jyy = jxx;
  for (int c = 0; c < 3; ++c) {
    const float* ch = px + c * plane;
    for (int y = 1; y < h - 1; ++y) {
      for (int x = 1; x < w - 1; ++x) {
        const float gx = 0.5f * (ch[y * w + x + 1] - ch[y * w + x - 1]);
        const float gy = 0.5f * (ch[(y + 1) * w + x] - ch[(y - 1) * w + x]);
        jxx(y, x) += gx * gx;
        jxy(y, x) += gx * gy;
        jyy(y, x) += gy * gy;
      }
    }
  }
  Eigen::VectorXf ori = Eigen::VectorXf::Zero(kOrientationBins);
  for (int y = 2; y < h - 2; ++y) {
    for (int x = 2; x < w - 2; ++x) {
      const float sxx = jxx.block(y - 1, x - 1, 3, 3).sum();
      const float sxy = jxy.block(y - 1, x - 1, 3, 3).sum();
      const float syy = jyy.block(y - 1, x - 1, 3, 3).sum();
      const float coherent = std::sqrt((sxx - syy) * (sxx - syy) + 4.0f * sxy * sxy);
      if (coherent <= 0.0f) continue;
      // Dominant gradient angle; stripes run perpendicular to it.
      const float grad = 0.5f * std::atan2(2.0f * sxy, sxx - syy) / kDeg;
      soft_bin(ori, grad - 90.0f, 180.0f, coherent);
    }
  }
  Eigen::VectorXf hue = Eigen::VectorXf::Zero(kHueBins);
  for (int p = 0; p < plane; ++p) {
    const Hsv hsv = rgb_to_hsv(px[p], px[plane + p], px[2 * plane + p]);
    const float weight = hsv.s * hsv.s * hsv.v;
    if (weight > 0.0f) soft_bin(hue, hsv.h, 360.0f, weight);
  }
  Eigen::VectorXf out = Eigen::VectorXf::Zero(dim());
  if (ori.norm() > 0.0f) out.head(kOrientationBins) = ori.normalized();
  if (hue.norm() > 0.0f) out.tail(kHueBins) = hue.normalized();
  if (out.norm() == 0.0f) out.setConstant(1.0f);
  return out.normalized();
}

Eigen::VectorXf AttributeEncoder::embed_text(std::string_view text) const {
  Eigen::VectorXf ori = Eigen::VectorXf::Zero(kOrientationBins);
  Eigen::VectorXf hue = Eigen::VectorXf::Zero(kHueBins);
  const auto toks = tokens(text);
  for (std::size_t i = 0; i < toks.size(); ++i) {
    const std::string& t = toks[i];
    for (const auto& c : kColours) {
      if (t == c.word) bump(hue, c.hue_deg, 360.0f, 15.0f);
    }
    for (const auto& c : kSynonyms) {
      if (t == c.word) bump(hue, c.hue_deg, 360.0f, 15.0f);
    }
    if (t == "horizontal") bump(ori, 0.0f, 180.0f, 10.0f);
    if (t == "vertical") bump(ori, 90.0f, 180.0f, 10.0f);
    if (t == "diagonal") bump(ori, 45.0f, 180.0f, 10.0f);
    if (t == "antidiagonal") bump(ori, 135.0f, 180.0f, 10.0f);
    const bool unit_follows = i + 1 < toks.size() && (toks[i + 1] == "degrees" || toks[i + 1] == "degree" ||
                                                      toks[i + 1] == "deg");
    if (unit_follows && !t.empty() && (std::isdigit(static_cast<unsigned char>(t[0])) != 0)) {
      bump(ori, std::stof(t), 180.0f, 10.0f);
    }
  }
  if (ori.norm() == 0.0f && hue.norm() == 0.0f) {
    throw PreconditionError("description names no colour or orientation: '" + std::string(text) + "'");
  }
  Eigen::VectorXf out = Eigen::VectorXf::Zero(dim());
  if (ori.norm() > 0.0f) out.head(kOrientationBins) = ori.normalized();
  if (hue.norm() > 0.0f) out.tail(kHueBins) = hue.normalized();
  return out.normalized();
}

}  // namespace dovkit::synth
