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

#include "dovkit/dov/materials.hpp"

#include "dovkit/digest.hpp"
#include "dovkit/errors.hpp"

#include <algorithm>
#include <unordered_set>

namespace dovkit::dov {

namespace {

std::string encode_tensor(const Eigen::VectorXf& v) {
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) bytes[static_cast<std::size_t>(i)] = quantize_u8(v[i]);
  return base64_encode(bytes);
}

Eigen::VectorXf decode_tensor(std::string_view text, Eigen::Index expected) {
  const auto bytes = base64_decode(text);
  if (static_cast<Eigen::Index>(bytes.size()) != expected) throw FormatError("tensor payload has the wrong length");
  Eigen::VectorXf v(expected);
  for (Eigen::Index i = 0; i < expected; ++i) v[i] = dequantize_u8(bytes[static_cast<std::size_t>(i)]);
  return v;
}

nlohmann::json shape_json(ImageShape s) { return {s.channels, s.height, s.width}; }
ImageShape shape_from(const nlohmann::json& j) { return {j.at(0).get<int>(), j.at(1).get<int>(), j.at(2).get<int>()}; }

}  // namespace

std::string_view to_string(Method m) {
  switch (m) {
    case Method::kBadnets: return "badnets";
    case Method::kUbw: return "ubw";
    case Method::kAnw: return "anw";
    case Method::kIsotope: return "isotope";
    case Method::kFingerprint: return "fingerprint";
  }
  return "unknown";
}

Method parse_method(std::string_view name) {
  for (Method m : {Method::kBadnets, Method::kUbw, Method::kAnw, Method::kIsotope, Method::kFingerprint}) {
    if (name == to_string(m)) return m;
  }
  throw ValidationError("unknown dov method '" + std::string(name) + "'");
}

TriggerPattern TriggerPattern::checkerboard(int channels, int size, int row, int col) {
  if (channels < 1 || size < 1) throw PreconditionError("checkerboard needs positive channels and size");
  TriggerPattern t;
  t.patch_shape = {channels, size, size};
  t.patch.resize(t.patch_shape.size());
  for (int c = 0; c < channels; ++c) {
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) t.patch[(c * size + y) * size + x] = (x + y) % 2 == 0 ? 1.0f : 0.0f;
    }
  }
  t.mask.assign(static_cast<std::size_t>(size * size), 1);
  t.row = row;
  t.col = col;
  return t;
}

TriggerPattern TriggerPattern::corner_checkerboard(ImageShape image, int size) {
  return checkerboard(image.channels, size, image.height - size - 1, image.width - size - 1);
}

void TriggerPattern::check(ImageShape image) const {
  if (patch.size() != patch_shape.size()) throw PreconditionError("trigger patch does not match its shape");
  if (mask.size() != static_cast<std::size_t>(patch_shape.plane())) throw PreconditionError("trigger mask does not match the patch");
  if (patch_shape.channels != image.channels) throw PreconditionError("trigger channels differ from the image");
  if (row < 0 || col < 0 || row + patch_shape.height > image.height || col + patch_shape.width > image.width) {
    throw PreconditionError("trigger does not fit inside the image at its anchor");
  }
}

void TriggerPattern::apply(Eigen::Ref<Eigen::VectorXf> pixels, ImageShape image) const {
  const int h = patch_shape.height;
  const int w = patch_shape.width;
  for (int c = 0; c < patch_shape.channels; ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (!mask[static_cast<std::size_t>(y * w + x)]) continue;
        pixels[(c * image.height + row + y) * image.width + col + x] = patch[(c * h + y) * w + x];
      }
    }
  }
}

void VerificationMaterials::validate(const LabeledDataset* data) const {
  const bool backdoor = method == Method::kBadnets || method == Method::kUbw;
  auto require = [](bool ok, const char* what) {
    if (!ok) throw PreconditionError(what);
  };
  require(trigger.has_value() == backdoor, "trigger must be present exactly for badnets/ubw");
  require(target_class.has_value() == (method == Method::kBadnets), "target_class must be present exactly for badnets");
  require(hue_shift.has_value() == (method == Method::kAnw), "hue_shift must be present exactly for anw");
  require(key_image.has_value() == (method == Method::kIsotope), "key_image must be present exactly for isotope");
  require(blend_ratio.has_value() == (method == Method::kIsotope), "blend_ratio must be present exactly for isotope");
  const bool fp = method == Method::kFingerprint;
  require(fp || (train_probe_ids.empty() && heldout_probe_ids.empty()), "probe ids are only used by fingerprint");
  require(!fp || marked_ids.empty(), "fingerprint does not mark samples");
  if (data) {
    const auto index = data->row_index();
    for (auto id : marked_ids) require(index.count(id) == 1, "marked id is not in the dataset");
    if (trigger) trigger->check(data->shape);
    if (target_class) require(*target_class >= 0 && *target_class < data->num_classes(), "target class out of range");
    if (key_image) require(key_image->shape == data->shape, "key image shape differs from the dataset");
  }
  std::unordered_set<std::uint64_t> train(train_probe_ids.begin(), train_probe_ids.end());
  for (auto id : heldout_probe_ids) require(train.count(id) == 0, "fingerprint probes overlap");
}

nlohmann::json to_json(const VerificationMaterials& m) {
  nlohmann::json j = {{"method", to_string(m.method)}, {"marked_ids", m.marked_ids}};
  if (m.trigger) {
    const TriggerPattern& t = *m.trigger;
    Eigen::VectorXf mask(static_cast<Eigen::Index>(t.mask.size()));
    for (std::size_t i = 0; i < t.mask.size(); ++i) mask[static_cast<Eigen::Index>(i)] = t.mask[i] ? 1.0f : 0.0f;
    j["trigger"] = {{"shape", shape_json(t.patch_shape)},
                    {"patch", encode_tensor(t.patch)},
                    {"mask", encode_tensor(mask)},
                    {"row", t.row},
                    {"col", t.col}};
  }
  if (m.target_class) j["target_class"] = *m.target_class;
  if (m.hue_shift) j["hue_shift"] = *m.hue_shift;
  if (m.key_image) j["key_image"] = {{"shape", shape_json(m.key_image->shape)}, {"pixels", encode_tensor(m.key_image->pixels)}};
  if (m.blend_ratio) j["blend_ratio"] = *m.blend_ratio;
  if (!m.train_probe_ids.empty() || m.method == Method::kFingerprint) {
    j["train_probe_ids"] = m.train_probe_ids;
    j["heldout_probe_ids"] = m.heldout_probe_ids;
  }
  return j;
}

VerificationMaterials materials_from_json(const nlohmann::json& j) {
  try {
    VerificationMaterials m;
    m.method = parse_method(j.at("method").get<std::string>());
    m.marked_ids = j.at("marked_ids").get<std::vector<std::uint64_t>>();
    if (j.contains("trigger")) {
      const auto& t = j["trigger"];
      TriggerPattern p;
      p.patch_shape = shape_from(t.at("shape"));
      p.patch = decode_tensor(t.at("patch").get<std::string>(), p.patch_shape.size());
      const Eigen::VectorXf mask = decode_tensor(t.at("mask").get<std::string>(), p.patch_shape.plane());
      for (Eigen::Index i = 0; i < mask.size(); ++i) p.mask.push_back(mask[i] > 0.5f ? 1 : 0);
      p.row = t.at("row").get<int>();
      p.col = t.at("col").get<int>();
      m.trigger = std::move(p);
    }
    if (j.contains("target_class")) m.target_class = j["target_class"].get<int>();
    if (j.contains("hue_shift")) m.hue_shift = j["hue_shift"].get<double>();
    if (j.contains("key_image")) {
      const ImageShape s = shape_from(j["key_image"].at("shape"));
      m.key_image = Image(s, decode_tensor(j["key_image"].at("pixels").get<std::string>(), s.size()));
    }
    if (j.contains("blend_ratio")) m.blend_ratio = j["blend_ratio"].get<double>();
    if (j.contains("train_probe_ids")) m.train_probe_ids = j["train_probe_ids"].get<std::vector<std::uint64_t>>();
    if (j.contains("heldout_probe_ids")) m.heldout_probe_ids = j["heldout_probe_ids"].get<std::vector<std::uint64_t>>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed verification materials: ") + e.what());
  }
}

}  // namespace dovkit::dov
