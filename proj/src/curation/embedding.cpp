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

#include "dovkit/curation/embedding.hpp"

#include "dovkit/digest.hpp"
#include "dovkit/errors.hpp"
#include "dovkit/random.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace dovkit::curation {

Eigen::VectorXf normalized(const Eigen::Ref<const Eigen::VectorXf>& v) {
  const float n = v.norm();
  if (!(n > 0.0f) || !std::isfinite(n)) throw PreconditionError("cannot normalize a zero or non-finite vector");
  return v / n;
}

Eigen::MatrixXf EmbeddingProvider::embed_dataset(const LabeledDataset& data) const {
  Eigen::MatrixXf out(dim(), data.size());
  for (int i = 0; i < data.size(); ++i) out.col(i) = embed_image(data.image(i));
  return out;
}

std::string image_content_hash(const Image& image) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](std::uint8_t byte) {
    h ^= byte;
    h *= 0x100000001b3ULL;
  };
  for (int v : {image.shape.channels, image.shape.height, image.shape.width}) {
    for (int s = 0; s < 32; s += 8) mix(static_cast<std::uint8_t>(v >> s));
  }
  for (Eigen::Index i = 0; i < image.pixels.size(); ++i) mix(quantize_u8(image.pixels[i]));
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

ProjectionEmbeddingProvider::ProjectionEmbeddingProvider(ImageShape shape, int dim, std::uint64_t seed)
    : shape_(shape), seed_(seed) {
  if (dim <= 0) throw PreconditionError("embedding dimension must be positive");
  Rng rng = make_rng(seed);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  projection_.resize(dim, shape.size());
  for (Eigen::Index j = 0; j < projection_.cols(); ++j) {
    for (Eigen::Index i = 0; i < projection_.rows(); ++i) projection_(i, j) = normal(rng);
  }
}

Eigen::VectorXf ProjectionEmbeddingProvider::embed_image(const Image& image) const {
  if (!(image.shape == shape_)) throw ShapeMismatchError("image shape does not match the projection");
  return normalized(projection_ * (image.pixels.array() - 0.5f).matrix());
}

Eigen::MatrixXf ProjectionEmbeddingProvider::embed_dataset(const LabeledDataset& data) const {
  if (!(data.shape == shape_)) throw ShapeMismatchError("dataset shape does not match the projection");
  Eigen::MatrixXf out = projection_ * (data.images.array() - 0.5f).matrix();
  for (Eigen::Index j = 0; j < out.cols(); ++j) out.col(j) = normalized(out.col(j));
  return out;
}

Eigen::VectorXf ProjectionEmbeddingProvider::embed_text(std::string_view text) const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  Rng rng = make_rng(derive_seed(seed_, h));
  std::normal_distribution<float> normal(0.0f, 1.0f);
  Eigen::VectorXf v(dim());
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = normal(rng);
  return normalized(v);
}

std::string ProjectionEmbeddingProvider::id() const {
  std::ostringstream os;
  os << "projection:" << shape_.channels << "x" << shape_.height << "x" << shape_.width << ":" << dim() << ":" << seed_;
  return os.str();
}

FileEmbeddingProvider::FileEmbeddingProvider(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PreconditionError("cannot open embedding file: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string bytes = ss.str();
  digest_ = sha256_hex(bytes).substr(0, 16);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes);
    dim_ = j.at("dim").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("embedding file " + path.string() + ": " + e.what());
  }
  if (dim_ <= 0) throw FormatError("embedding file declares a non-positive dim");
  auto load = [this](const nlohmann::json& obj, std::unordered_map<std::string, Eigen::VectorXf>& dst) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
      const auto vals = it.value().get<std::vector<float>>();
      if (static_cast<int>(vals.size()) != dim_) throw FormatError("embedding '" + it.key() + "' has the wrong length");
      dst.emplace(it.key(), normalized(Eigen::Map<const Eigen::VectorXf>(vals.data(), dim_)));
    }
  };
  if (j.contains("images")) load(j["images"], images_);
  if (j.contains("texts")) load(j["texts"], texts_);
}

Eigen::VectorXf FileEmbeddingProvider::embed_image(const Image& image) const {
  const auto it = images_.find(image_content_hash(image));
  if (it == images_.end()) throw PreconditionError("no precomputed embedding for image " + image_content_hash(image));
  return it->second;
}

Eigen::VectorXf FileEmbeddingProvider::embed_text(std::string_view text) const {
  const auto it = texts_.find(std::string(text));
  if (it == texts_.end()) throw PreconditionError("no precomputed embedding for text '" + std::string(text) + "'");
  return it->second;
}

}  // namespace dovkit::curation
