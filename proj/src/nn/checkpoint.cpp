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

#include "dovkit/nn/checkpoint.hpp"

#include "dovkit/data/io.hpp"
#include "dovkit/errors.hpp"

#include <fstream>

namespace dovkit::nn {

namespace {
constexpr std::string_view kMagic = "EDOVCK01";
}

void save_checkpoint(const Classifier& model, const nlohmann::json& train_config, const std::filesystem::path& path) {
  model.check();
  const ImageShape s = model.input_shape();
  const nlohmann::json meta = {{"input_shape", {s.channels, s.height, s.width}},
                               {"num_classes", model.num_classes()},
                               {"train_config", train_config}};
  atomic_write(path, [&](std::ostream& out) {
    out.write(kMagic.data(), static_cast<std::streamsize>(kMagic.size()));
    binio::write_string(out, model.architecture_id());
    const ParamManifest& m = model.net.manifest();
    binio::write_u32(out, static_cast<std::uint32_t>(m.size()));
    for (const ParamEntry& e : m) {
      binio::write_string(out, e.name);
      binio::write_u32(out, static_cast<std::uint32_t>(e.shape.size()));
      for (int d : e.shape) binio::write_u32(out, static_cast<std::uint32_t>(d));
      binio::write_u64(out, static_cast<std::uint64_t>(e.offset));
      binio::write_u64(out, static_cast<std::uint64_t>(e.size));
    }
    binio::write_u64(out, static_cast<std::uint64_t>(model.params.size()));
    binio::write_f32s(out, {model.params.data(), static_cast<std::size_t>(model.params.size())});
    binio::write_string(out, meta.dump());
  });
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint: " + path.string());
  binio::expect_magic(in, kMagic, "checkpoint");
  const std::string arch = binio::read_string(in);
  const std::uint32_t count = binio::read_u32(in);
  if (count > (1u << 20)) throw FormatError("implausible manifest size in checkpoint");
  ParamManifest manifest;
  for (std::uint32_t i = 0; i < count; ++i) {
    ParamEntry e;
    e.name = binio::read_string(in);
    const std::uint32_t rank = binio::read_u32(in);
    if (rank > 8) throw FormatError("implausible tensor rank in checkpoint");
    for (std::uint32_t r = 0; r < rank; ++r) e.shape.push_back(static_cast<int>(binio::read_u32(in)));
    e.offset = static_cast<Eigen::Index>(binio::read_u64(in));
    e.size = static_cast<Eigen::Index>(binio::read_u64(in));
    manifest.push_back(std::move(e));
  }
  const std::uint64_t n = binio::read_u64(in);
  if (n > (1ull << 32)) throw FormatError("implausible parameter count in checkpoint");
  Eigen::VectorXf params(static_cast<Eigen::Index>(n));
  binio::read_f32s(in, {params.data(), static_cast<std::size_t>(n)});
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(binio::read_string(in));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint metadata is not JSON: ") + e.what());
  }
  ImageShape shape;
  int k = 0;
  try {
    const auto& is = meta.at("input_shape");
    shape = {is.at(0).get<int>(), is.at(1).get<int>(), is.at(2).get<int>()};
    k = meta.at("num_classes").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint metadata incomplete: ") + e.what());
  }
  Network net = Network::build(arch, shape, k);
  if (net.manifest() != manifest || net.num_params() != static_cast<Eigen::Index>(n)) {
    throw FormatError("checkpoint manifest does not match architecture '" + arch + "'");
  }
  return {Classifier{std::move(net), std::move(params)}, meta.value("train_config", nlohmann::json::object())};
}

}  // namespace dovkit::nn
