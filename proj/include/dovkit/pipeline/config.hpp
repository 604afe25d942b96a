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

#include "dovkit/data/io.hpp"
#include "dovkit/dov/materials.hpp"
#include "dovkit/dov/verify.hpp"
#include "dovkit/nn/train.hpp"
#include "dovkit/skt/corruption.hpp"
#include "dovkit/skt/distill.hpp"
#include "dovkit/skt/perturbation.hpp"
#include "dovkit/synth/world.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

namespace dovkit::pipeline {

struct DataConfig {
  // "synthetic" renders the desk world; "files" loads the paths below.
  std::string source = "synthetic";
  synth::WorldConfig world;
  std::filesystem::path train;
  std::filesystem::path test;
  std::filesystem::path gallery;
  std::filesystem::path descriptions;
  DatasetFormat format = DatasetFormat::kPackedBinary;
};

struct EmbeddingConfig {
  // "attribute", "projection" or "file".
  std::string provider = "attribute";
  std::filesystem::path path;  // provider = "file"
  int dim = 64;                // provider = "projection"
  std::uint64_t seed = 0;
};

struct DovConfig {
  dov::Method method = dov::Method::kBadnets;
  double rate = 0.1;
  int target_class = 0;
  int trigger_size = 3;
  double hue_shift = 180.0;
  double blend_ratio = 0.9;
  // Isotope key: a PNG when set, otherwise rendered from key_seed.
  std::filesystem::path key_image;
  std::uint64_t key_seed = 0;
  int n_probe = 100;
  std::uint64_t seed = 0;
  dov::NonPoisoningOptions verify;
};

struct CurationConfig {
  double quota_multiplier = 1.0;
};

struct PoolConfig {
  int size = 8;
  skt::PerturbationConfig perturbation;
  std::uint64_t seed = 0;
};

struct ChainConfig {
  skt::GaConfig ga;
  std::uint64_t seed = 0;
};

struct StudentConfig {
  std::string architecture = "resnet-mini";
  std::uint64_t init_seed = 0;
  skt::SktConfig skt;
};

struct ReportConfig {
  bool loss_barrier = true;
};

// A parsed experiment. Every seed is either given explicitly in its section
// or derived from the required top-level `seed`.
struct ExperimentConfig {
  std::string run_id;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir;
  DataConfig data;
  EmbeddingConfig embedding;
  DovConfig dov;
  nn::TrainConfig teacher;
  std::uint64_t teacher_init_seed = 0;
  CurationConfig curation;
  PoolConfig pool;
  ChainConfig chain;
  StudentConfig student;
  ReportConfig report;
  // SHA-256 of the config bytes (plus any command-line seed override).
  std::string config_digest;

  // Referenced files exist and every parameter is in range. Throws
  // ValidationError.
  void validate() const;
};

// Relative paths resolve against `base_dir`. Unknown keys, missing `seed`
// and malformed values raise ValidationError.
ExperimentConfig parse_experiment_config(const nlohmann::json& doc, const std::filesystem::path& base_dir,
                                         std::optional<std::uint64_t> seed_override = std::nullopt);

// Reads and parses a config file; the digest covers its exact bytes.
ExperimentConfig load_experiment_config(const std::filesystem::path& path,
                                        std::optional<std::uint64_t> seed_override = std::nullopt);

// Stage-relevant subsections in canonical JSON, used as cache keys.
nlohmann::json data_section(const ExperimentConfig& cfg);
nlohmann::json embedding_section(const ExperimentConfig& cfg);
nlohmann::json mark_section(const ExperimentConfig& cfg);
nlohmann::json verify_section(const ExperimentConfig& cfg);
nlohmann::json pool_section(const ExperimentConfig& cfg);
nlohmann::json chain_section(const ExperimentConfig& cfg);
nlohmann::json student_section(const ExperimentConfig& cfg);

}  // namespace dovkit::pipeline
