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

#include "dovkit/pipeline/config.hpp"
#include "dovkit/stats/report.hpp"

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dovkit::pipeline {

// Stage order; "data" renders or loads the datasets the others consume.
const std::vector<std::string>& stage_names();
bool is_stage(std::string_view name);

// A stage aborted; the partial manifest has already been written.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error("stage '" + stage + "' failed: " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

struct StageRecord {
  std::string name;
  std::string key;      // cache key: SHA-256 over the stage config and upstream keys
  std::string status;   // "ran", "cached" or "failed"
  std::string started;  // UTC, ISO 8601
  std::string finished;
  double seconds = 0.0;
  std::map<std::string, std::string> artifacts;  // name -> path
};

struct RunManifest {
  std::string run_id;
  std::string config_digest;
  std::string method;
  std::vector<StageRecord> stages;
  std::vector<std::string> warnings;
  std::optional<stats::VerificationReport> teacher_report;
  std::optional<stats::VerificationReport> student_report;
  std::optional<double> teacher_accuracy;
  std::optional<double> student_accuracy;
  nlohmann::json calibration = nlohmann::json::object();  // pool/chain/skt settings actually used
  bool complete = false;
  std::string failed_stage;
  std::string error;

  const StageRecord* stage(std::string_view name) const;
  // Every artifact path across stages.
  std::map<std::string, std::string> artifacts() const;
};

nlohmann::json to_json(const RunManifest& m);
RunManifest manifest_from_json(const nlohmann::json& j);
void save_manifest(const RunManifest& m, const std::filesystem::path& path);
RunManifest load_manifest(const std::filesystem::path& path);

struct PipelineOptions {
  // Run exactly this stage (always executed); upstream artifacts must exist.
  std::optional<std::string> only_stage;
  // Re-run stages even when their cached artifacts match.
  bool force = false;
  // Progress lines ("[stage] message").
  std::function<void(const std::string&)> log;
};

// Runs the stages in order, reusing any stage whose stamp records the same
// key and whose artifacts still hash to the recorded digests. The manifest is
// written to <output_dir>/manifest.json after every stage; on failure it is
// written with the failed stage and StageError is thrown.
RunManifest run_pipeline(const ExperimentConfig& cfg, const PipelineOptions& options = {});

// Table-1-style summary: a header, one row with vanilla and evasion
// accuracy and metric, then every warning.
std::string format_summary(const RunManifest& m);

// {"run_id", "method", "teacher": report, "student": report, accuracies,
// "warnings"}; throws PreconditionError when the manifest is incomplete.
nlohmann::json report_json(const RunManifest& m);

}  // namespace dovkit::pipeline
