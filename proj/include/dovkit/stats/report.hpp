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

#include <json.hpp>

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace dovkit::stats {

enum class MetricKind { kVsr, kPValue };

std::string_view to_string(MetricKind kind);
MetricKind parse_metric_kind(std::string_view s);

inline constexpr double kVsrThreshold = 0.30;
inline constexpr double kPValueThreshold = 0.01;

struct VerificationReport {
  std::string run_id;
  std::string method;
  MetricKind metric_kind = MetricKind::kVsr;
  double value = 0.0;
  double threshold = 0.0;
  bool detected = false;
  int n_samples = 0;
  std::vector<std::uint64_t> seeds;
  std::string config_digest;
  // Method-specific diagnostics (loss ratio, t statistic, df, ...).
  nlohmann::json extras = nlohmann::json::object();

  bool operator==(const VerificationReport&) const = default;
};

// detected = value > 0.30.
VerificationReport vsr_report(std::string method, double vsr, int n_samples);
// detected = p < 0.01.
VerificationReport p_value_report(std::string method, double p, int n_samples);

nlohmann::json to_json(const VerificationReport& r);
VerificationReport report_from_json(const nlohmann::json& j);

}  // namespace dovkit::stats
