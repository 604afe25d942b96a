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

#include "dovkit/stats/report.hpp"

#include "dovkit/errors.hpp"

namespace dovkit::stats {

std::string_view to_string(MetricKind kind) { return kind == MetricKind::kVsr ? "vsr" : "p_value"; }

MetricKind parse_metric_kind(std::string_view s) {
  if (s == "vsr") return MetricKind::kVsr;
  if (s == "p_value") return MetricKind::kPValue;
  throw FormatError("unknown metric kind '" + std::string(s) + "'");
}

VerificationReport vsr_report(std::string method, double vsr, int n_samples) {
  VerificationReport r;
  r.method = std::move(method);
  r.metric_kind = MetricKind::kVsr;
  r.value = vsr;
  r.threshold = kVsrThreshold;
  r.detected = vsr > kVsrThreshold;
  r.n_samples = n_samples;
  return r;
}

VerificationReport p_value_report(std::string method, double p, int n_samples) {
  VerificationReport r;
  r.method = std::move(method);
  r.metric_kind = MetricKind::kPValue;
  r.value = p;
  r.threshold = kPValueThreshold;
  r.detected = p < kPValueThreshold;
  r.n_samples = n_samples;
  return r;
}

nlohmann::json to_json(const VerificationReport& r) {
  nlohmann::json j = {{"run_id", r.run_id},
                      {"method", r.method},
                      {"metric_kind", to_string(r.metric_kind)},
                      {"value", r.value},
                      {"threshold", r.threshold},
                      {"detected", r.detected},
                      {"n_samples", r.n_samples},
                      {"seeds", r.seeds},
                      {"config_digest", r.config_digest}};
  if (!r.extras.empty()) j["extras"] = r.extras;
  return j;
}

VerificationReport report_from_json(const nlohmann::json& j) {
  try {
    VerificationReport r;
    r.run_id = j.at("run_id").get<std::string>();
    r.method = j.at("method").get<std::string>();
    r.metric_kind = parse_metric_kind(j.at("metric_kind").get<std::string>());
    r.value = j.at("value").get<double>();
    r.threshold = j.at("threshold").get<double>();
    r.detected = j.at("detected").get<bool>();
    r.n_samples = j.at("n_samples").get<int>();
    r.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    r.config_digest = j.at("config_digest").get<std::string>();
    r.extras = j.value("extras", nlohmann::json::object());
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed verification report: ") + e.what());
  }
}

}  // namespace dovkit::stats
