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

#include <string_view>

namespace dovkit::pipeline {

// Parses the TOML subset used by experiment configs into a JSON object:
// `[table]` and `[dotted.table]` headers, `key = value` pairs with basic
// strings, integers, floats, booleans and single-line arrays of those, and
// `#` comments. Duplicate keys and anything outside the subset raise
// FormatError with the offending line number.
nlohmann::json parse_toml(std::string_view text);

}  // namespace dovkit::pipeline
