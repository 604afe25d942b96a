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

#include <vector>

namespace dovkit::testing {

struct WelchFixture {
  std::vector<double> a;
  std::vector<double> b;
  // Reference values for H1: mean(b) > mean(a), computed offline with
  // scipy.stats.ttest_ind(b, a, equal_var=False, alternative="greater").
  double t;
  double df;
  double p;
};

inline const std::vector<WelchFixture>& welch_fixtures() {
  static const std::vector<WelchFixture> f = {
      {{0, 0, 0, 0}, {10, 10.1, 9.9, 10.2}, 155.69393051753872, 3.0, 2.9211994397120724e-07},
      {{1.2, 2.3, 0.7, 1.9, 1.4}, {2.1, 2.8, 3.3, 1.9, 2.6, 3.0}, 3.1633348656339777, 8.022225701870145,
       0.006640286625331608},
      {{5.1, 4.9, 5.3, 5.0, 5.2, 4.8, 5.1}, {5.0, 5.4, 4.7, 5.3}, 0.25072653451638477, 4.04013593398952,
       0.4071305789064925},
      {{0.11, 0.35, 0.02, 0.48, 0.27, 0.19, 0.05, 0.33},
       {0.41, 0.95, 0.12, 1.30, 0.66, 0.08, 0.77, 0.52, 1.01, 0.29},
       2.7746087927473777,
       12.329220934200148,
       0.008226964054128202},
      {{3.0, 3.5, 2.5}, {0.2, 9.1, 4.4, 7.7, 1.3, 5.5}, 1.169404928344041, 5.396201034519331,
       0.14564372544859425},
  };
  return f;
}

}  // namespace dovkit::testing
