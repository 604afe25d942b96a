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

#include "dovkit/errors.hpp"

#include <cmath>
#include <limits>
#include <span>
#include <vector>

namespace dovkit::stats {

namespace detail {

// Modified Lentz evaluation of the continued fraction for I_x(a, b).
template <typename Scalar>
Scalar beta_continued_fraction(Scalar a, Scalar b, Scalar x) {
  constexpr int kMaxIterations = 20000;
  constexpr Scalar kEps = std::numeric_limits<Scalar>::epsilon();
  constexpr Scalar kTiny = std::numeric_limits<Scalar>::min() / kEps;
  const Scalar qab = a + b;
  const Scalar qap = a + 1;
  const Scalar qam = a - 1;
  Scalar c = 1;
  Scalar d = 1 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1 / d;
  Scalar h = d;
  for (int m = 1; m <= kMaxIterations; ++m) {
    const Scalar m2 = Scalar(2 * m);
    Scalar aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1 / d;
    const Scalar del = d * c;
    h *= del;
    if (std::abs(del - 1) <= kEps) return h;
  }
  return h;
}

}  // namespace detail

// Regularized incomplete beta function I_x(a, b) for a, b > 0, x in [0, 1].
template <typename Scalar>
Scalar regularized_incomplete_beta(Scalar a, Scalar b, Scalar x) {
  if (!(a > 0) || !(b > 0)) throw PreconditionError("incomplete beta needs a, b > 0");
  if (x <= 0) return 0;
  if (x >= 1) return 1;
  using std::exp;
  using std::lgamma;
  using std::log;
  const Scalar log_front = lgamma(a + b) - lgamma(a) - lgamma(b) + a * log(x) + b * std::log1p(-x);
  const Scalar front = exp(log_front);
  if (x < (a + 1) / (a + b + 2)) return front * detail::beta_continued_fraction(a, b, x) / a;
  return 1 - front * detail::beta_continued_fraction(b, a, 1 - x) / b;
}

// P(T > t) for Student's t with `df` degrees of freedom (df may be fractional).
template <typename Scalar>
Scalar student_t_sf(Scalar t, Scalar df) {
  if (!(df > 0)) throw PreconditionError("Student t needs df > 0");
  if (std::isinf(t)) return t > 0 ? Scalar(0) : Scalar(1);
  const Scalar x = df / (df + t * t);
  const Scalar tail = Scalar(0.5) * regularized_incomplete_beta(df / 2, Scalar(0.5), x);
  return t >= 0 ? tail : 1 - tail;
}

enum class Alternative {
  kBGreater,  // H1: mean(b) > mean(a)
  kAGreater,  // H1: mean(a) > mean(b)
};

struct WelchResult {
  double t = 0.0;   // oriented so that large t supports H1
  double df = 0.0;  // Welch-Satterthwaite degrees of freedom
  double p = 0.5;
};

// One-tailed Welch T-test. Needs at least two finite samples per side. When
// both sample variances are zero the test is degenerate: equal means give
// p = 0.5 by convention, unequal means give the limiting p of 0 or 1.
WelchResult welch_one_tailed(std::span<const double> a, std::span<const double> b, Alternative alternative);

// |ps| / sum(1/p_i); every p must lie in (0, 1].
double harmonic_mean_p(std::span<const double> ps);

// Shannon entropy in bits of the empirical label histogram over K classes.
double annotation_entropy(std::span<const int> labels, int num_classes);

struct MeanVar {
  double mean = 0.0;
  double variance = 0.0;  // unbiased
};
MeanVar mean_and_variance(std::span<const double> xs);

}  // namespace dovkit::stats
