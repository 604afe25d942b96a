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

#include "dovkit/stats/stats.hpp"

#include <string>

namespace dovkit::stats {

MeanVar mean_and_variance(std::span<const double> xs) {
  MeanVar mv;
  if (xs.empty()) return mv;
  // Welford keeps the variance stable for losses spanning many decades.
  double mean = 0.0;
  double m2 = 0.0;
  std::size_t n = 0;
  for (double x : xs) {
    ++n;
    const double delta = x - mean;
    mean += delta / static_cast<double>(n);
    m2 += delta * (x - mean);
  }
  mv.mean = mean;
  mv.variance = n > 1 ? m2 / static_cast<double>(n - 1) : 0.0;
  return mv;
}

WelchResult welch_one_tailed(std::span<const double> a, std::span<const double> b, Alternative alternative) {
  if (a.size() < 2 || b.size() < 2) {
    throw PreconditionError("Welch test needs at least two samples per group (got " + std::to_string(a.size()) +
                            " and " + std::to_string(b.size()) + ")");
  }
  for (double x : a) {
    if (!std::isfinite(x)) throw PreconditionError("Welch test sample a contains a non-finite value");
  }
  for (double x : b) {
    if (!std::isfinite(x)) throw PreconditionError("Welch test sample b contains a non-finite value");
  }
  const MeanVar ma = mean_and_variance(a);
  const MeanVar mb = mean_and_variance(b);
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  const double sa = ma.variance / na;
  const double sb = mb.variance / nb;
  const double diff = alternative == Alternative::kBGreater ? mb.mean - ma.mean : ma.mean - mb.mean;

  WelchResult r;
  if (sa + sb <= 0.0) {
    r.df = na + nb - 2;
    if (diff == 0.0) {
      r.t = 0.0;
      r.p = 0.5;
    } else {
      r.t = diff > 0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
      r.p = diff > 0 ? 0.0 : 1.0;
    }
    return r;
  }
  r.t = diff / std::sqrt(sa + sb);
  r.df = (sa + sb) * (sa + sb) / (sa * sa / (na - 1) + sb * sb / (nb - 1));
  r.p = student_t_sf(r.t, r.df);
  return r;
}

double harmonic_mean_p(std::span<const double> ps) {
  if (ps.empty()) throw PreconditionError("harmonic mean of an empty list");
  double inv = 0.0;
  for (double p : ps) {
    if (!(p > 0.0) || p > 1.0) throw PreconditionError("p-values must lie in (0, 1]");
    inv += 1.0 / p;
  }
  return static_cast<double>(ps.size()) / inv;
}

double annotation_entropy(std::span<const int> labels, int num_classes) {
  if (labels.empty()) throw PreconditionError("entropy of an empty label list");
  if (num_classes <= 0) throw PreconditionError("entropy needs K > 0");
  std::vector<double> counts(static_cast<std::size_t>(num_classes), 0.0);
  for (int y : labels) {
    if (y < 0 || y >= num_classes) throw PreconditionError("label outside [0, K)");
    counts[static_cast<std::size_t>(y)] += 1.0;
  }
  const double n = static_cast<double>(labels.size());
  double h = 0.0;
  for (double c : counts) {
    if (c > 0.0) {
      const double p = c / n;
      h -= p * std::log2(p);
    }
  }
  return h;
}

}  // namespace dovkit::stats
