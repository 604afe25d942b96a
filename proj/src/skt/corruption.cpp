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

#include "dovkit/skt/corruption.hpp"

#include "dovkit/data/color.hpp"
#include "dovkit/data/io.hpp"
#include "dovkit/errors.hpp"
#include "dovkit/nn/loss.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <random>

namespace dovkit::skt {

namespace {

constexpr int kSeverities = 5;

template <typename T>
const T& level(const std::array<T, kSeverities>& table, int severity) {
  return table[static_cast<std::size_t>(severity - 1)];
}

void gaussian_noise(Eigen::Ref<Eigen::VectorXf> x, const ImageShape&, int severity, Rng& rng) {
  static constexpr std::array<float, kSeverities> kSigma = {0.04f, 0.06f, 0.08f, 0.09f, 0.10f};
  std::normal_distribution<float> noise(0.0f, level(kSigma, severity));
  for (Eigen::Index i = 0; i < x.size(); ++i) x[i] += noise(rng);
}

void shot_noise(Eigen::Ref<Eigen::VectorXf> x, const ImageShape&, int severity, Rng& rng) {
  static constexpr std::array<float, kSeverities> kPhotons = {500.0f, 250.0f, 100.0f, 75.0f, 50.0f};
  const float c = level(kPhotons, severity);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    std::poisson_distribution<int> shot(std::max(0.0, static_cast<double>(x[i]) * c));
    x[i] = static_cast<float>(shot(rng)) / c;
  }
}

void impulse_noise(Eigen::Ref<Eigen::VectorXf> x, const ImageShape&, int severity, Rng& rng) {
  static constexpr std::array<double, kSeverities> kAmount = {0.01, 0.02, 0.03, 0.05, 0.07};
  const double amount = level(kAmount, severity);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double u = uniform01(rng);
    if (u < amount) x[i] = u < amount / 2 ? 0.0f : 1.0f;
  }
}

void gaussian_blur(Eigen::Ref<Eigen::VectorXf> x, const ImageShape& shape, int severity, Rng&) {
  static constexpr std::array<float, kSeverities> kSigma = {0.4f, 0.6f, 0.7f, 0.8f, 1.0f};
  const float sigma = level(kSigma, severity);
  const int radius = static_cast<int>(std::ceil(3.0f * sigma));
  std::vector<float> kernel(static_cast<std::size_t>(2 * radius + 1));
  float total = 0.0f;
  for (int k = -radius; k <= radius; ++k) {
    total += kernel[static_cast<std::size_t>(k + radius)] = std::exp(-0.5f * k * k / (sigma * sigma));
  }
  for (float& k : kernel) k /= total;
  const int h = shape.height;
  const int w = shape.width;
  std::vector<float> tmp(static_cast<std::size_t>(shape.plane()));
  // Separable passes with edge replication.
  for (int c = 0; c < shape.channels; ++c) {
    float* p = x.data() + static_cast<Eigen::Index>(c) * shape.plane();
    for (int y = 0; y < h; ++y) {
      for (int xx = 0; xx < w; ++xx) {
        float acc = 0.0f;
        for (int k = -radius; k <= radius; ++k) {
          acc += kernel[static_cast<std::size_t>(k + radius)] * p[y * w + std::clamp(xx + k, 0, w - 1)];
        }
        tmp[static_cast<std::size_t>(y * w + xx)] = acc;
      }
    }
    for (int y = 0; y < h; ++y) {
      for (int xx = 0; xx < w; ++xx) {
        float acc = 0.0f;
        for (int k = -radius; k <= radius; ++k) {
          acc += kernel[static_cast<std::size_t>(k + radius)] * tmp[static_cast<std::size_t>(std::clamp(y + k, 0, h - 1) * w + xx)];
        }
        p[y * w + xx] = acc;
      }
    }
  }
}

void require_rgb(const ImageShape& shape, const char* what) {
  if (shape.channels != 3) throw PreconditionError(std::string(what) + " corruption needs 3-channel images");
}

void brightness(Eigen::Ref<Eigen::VectorXf> x, const ImageShape& shape, int severity, Rng&) {
  static constexpr std::array<float, kSeverities> kShift = {0.05f, 0.1f, 0.15f, 0.2f, 0.3f};
  const float shift = level(kShift, severity);
  if (shape.channels != 3) {
    x.array() += shift;
    return;
  }
  map_hsv(x, shape, [&](Hsv& hsv) { hsv.v = std::clamp(hsv.v + shift, 0.0f, 1.0f); });
}

void contrast(Eigen::Ref<Eigen::VectorXf> x, const ImageShape& shape, int severity, Rng&) {
  static constexpr std::array<float, kSeverities> kFactor = {0.75f, 0.5f, 0.4f, 0.3f, 0.15f};
  const float f = level(kFactor, severity);
  for (int c = 0; c < shape.channels; ++c) {
    auto plane = x.segment(static_cast<Eigen::Index>(c) * shape.plane(), shape.plane());
    const float mean = plane.mean();
    plane = ((plane.array() - mean) * f + mean).matrix();
  }
}

void saturate(Eigen::Ref<Eigen::VectorXf> x, const ImageShape& shape, int severity, Rng&) {
  static constexpr std::array<std::array<float, 2>, kSeverities> kMap = {
      {{0.3f, 0.0f}, {0.1f, 0.0f}, {1.5f, 0.0f}, {2.0f, 0.1f}, {2.5f, 0.2f}}};
  require_rgb(shape, "saturate");
  const auto& m = level(kMap, severity);
  map_hsv(x, shape, [&](Hsv& hsv) { hsv.s = std::clamp(hsv.s * m[0] + m[1], 0.0f, 1.0f); });
}

void pixelate(Eigen::Ref<Eigen::VectorXf> x, const ImageShape& shape, int severity, Rng&) {
  static constexpr std::array<float, kSeverities> kFactor = {0.95f, 0.9f, 0.85f, 0.75f, 0.65f};
  const float f = level(kFactor, severity);
  const int h = shape.height;
  const int w = shape.width;
  const int sh = std::max(1, static_cast<int>(std::lround(h * f)));
  const int sw = std::max(1, static_cast<int>(std::lround(w * f)));
  // Box down-sample onto an sh x sw grid, then nearest up-sample.
  std::vector<float> sum(static_cast<std::size_t>(sh * sw));
  std::vector<int> count(static_cast<std::size_t>(sh * sw));
  for (int c = 0; c < shape.channels; ++c) {
    float* p = x.data() + static_cast<Eigen::Index>(c) * shape.plane();
    std::fill(sum.begin(), sum.end(), 0.0f);
    std::fill(count.begin(), count.end(), 0);
    for (int y = 0; y < h; ++y) {
      for (int xx = 0; xx < w; ++xx) {
        const std::size_t cell = static_cast<std::size_t>((y * sh / h) * sw + xx * sw / w);
        sum[cell] += p[y * w + xx];
        ++count[cell];
      }
    }
    for (int y = 0; y < h; ++y) {
      for (int xx = 0; xx < w; ++xx) {
        const std::size_t cell = static_cast<std::size_t>((y * sh / h) * sw + xx * sw / w);
        p[y * w + xx] = sum[cell] / static_cast<float>(count[cell]);
      }
    }
  }
}

void clamp01(Eigen::Ref<Eigen::VectorXf> x) { x = x.cwiseMax(0.0f).cwiseMin(1.0f); }

void apply_in_place(Eigen::Ref<Eigen::VectorXf> x, const ImageShape& shape, const CorruptionChain& chain, Rng& rng,
                    const CorruptionRegistry& registry) {
  for (auto it = chain.steps.rbegin(); it != chain.steps.rend(); ++it) {
    registry.at(it->corruption_id)(x, shape, it->severity, rng);
    clamp01(x);
  }
}

}  // namespace

CorruptionRegistry CorruptionRegistry::with_defaults() {
  CorruptionRegistry r;
  r.add("gaussian_noise", gaussian_noise);
  r.add("shot_noise", shot_noise);
  r.add("impulse_noise", impulse_noise);
  r.add("gaussian_blur", gaussian_blur);
  r.add("brightness", brightness);
  r.add("contrast", contrast);
  r.add("saturate", saturate);
  r.add("pixelate", pixelate);
  return r;
}

void CorruptionRegistry::add(const std::string& id, CorruptionFn fn) {
  if (id.empty() || !fn) throw PreconditionError("corruption needs an id and a function");
  fns_[id] = std::move(fn);
}

const CorruptionFn& CorruptionRegistry::at(const std::string& id) const {
  auto it = fns_.find(id);
  if (it == fns_.end()) throw ValidationError("unknown corruption id: " + id);
  return it->second;
}

std::vector<std::string> CorruptionRegistry::ids() const {
  std::vector<std::string> out;
  for (const auto& [id, fn] : fns_) out.push_back(id);
  return out;
}

const CorruptionRegistry& default_registry() {
  static const CorruptionRegistry registry = CorruptionRegistry::with_defaults();
  return registry;
}

void CorruptionChain::validate(const CorruptionRegistry& registry, int max_length) const {
  if (max_length > 0 && static_cast<int>(steps.size()) > max_length) {
    throw ValidationError("corruption chain longer than " + std::to_string(max_length));
  }
  for (const CorruptionStep& s : steps) {
    if (!registry.contains(s.corruption_id)) throw ValidationError("unknown corruption id: " + s.corruption_id);
    if (s.severity < 1 || s.severity > kSeverities) {
      throw ValidationError("corruption severity must be in 1..5 (got " + std::to_string(s.severity) + ")");
    }
  }
}

std::string CorruptionChain::describe() const {
  if (steps.empty()) return "identity";
  std::string out;
  for (const CorruptionStep& s : steps) {
    if (!out.empty()) out += " . ";
    out += s.corruption_id + "@" + std::to_string(s.severity);
  }
  return out;
}

nlohmann::json to_json(const CorruptionChain& chain) {
  nlohmann::json j = nlohmann::json::array();
  for (const CorruptionStep& s : chain.steps) j.push_back({{"corruption_id", s.corruption_id}, {"severity", s.severity}});
  return j;
}

CorruptionChain chain_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw FormatError("corruption chain must be a JSON list");
  CorruptionChain chain;
  try {
    for (const auto& e : j) chain.steps.push_back({e.at("corruption_id").get<std::string>(), e.at("severity").get<int>()});
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed corruption chain: ") + e.what());
  }
  return chain;
}

void save_chain(const CorruptionChain& chain, const std::filesystem::path& path) {
  atomic_write(path, [&](std::ostream& out) { out << to_json(chain).dump(2) << '\n'; });
}

CorruptionChain load_chain(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open corruption chain: " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("corruption chain is not JSON: ") + e.what());
  }
  return chain_from_json(j);
}

Image apply_corruption(const Image& x, const CorruptionChain& chain, std::uint64_t seed,
                       const CorruptionRegistry& registry) {
  chain.validate(registry);
  Image out = x;
  Rng rng = make_rng(seed);
  apply_in_place(out.pixels, out.shape, chain, rng, registry);
  return out;
}

Eigen::MatrixXf apply_corruption(const Eigen::MatrixXf& batch, const ImageShape& shape, const CorruptionChain& chain,
                                 std::uint64_t seed, const CorruptionRegistry& registry) {
  chain.validate(registry);
  if (batch.rows() != shape.size()) throw ShapeMismatchError("batch rows do not match the image shape");
  Eigen::MatrixXf out = batch;
  for (Eigen::Index j = 0; j < out.cols(); ++j) {
    Rng rng = make_rng(derive_seed(seed, static_cast<std::uint64_t>(j)));
    apply_in_place(out.col(j), shape, chain, rng, registry);
  }
  return out;
}

void GaConfig::validate() const {
  if (population < 1 || epochs < 0 || chain_length < 1 || tournament_size < 1 || elitism < 0 || batch_size < 1) {
    throw PreconditionError("invalid genetic search configuration");
  }
  if (!(mutation_rate >= 0.0 && mutation_rate <= 1.0)) throw PreconditionError("mutation rate must be in [0, 1]");
}

double chain_fitness(const nn::Classifier& teacher, const Eigen::MatrixXf& batch, const std::vector<int>& labels,
                     const ImageShape& shape, const CorruptionChain& chain, std::uint64_t seed,
                     const CorruptionRegistry& registry) {
  return nn::cross_entropy(teacher.logits(apply_corruption(batch, shape, chain, seed, registry)), labels);
}

namespace {

CorruptionStep random_step(const std::vector<std::string>& ids, Rng& rng) {
  return {ids[static_cast<std::size_t>(rng() % ids.size())], 1 + static_cast<int>(rng() % kSeverities)};
}

}  // namespace

CorruptionChain random_chain(int max_length, Rng& rng, const CorruptionRegistry& registry) {
  if (registry.empty()) throw PreconditionError("the corruption registry is empty");
  if (max_length < 1) throw PreconditionError("chain length must be at least 1");
  const std::vector<std::string> ids = registry.ids();
  CorruptionChain chain;
  const int length = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(max_length));
  for (int i = 0; i < length; ++i) chain.steps.push_back(random_step(ids, rng));
  return chain;
}

GaResult search_corruption_chain(const nn::Classifier& teacher, const LabeledDataset& d, const GaConfig& cfg,
                                 std::uint64_t seed, const CorruptionRegistry& registry) {
  cfg.validate();
  if (registry.empty()) throw PreconditionError("the corruption registry is empty");
  if (d.empty()) throw PreconditionError("chain search needs a non-empty dataset");
  Rng rng = make_rng(seed);
  GaResult result;
  result.batch_rows = iota_indices(d.size());
  shuffle_in_place(result.batch_rows, rng);
  result.batch_rows.resize(static_cast<std::size_t>(std::min(cfg.batch_size, d.size())));
  result.noise_seed = derive_seed(seed, 0x6761);
  const Eigen::MatrixXf batch = gather_columns(d.images, result.batch_rows);
  std::vector<int> labels;
  for (int r : result.batch_rows) labels.push_back(d.labels[static_cast<std::size_t>(r)]);
  const std::vector<std::string> ids = registry.ids();

  auto fitness = [&](const CorruptionChain& c) {
    const double f = chain_fitness(teacher, batch, labels, d.shape, c, result.noise_seed, registry);
    if (!std::isfinite(f)) throw DivergenceError("non-finite fitness in chain search");
    return f;
  };

  std::vector<CorruptionChain> pop;
  std::vector<double> fit;
  for (int i = 0; i < cfg.population; ++i) {
    pop.push_back(random_chain(cfg.chain_length, rng, registry));
    fit.push_back(fitness(pop.back()));
  }
  auto track_best = [&] {
    for (std::size_t i = 0; i < pop.size(); ++i) {
      if (result.best.steps.empty() || fit[i] > result.best_fitness) {
        result.best = pop[i];
        result.best_fitness = fit[i];
      }
    }
    result.best_per_epoch.push_back(result.best_fitness);
  };
  track_best();

  auto tournament = [&]() -> const CorruptionChain& {
    std::size_t best = static_cast<std::size_t>(rng() % pop.size());
    for (int k = 1; k < cfg.tournament_size; ++k) {
      const std::size_t c = static_cast<std::size_t>(rng() % pop.size());
      if (fit[c] > fit[best]) best = c;
    }
    return pop[best];
  };

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order(pop.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fit[a] > fit[b]; });
    std::vector<CorruptionChain> next;
    std::vector<double> next_fit;
    for (int e = 0; e < std::min<int>(cfg.elitism, cfg.population); ++e) {
      next.push_back(pop[order[static_cast<std::size_t>(e)]]);
      next_fit.push_back(fit[order[static_cast<std::size_t>(e)]]);
    }
    while (static_cast<int>(next.size()) < cfg.population) {
      const CorruptionChain& a = tournament();
      const CorruptionChain& b = tournament();
      // One-point crossover: a prefix of one parent, a suffix of the other.
      CorruptionChain child;
      const std::size_t cut_a = static_cast<std::size_t>(rng() % (a.steps.size() + 1));
      const std::size_t cut_b = static_cast<std::size_t>(rng() % (b.steps.size() + 1));
      child.steps.assign(a.steps.begin(), a.steps.begin() + static_cast<std::ptrdiff_t>(cut_a));
      child.steps.insert(child.steps.end(), b.steps.begin() + static_cast<std::ptrdiff_t>(cut_b), b.steps.end());
      if (static_cast<int>(child.steps.size()) > cfg.chain_length) child.steps.resize(static_cast<std::size_t>(cfg.chain_length));
      for (CorruptionStep& s : child.steps) {
        if (uniform01(rng) < cfg.mutation_rate) {
          if (rng() % 2 == 0) {
            s.corruption_id = ids[static_cast<std::size_t>(rng() % ids.size())];
          } else {
            s.severity = 1 + static_cast<int>(rng() % kSeverities);
          }
        }
      }
      if (uniform01(rng) < cfg.mutation_rate && static_cast<int>(child.steps.size()) < cfg.chain_length) {
        child.steps.push_back(random_step(ids, rng));
      }
      if (child.steps.empty()) child.steps.push_back(random_step(ids, rng));
      next_fit.push_back(fitness(child));
      next.push_back(std::move(child));
    }
    pop = std::move(next);
    fit = std::move(next_fit);
    track_best();
  }
  return result;
}

}  // namespace dovkit::skt
