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

#include "dovkit/skt/perturbation.hpp"

#include "dovkit/data/io.hpp"
#include "dovkit/errors.hpp"
#include "dovkit/nn/loss.hpp"
#include "dovkit/random.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace dovkit::skt {

namespace {
constexpr std::string_view kPoolMagic = "EDOVPP01";
}

std::string_view to_string(NormTag tag) {
  switch (tag) {
    case NormTag::kL0: return "L0";
    case NormTag::kL2: return "L2";
    case NormTag::kLinf: return "Linf";
  }
  return "?";
}

Budgets Budgets::defaults(ImageShape shape, float eta) {
  Budgets b;
  b.k0 = std::max(1.0f, std::round(0.02f * static_cast<float>(shape.size())));
  b.eps2 = eta;
  b.epsinf = 16.0f / 255.0f;
  return b;
}

Eigen::VectorXf project_norm(const Eigen::Ref<const Eigen::VectorXf>& delta, NormTag norm, const Budgets& budgets) {
  switch (norm) {
    case NormTag::kLinf: {
      if (!(budgets.epsinf > 0.0f)) throw PreconditionError("epsinf must be positive");
      return delta.cwiseMax(-budgets.epsinf).cwiseMin(budgets.epsinf);
    }
    case NormTag::kL2: {
      if (!(budgets.eps2 > 0.0f)) throw PreconditionError("eps2 must be positive");
      const float n = delta.norm();
      return n > budgets.eps2 ? Eigen::VectorXf(delta * (budgets.eps2 / n)) : Eigen::VectorXf(delta);
    }
    case NormTag::kL0: {
      if (!(budgets.k0 >= 1.0f)) throw PreconditionError("k0 must be at least 1");
      const auto k = std::min<Eigen::Index>(static_cast<Eigen::Index>(budgets.k0), delta.size());
      std::vector<Eigen::Index> order(static_cast<std::size_t>(delta.size()));
      std::iota(order.begin(), order.end(), Eigen::Index{0});
      std::stable_sort(order.begin(), order.end(),
                       [&](Eigen::Index a, Eigen::Index b) { return std::abs(delta[a]) > std::abs(delta[b]); });
      Eigen::VectorXf out = Eigen::VectorXf::Zero(delta.size());
      for (Eigen::Index i = 0; i < k; ++i) out[order[static_cast<std::size_t>(i)]] = delta[order[static_cast<std::size_t>(i)]];
      return out;
    }
  }
  throw PreconditionError("unknown norm tag");
}

bool within_budget(const Eigen::Ref<const Eigen::VectorXf>& delta, NormTag norm, const Budgets& budgets) {
  switch (norm) {
    case NormTag::kLinf: return delta.cwiseAbs().maxCoeff() <= budgets.epsinf;
    case NormTag::kL2: return delta.norm() <= budgets.eps2 * (1.0f + 1e-5f);
    case NormTag::kL0: return static_cast<float>((delta.array() != 0.0f).count()) <= budgets.k0;
  }
  return false;
}

void PerturbationConfig::validate() const {
  if (iterations < 0) throw PreconditionError("iterations must be non-negative");
  if (!(learning_rate > 0.0) || !(scale > 0.0) || !(regularization >= 0.0)) {
    throw PreconditionError("perturbation learning rate and scale must be positive");
  }
  if (batch_size <= 0 || selection_samples <= 0 || samples_per_iteration < 0) {
    throw PreconditionError("perturbation batch sizes must be positive");
  }
  if (!(budgets.k0 >= 1.0f) || !(budgets.eps2 > 0.0f) || !(budgets.epsinf > 0.0f)) {
    throw PreconditionError("perturbation budgets must be positive");
  }
}

Eigen::MatrixXf apply_perturbation(const Eigen::MatrixXf& batch, const Eigen::VectorXf& delta) {
  if (delta.size() != batch.rows()) throw ShapeMismatchError("perturbation does not match the image size");
  return (batch.colwise() + delta).cwiseMax(0.0f).cwiseMin(1.0f);
}

Perturbation generate_perturbation(const nn::Classifier& teacher, const LabeledDataset& d,
                                   const PerturbationConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (d.empty()) throw PreconditionError("perturbation search needs a non-empty dataset");
  if (!(d.shape == teacher.input_shape())) throw ShapeMismatchError("dataset shape differs from the teacher input");
  Perturbation out;
  out.budgets = cfg.budgets;
  out.delta = Eigen::VectorXf::Zero(d.shape.size());
  if (cfg.iterations == 0) return out;

  Rng rng = make_rng(seed);
  std::vector<int> rows = iota_indices(d.size());
  shuffle_in_place(rows, rng);
  // The tail of the shuffled rows is the selection batch; ascent uses the rest.
  const int n_sel = std::min(cfg.selection_samples, std::max(1, d.size() / 4));
  std::vector<int> sel_rows(rows.end() - n_sel, rows.end());
  std::vector<int> fit_rows(rows.begin(), rows.end() - n_sel);
  if (fit_rows.empty()) fit_rows = sel_rows;

  // Teacher pseudo-labels on clean inputs, or ground truth.
  auto labels_for = [&](const std::vector<int>& rs, const Eigen::MatrixXf& x) {
    if (cfg.use_ground_truth) {
      std::vector<int> y;
      for (int r : rs) y.push_back(d.labels[static_cast<std::size_t>(r)]);
      return y;
    }
    return teacher.predict(x);
  };
  const Eigen::MatrixXf sel_x = gather_columns(d.images, sel_rows);
  const std::vector<int> sel_y = labels_for(sel_rows, sel_x);
  const float eta = static_cast<float>(cfg.scale);
  const float lambda = static_cast<float>(cfg.regularization);
  const float alpha = static_cast<float>(cfg.learning_rate);

  nn::Workspace ws;
  Eigen::MatrixXf dlogits, dinput;
  for (int it = 0; it < cfg.iterations; ++it) {
    shuffle_in_place(fit_rows, rng);
    const int visit = cfg.samples_per_iteration > 0
                          ? std::min(cfg.samples_per_iteration, static_cast<int>(fit_rows.size()))
                          : static_cast<int>(fit_rows.size());
    for (int start = 0; start < visit; start += cfg.batch_size) {
      const int n = std::min(cfg.batch_size, visit - start);
      std::vector<int> batch_rows(fit_rows.begin() + start, fit_rows.begin() + start + n);
      const Eigen::MatrixXf x = gather_columns(d.images, batch_rows);
      const std::vector<int> y = labels_for(batch_rows, x);
      const Eigen::MatrixXf xp = apply_perturbation(x, out.delta);
      const Eigen::MatrixXf& logits = teacher.net.forward(teacher.params, xp, ws);
      const double loss = nn::cross_entropy(logits, y, &dlogits) - lambda * out.delta.squaredNorm();
      if (!std::isfinite(loss)) throw DivergenceError("non-finite loss during perturbation search");
      teacher.net.backward(teacher.params, dlogits, ws, nullptr, &dinput);
      // The clip passes gradient only where x + delta stayed inside [0, 1].
      const Eigen::MatrixXf raw = x.colwise() + out.delta;
      const Eigen::VectorXf grad =
          (raw.array() > 0.0f && raw.array() < 1.0f).select(dinput.array(), 0.0f).matrix().rowwise().sum() -
          2.0f * lambda * out.delta;
      out.delta += alpha * grad;
      // Rescale onto the eta sphere. A confident teacher yields tiny
      // gradients, so only capping the norm would leave delta near zero.
      const float norm = out.delta.norm();
      if (norm > 0.0f) out.delta *= eta / norm;
    }
    // Keep the projection that hurts the teacher most on held-out rows.
    double best = -1.0;
    Eigen::VectorXf best_delta;
    for (NormTag tag : {NormTag::kL0, NormTag::kL2, NormTag::kLinf}) {
      Eigen::VectorXf cand = project_norm(out.delta, tag, cfg.budgets);
      const double loss = nn::cross_entropy(teacher.logits(apply_perturbation(sel_x, cand)), sel_y);
      if (!std::isfinite(loss)) throw DivergenceError("non-finite loss while scoring projections");
      if (loss > best) {
        best = loss;
        best_delta = std::move(cand);
        out.norm_tag = tag;
      }
    }
    out.delta = std::move(best_delta);
  }
  return out;
}

std::vector<Perturbation> build_perturbation_pool(const nn::Classifier& teacher, const LabeledDataset& d, int n,
                                                  const PerturbationConfig& cfg, std::uint64_t seed,
                                                  const PoolProgress& progress) {
  if (n < 1) throw PreconditionError("the perturbation pool needs at least one member");
  std::vector<Perturbation> pool;
  for (int i = 0; i < n; ++i) {
    pool.push_back(generate_perturbation(teacher, d, cfg, seed + static_cast<std::uint64_t>(i)));
    if (progress) progress(i, pool.back());
  }
  return pool;
}

void save_pool(const std::vector<Perturbation>& pool, ImageShape shape, const std::filesystem::path& path) {
  atomic_write(path, [&](std::ostream& out) {
    out.write(kPoolMagic.data(), static_cast<std::streamsize>(kPoolMagic.size()));
    binio::write_u32(out, static_cast<std::uint32_t>(pool.size()));
    for (const Perturbation& p : pool) {
      if (p.delta.size() != shape.size()) throw ShapeMismatchError("pool member does not match the image shape");
      binio::write_u8(out, static_cast<std::uint8_t>(p.norm_tag));
      binio::write_f32(out, p.budgets.k0);
      binio::write_f32(out, p.budgets.eps2);
      binio::write_f32(out, p.budgets.epsinf);
      binio::write_u32(out, static_cast<std::uint32_t>(shape.channels));
      binio::write_u32(out, static_cast<std::uint32_t>(shape.height));
      binio::write_u32(out, static_cast<std::uint32_t>(shape.width));
      binio::write_f32s(out, {p.delta.data(), static_cast<std::size_t>(p.delta.size())});
    }
  });
}

std::vector<Perturbation> load_pool(const std::filesystem::path& path, ImageShape* shape) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open perturbation pool: " + path.string());
  binio::expect_magic(in, kPoolMagic, "perturbation pool");
  const std::uint32_t n = binio::read_u32(in);
  if (n > (1u << 20)) throw FormatError("implausible perturbation pool size");
  std::vector<Perturbation> pool;
  for (std::uint32_t i = 0; i < n; ++i) {
    Perturbation p;
    const std::uint8_t tag = binio::read_u8(in);
    if (tag > 2) throw FormatError("unknown norm tag in perturbation pool");
    p.norm_tag = static_cast<NormTag>(tag);
    p.budgets.k0 = binio::read_f32(in);
    p.budgets.eps2 = binio::read_f32(in);
    p.budgets.epsinf = binio::read_f32(in);
    ImageShape s;
    s.channels = static_cast<int>(binio::read_u32(in));
    s.height = static_cast<int>(binio::read_u32(in));
    s.width = static_cast<int>(binio::read_u32(in));
    if (s.channels <= 0 || s.height <= 0 || s.width <= 0 || s.size() > (1 << 24)) {
      throw FormatError("implausible tensor dims in perturbation pool");
    }
    if (shape) *shape = s;
    p.delta.resize(s.size());
    binio::read_f32s(in, {p.delta.data(), static_cast<std::size_t>(s.size())});
    pool.push_back(std::move(p));
  }
  return pool;
}

}  // namespace dovkit::skt
