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

#include "dovkit/dov/embed.hpp"

#include "dovkit/data/color.hpp"
#include "dovkit/errors.hpp"
#include "dovkit/random.hpp"

#include <algorithm>
#include <cmath>

namespace dovkit::dov {

namespace {

void check_rate(double rate) {
  if (!(rate > 0.0 && rate <= 1.0)) throw PreconditionError("poison rate must lie in (0, 1]");
}

MarkedDataset start(const LabeledDataset& d, Method method, const std::vector<int>& rows) {
  MarkedDataset m{d, {}};
  m.materials.method = method;
  for (int r : rows) m.materials.marked_ids.push_back(d.ids[static_cast<std::size_t>(r)]);
  return m;
}

}  // namespace

std::vector<int> choose_marked_rows(int n, double rate, std::uint64_t seed) {
  check_rate(rate);
  // The epsilon keeps rate * n on exact products such as 0.1 * 10000.
  const int count = std::min(n, static_cast<int>(std::floor(rate * n + 1e-9)));
  std::vector<int> rows = iota_indices(n);
  Rng rng = make_rng(derive_seed(seed, 0x6d61726bu));
  shuffle_in_place(rows, rng);
  rows.resize(static_cast<std::size_t>(count));
  std::sort(rows.begin(), rows.end());
  return rows;
}

MarkedDataset embed_badnets(const LabeledDataset& d, const TriggerPattern& trigger, int target, double rate,
                            std::uint64_t seed) {
  check_rate(rate);
  trigger.check(d.shape);
  if (target < 0 || target >= d.num_classes()) throw PreconditionError("target class out of range");
  const auto rows = choose_marked_rows(d.size(), rate, seed);
  MarkedDataset m = start(d, Method::kBadnets, rows);
  for (int r : rows) {
    trigger.apply(m.dataset.images.col(r), d.shape);
    m.dataset.labels[static_cast<std::size_t>(r)] = target;
  }
  m.materials.trigger = trigger;
  m.materials.target_class = target;
  return m;
}

MarkedDataset embed_ubw(const LabeledDataset& d, const TriggerPattern& trigger, double rate, std::uint64_t seed) {
  check_rate(rate);
  trigger.check(d.shape);
  const int k = d.num_classes();
  if (k < 2) throw PreconditionError("UBW needs at least two classes");
  const auto rows = choose_marked_rows(d.size(), rate, seed);
  MarkedDataset m = start(d, Method::kUbw, rows);
  Rng rng = make_rng(derive_seed(seed, 0x756277u));
  for (int r : rows) {
    trigger.apply(m.dataset.images.col(r), d.shape);
    const int y = d.labels[static_cast<std::size_t>(r)];
    const int draw = static_cast<int>(rng() % static_cast<std::uint64_t>(k - 1));
    m.dataset.labels[static_cast<std::size_t>(r)] = draw < y ? draw : draw + 1;
  }
  m.materials.trigger = trigger;
  return m;
}

MarkedDataset embed_anw(const LabeledDataset& d, double hue_shift, double rate, std::uint64_t seed) {
  check_rate(rate);
  if (!(hue_shift > 0.0 && hue_shift <= 360.0)) throw PreconditionError("hue shift must lie in (0, 360]");
  if (d.shape.channels != 3) throw PreconditionError("ANW needs RGB images");
  const auto rows = choose_marked_rows(d.size(), rate, seed);
  MarkedDataset m = start(d, Method::kAnw, rows);
  for (int r : rows) rotate_hue(m.dataset.images.col(r), d.shape, static_cast<float>(hue_shift));
  m.materials.hue_shift = hue_shift;
  return m;
}

void blend_into(Eigen::Ref<Eigen::VectorXf> pixels, const Eigen::VectorXf& key, double blend_ratio) {
  const float b = static_cast<float>(blend_ratio);
  pixels = b * pixels + (1.0f - b) * key;
}

MarkedDataset embed_isotope(const LabeledDataset& d, const Image& key_image, double blend_ratio, double rate,
                            std::uint64_t seed) {
  check_rate(rate);
  if (!(key_image.shape == d.shape)) throw PreconditionError("key image shape differs from the dataset");
  if (!(blend_ratio > 0.0 && blend_ratio < 1.0)) throw PreconditionError("blend ratio must lie in (0, 1)");
  const auto rows = choose_marked_rows(d.size(), rate, seed);
  MarkedDataset m = start(d, Method::kIsotope, rows);
  for (int r : rows) blend_into(m.dataset.images.col(r), key_image.pixels, blend_ratio);
  m.materials.key_image = key_image;
  m.materials.blend_ratio = blend_ratio;
  return m;
}

MarkedDataset embed_fingerprint(const LabeledDataset& train, const LabeledDataset& heldout, int n_probe,
                                std::uint64_t seed) {
  if (n_probe < 2) throw PreconditionError("fingerprint probes need at least two samples each");
  if (n_probe > train.size() || n_probe > heldout.size()) throw PreconditionError("not enough samples for the probes");
  MarkedDataset m{train, {}};
  m.materials.method = Method::kFingerprint;
  auto pick = [&](const LabeledDataset& d, std::uint64_t stream) {
    std::vector<int> rows = iota_indices(d.size());
    Rng rng = make_rng(derive_seed(seed, stream));
    shuffle_in_place(rows, rng);
    rows.resize(static_cast<std::size_t>(n_probe));
    std::sort(rows.begin(), rows.end());
    std::vector<std::uint64_t> ids;
    for (int r : rows) ids.push_back(d.ids[static_cast<std::size_t>(r)]);
    return ids;
  };
  m.materials.train_probe_ids = pick(train, 1);
  m.materials.heldout_probe_ids = pick(heldout, 2);
  m.materials.validate();
  return m;
}

}  // namespace dovkit::dov
