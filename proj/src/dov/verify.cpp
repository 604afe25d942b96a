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

#include "dovkit/dov/verify.hpp"

#include "dovkit/data/color.hpp"
#include "dovkit/dov/embed.hpp"
#include "dovkit/errors.hpp"
#include "dovkit/nn/loss.hpp"
#include "dovkit/random.hpp"
#include "dovkit/stats/stats.hpp"

#include <algorithm>
#include <unordered_set>

namespace dovkit::dov {

double backdoor_vsr(Method method, std::span<const int> labels, std::span<const int> clean_pred,
                    std::span<const int> triggered_pred, int target, int* eligible) {
  if (labels.size() != clean_pred.size() || labels.size() != triggered_pred.size()) {
    throw ShapeMismatchError("VSR inputs differ in length");
  }
  int den = 0;
  int hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (method == Method::kBadnets) {
      if (labels[i] == target) continue;
      ++den;
      hits += triggered_pred[i] == target;
    } else if (method == Method::kUbw) {
      if (clean_pred[i] != labels[i]) continue;
      ++den;
      hits += triggered_pred[i] != labels[i];
    } else {
      throw PreconditionError("VSR is defined for badnets and ubw only");
    }
  }
  if (eligible) *eligible = den;
  return den > 0 ? static_cast<double>(hits) / den : 0.0;
}

stats::VerificationReport verify_backdoor(const nn::Classifier& model, const LabeledDataset& test,
                                          const VerificationMaterials& m) {
  if (m.method != Method::kBadnets && m.method != Method::kUbw) {
    throw PreconditionError("verify_backdoor needs badnets or ubw materials");
  }
  if (!m.trigger) throw PreconditionError("verification materials carry no trigger");
  if (m.method == Method::kBadnets && !m.target_class) throw PreconditionError("badnets materials carry no target");
  m.trigger->check(test.shape);
  Eigen::MatrixXf triggered = test.images;
  for (Eigen::Index j = 0; j < triggered.cols(); ++j) m.trigger->apply(triggered.col(j), test.shape);
  const auto clean = model.predict(test.images);
  const auto trig = model.predict(triggered);
  int eligible = 0;
  const double vsr = backdoor_vsr(m.method, test.labels, clean, trig, m.target_class.value_or(-1), &eligible);
  auto r = stats::vsr_report(std::string(to_string(m.method)), vsr, eligible);
  int correct = 0;
  for (std::size_t i = 0; i < clean.size(); ++i) correct += clean[i] == test.labels[i];
  r.extras["clean_accuracy"] = test.empty() ? 0.0 : static_cast<double>(correct) / test.size();
  return r;
}

namespace {

std::vector<int> sample_rows(int n, int max_samples, std::uint64_t seed) {
  std::vector<int> rows = iota_indices(n);
  if (max_samples > 0 && max_samples < n) {
    Rng rng = make_rng(derive_seed(seed, 0x76657269u));
    shuffle_in_place(rows, rng);
    rows.resize(static_cast<std::size_t>(max_samples));
    std::sort(rows.begin(), rows.end());
  }
  return rows;
}

std::vector<double> true_class_confidence(const nn::Classifier& model, const Eigen::MatrixXf& x,
                                          std::span<const int> labels) {
  const Eigen::MatrixXf p = nn::softmax(model.logits(x));
  std::vector<double> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) out[i] = p(labels[i], static_cast<Eigen::Index>(i));
  return out;
}

std::vector<double> losses(const nn::Classifier& model, const Eigen::MatrixXf& x, std::span<const int> labels) {
  const Eigen::VectorXd l = nn::per_sample_cross_entropy(model.logits(x), labels);
  return {l.data(), l.data() + l.size()};
}

}  // namespace

stats::VerificationReport verify_nonpoisoning(const nn::Classifier& model, const LabeledDataset& test,
                                              const VerificationMaterials& m, const LabeledDataset* decoy_pool,
                                              const NonPoisoningOptions& opts) {
  if (m.method != Method::kAnw && m.method != Method::kIsotope) {
    throw PreconditionError("verify_nonpoisoning needs anw or isotope materials");
  }
  if (opts.n_decoys < 1) throw PreconditionError("at least one decoy is required");
  const auto rows = sample_rows(test.size(), opts.max_samples, opts.seed);
  if (rows.size() < 2) throw PreconditionError("verification needs at least two test samples");
  const LabeledDataset probe = test.subset(rows);
  Rng rng = make_rng(derive_seed(opts.seed, 0x6465636fu));

  std::vector<double> a;
  std::vector<double> b;
  stats::Alternative alt;
  nlohmann::json decoys = nlohmann::json::array();
  if (m.method == Method::kIsotope) {
    if (!m.key_image || !m.blend_ratio) throw PreconditionError("isotope materials need a key image and blend ratio");
    if (!decoy_pool || decoy_pool->empty()) throw PreconditionError("the decoy pool is empty");
    if (!(decoy_pool->shape == test.shape)) throw ShapeMismatchError("decoy pool shape differs from the test set");
    auto blended = [&](const Eigen::VectorXf& key) {
      Eigen::MatrixXf x = probe.images;
      for (Eigen::Index j = 0; j < x.cols(); ++j) blend_into(x.col(j), key, *m.blend_ratio);
      return x;
    };
    a = true_class_confidence(model, blended(m.key_image->pixels), probe.labels);
    std::vector<int> pool = iota_indices(decoy_pool->size());
    shuffle_in_place(pool, rng);
    int used = 0;
    for (int r : pool) {
      if (used == opts.n_decoys) break;
      const Eigen::VectorXf key = decoy_pool->images.col(r);
      if (key == m.key_image->pixels) continue;
      const auto conf = true_class_confidence(model, blended(key), probe.labels);
      b.insert(b.end(), conf.begin(), conf.end());
      decoys.push_back(decoy_pool->ids[static_cast<std::size_t>(r)]);
      ++used;
    }
    if (used == 0) throw PreconditionError("the decoy pool holds no image other than the key");
    alt = stats::Alternative::kAGreater;
  } else {
    if (!m.hue_shift) throw PreconditionError("anw materials need a hue shift");
    if (test.shape.channels != 3) throw PreconditionError("ANW verification needs RGB images");
    auto shifted = [&](double deg) {
      Eigen::MatrixXf x = probe.images;
      for (Eigen::Index j = 0; j < x.cols(); ++j) rotate_hue(x.col(j), test.shape, static_cast<float>(deg));
      return x;
    };
    a = losses(model, shifted(*m.hue_shift), probe.labels);
    for (int i = 0; i < opts.n_decoys; ++i) {
      const double deg = std::fmod(*m.hue_shift + 30.0 + 300.0 * uniform01(rng), 360.0);
      const auto l = losses(model, shifted(deg), probe.labels);
      b.insert(b.end(), l.begin(), l.end());
      decoys.push_back(deg);
    }
    alt = stats::Alternative::kBGreater;
  }
  const auto w = stats::welch_one_tailed(a, b, alt);
  auto r = stats::p_value_report(std::string(to_string(m.method)), w.p, static_cast<int>(a.size()));
  r.seeds = {opts.seed};
  r.extras = {{"t", w.t}, {"df", w.df}, {"n_decoys", static_cast<int>(decoys.size())}, {"decoys", decoys},
              {"mean_identifier", stats::mean_and_variance(a).mean}, {"mean_decoy", stats::mean_and_variance(b).mean},
              {"test", "welch_one_tailed"}};
  return r;
}

stats::VerificationReport verify_fingerprint(const nn::Classifier& model, const LabeledDataset& train_probe,
                                             const LabeledDataset& heldout_probe) {
  if (train_probe.size() < 2 || heldout_probe.size() < 2) {
    throw PreconditionError("fingerprint probes need at least two samples each for the Welch df");
  }
  std::unordered_set<std::uint64_t> seen(train_probe.ids.begin(), train_probe.ids.end());
  for (auto id : heldout_probe.ids) {
    if (seen.count(id)) throw PreconditionError("fingerprint probes overlap");
  }
  const auto lt = losses(model, train_probe.images, train_probe.labels);
  const auto lh = losses(model, heldout_probe.images, heldout_probe.labels);
  const auto w = stats::welch_one_tailed(lt, lh, stats::Alternative::kBGreater);
  auto r = stats::p_value_report("fingerprint", w.p, static_cast<int>(lt.size() + lh.size()));
  const double mt = stats::mean_and_variance(lt).mean;
  const double mh = stats::mean_and_variance(lh).mean;
  r.extras = {{"t", w.t}, {"df", w.df}, {"mean_train_loss", mt}, {"mean_heldout_loss", mh},
              {"loss_ratio", mt > 0.0 ? mh / mt : std::numeric_limits<double>::infinity()},
              {"test", "welch_one_tailed"}};
  return r;
}

}  // namespace dovkit::dov
