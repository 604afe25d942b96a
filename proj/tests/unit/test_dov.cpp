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

#include "dovkit/data/color.hpp"
#include "dovkit/dov/embed.hpp"
#include "dovkit/dov/verify.hpp"
#include "dovkit/errors.hpp"
#include "dovkit/nn/train.hpp"
#include "test_util.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <gtest/gtest.h>

#include <set>

namespace dovkit::dov {
namespace {

// A linear classifier whose logits are the given constants for every input.
nn::Classifier constant_model(ImageShape shape, std::vector<float> logits) {
  nn::Classifier m = nn::Classifier::create("linear", shape, static_cast<int>(logits.size()), 1);
  m.params.setZero();
  for (const nn::ParamEntry& e : m.net.manifest()) {
    if (e.name == "fc0.bias") {
      for (std::size_t k = 0; k < logits.size(); ++k) m.params[e.offset + static_cast<Eigen::Index>(k)] = logits[k];
    }
  }
  return m;
}

TEST(Badnets, MarksExactlyTheRateAndRelabels) {
  const LabeledDataset d = testing::toy_dataset(10000, 10, {3, 4, 4}, 1);
  const TriggerPattern trig = TriggerPattern::corner_checkerboard(d.shape, 2);
  const MarkedDataset m = embed_badnets(d, trig, 3, 0.10, 5);
  ASSERT_EQ(m.materials.marked_ids.size(), 1000u);
  const std::set<std::uint64_t> marked(m.materials.marked_ids.begin(), m.materials.marked_ids.end());
  for (int i = 0; i < d.size(); ++i) {
    if (marked.count(d.ids[i])) {
      EXPECT_EQ(m.dataset.labels[i], 3);
      // Masked pixels equal the patch; the rest of the image is untouched.
      Eigen::VectorXf expect = d.images.col(i);
      trig.apply(expect, d.shape);
      EXPECT_EQ(m.dataset.images.col(i), expect);
    } else {
      EXPECT_EQ(m.dataset.labels[i], d.labels[i]);
      EXPECT_EQ(m.dataset.images.col(i), d.images.col(i));
    }
  }
  EXPECT_EQ(embed_badnets(d, trig, 3, 0.10, 5).materials.marked_ids, m.materials.marked_ids);
}

TEST(Badnets, PatchValuesAreCompositedExactly) {
  const ImageShape shape{3, 6, 6};
  const TriggerPattern trig = TriggerPattern::corner_checkerboard(shape, 3);
  Eigen::VectorXf px = Eigen::VectorXf::Constant(shape.size(), 0.5f);
  trig.apply(px, shape);
  const Image img(shape, px);
  // One pixel in from the bottom-right corner; top-left of the patch is white.
  EXPECT_EQ(img.at(0, 2, 2), 1.0f);
  EXPECT_EQ(img.at(1, 2, 3), 0.0f);
  EXPECT_EQ(img.at(2, 4, 4), 1.0f);
  EXPECT_EQ(img.at(0, 5, 5), 0.5f);
  EXPECT_EQ(img.at(0, 1, 1), 0.5f);
}

TEST(Badnets, ZeroMarkedSamplesAndErrors) {
  const LabeledDataset d = testing::toy_dataset(9, 3, {3, 4, 4}, 1);
  const TriggerPattern trig = TriggerPattern::corner_checkerboard(d.shape, 2);
  const MarkedDataset m = embed_badnets(d, trig, 0, 0.1, 5);
  EXPECT_TRUE(m.materials.marked_ids.empty());
  EXPECT_EQ(m.dataset.images, d.images);
  EXPECT_EQ(m.dataset.labels, d.labels);
  EXPECT_THROW(embed_badnets(d, trig, 0, 0.0, 5), PreconditionError);
  EXPECT_THROW(embed_badnets(d, TriggerPattern::checkerboard(3, 3, 3, 3), 0, 0.5, 5), PreconditionError);
}

TEST(Ubw, TwoClassesAlwaysFlip) {
  const LabeledDataset d = testing::toy_dataset(200, 2, {3, 4, 4}, 1);
  const MarkedDataset m = embed_ubw(d, TriggerPattern::corner_checkerboard(d.shape, 2), 0.5, 3);
  const auto rows = d.rows_of(m.materials.marked_ids);
  ASSERT_EQ(rows.size(), 100u);
  for (int r : rows) EXPECT_EQ(m.dataset.labels[r], 1 - d.labels[r]);
}

TEST(Ubw, WrongLabelsAreUniform) {
  const LabeledDataset d = testing::toy_dataset(10000, 10, {3, 4, 4}, 1);
  const MarkedDataset m = embed_ubw(d, TriggerPattern::corner_checkerboard(d.shape, 2), 0.10, 11);
  const auto rows = d.rows_of(m.materials.marked_ids);
  ASSERT_EQ(rows.size(), 1000u);
  // Histogram of (new - old) mod K over the nine wrong offsets.
  std::vector<int> hist(9, 0);
  for (int r : rows) {
    const int off = (m.dataset.labels[r] - d.labels[r] + 10) % 10;
    ASSERT_NE(off, 0);
    ++hist[off - 1];
  }
  double chi2 = 0.0;
  const double expected = 1000.0 / 9.0;
  for (int h : hist) chi2 += (h - expected) * (h - expected) / expected;
  const boost::math::chi_squared dist(8);
  EXPECT_GT(boost::math::cdf(boost::math::complement(dist, chi2)), 0.001) << "chi2 = " << chi2;
  EXPECT_EQ(embed_ubw(d, TriggerPattern::corner_checkerboard(d.shape, 2), 0.10, 11).materials.marked_ids,
            m.materials.marked_ids);
  EXPECT_THROW(embed_ubw(testing::toy_dataset(4, 1, {3, 4, 4}, 1), TriggerPattern::corner_checkerboard(d.shape, 2), 0.5, 1),
               PreconditionError);
}

TEST(Anw, FullTurnIsIdentityAndLabelsStay) {
  const LabeledDataset d = testing::toy_dataset(50, 5, {3, 4, 4}, 1);
  const MarkedDataset m = embed_anw(d, 360.0, 1.0, 2);
  EXPECT_LE((m.dataset.images - d.images).cwiseAbs().maxCoeff(), 1e-6f);
  EXPECT_EQ(m.dataset.labels, d.labels);
  const MarkedDataset half = embed_anw(d, 180.0, 0.2, 2);
  EXPECT_EQ(half.dataset.labels, d.labels);
  EXPECT_THROW(embed_anw(d, 0.0, 0.2, 2), PreconditionError);
  EXPECT_THROW(embed_anw(d, 361.0, 0.2, 2), PreconditionError);
  EXPECT_THROW(embed_anw(testing::toy_dataset(4, 2, {1, 4, 4}, 1), 90.0, 0.5, 2), PreconditionError);
}

TEST(Anw, RedBecomesGreen) {
  LabeledDataset d = testing::toy_dataset(1, 1, {3, 1, 1}, 1);
  d.images.col(0) << 1.0f, 0.0f, 0.0f;
  const MarkedDataset m = embed_anw(d, 120.0, 1.0, 2);
  EXPECT_NEAR(m.dataset.images(0, 0), 0.0f, 1e-6f);
  EXPECT_NEAR(m.dataset.images(1, 0), 1.0f, 1e-6f);
  EXPECT_NEAR(m.dataset.images(2, 0), 0.0f, 1e-6f);
}

TEST(Isotope, BlendAndFixedPoint) {
  const LabeledDataset d = testing::toy_dataset(20, 2, {3, 4, 4}, 1);
  const Image key(d.shape, Eigen::VectorXf::Constant(d.shape.size(), 1.0f));
  const MarkedDataset m = embed_isotope(d, key, 0.9, 1.0, 2);
  for (Eigen::Index i = 0; i < d.images.size(); ++i) {
    EXPECT_NEAR(m.dataset.images.data()[i], 0.9f * d.images.data()[i] + 0.1f, 1e-6f);
  }
  EXPECT_EQ(m.dataset.labels, d.labels);
  LabeledDataset same = d;
  same.images.col(0) = key.pixels;
  EXPECT_EQ(embed_isotope(same, key, 0.9, 1.0, 2).dataset.images.col(0), key.pixels);
  EXPECT_THROW(embed_isotope(d, key, 1.0, 0.5, 2), PreconditionError);
  EXPECT_THROW(embed_isotope(d, Image({3, 5, 4}, Eigen::VectorXf::Zero(60)), 0.9, 0.5, 2), PreconditionError);
}

TEST(Vsr, ConstantTargetModelScoresOne) {
  const LabeledDataset test = testing::toy_dataset(100, 10, {3, 4, 4}, 3);
  const MarkedDataset m = embed_badnets(test, TriggerPattern::corner_checkerboard(test.shape, 2), 4, 0.1, 1);
  std::vector<float> logits(10, 0.0f);
  logits[4] = 5.0f;
  const stats::VerificationReport r = verify_backdoor(constant_model(test.shape, logits), test, m.materials);
  EXPECT_EQ(r.value, 1.0);
  EXPECT_TRUE(r.detected);
  EXPECT_EQ(r.n_samples, 90);
}

TEST(Vsr, TriggerBlindModelScoresItsConfusionRate) {
  // A model that ignores the trigger: triggered predictions equal clean ones,
  // so BadNets VSR is the clean confusion rate into the target.
  const std::vector<int> labels = {0, 1, 2, 3, 1, 2};
  const std::vector<int> pred = {0, 1, 0, 3, 0, 2};
  EXPECT_DOUBLE_EQ(backdoor_vsr(Method::kBadnets, labels, pred, pred, 0), 2.0 / 5.0);
}

TEST(Vsr, UniformRandomPredictorIsAboutATenth) {
  Rng rng = make_rng(17);
  double total = 0.0;
  const int trials = 200, n = 1000;
  for (int t = 0; t < trials; ++t) {
    std::vector<int> labels, clean, trig;
    for (int i = 0; i < n; ++i) {
      labels.push_back(static_cast<int>(rng() % 10));
      clean.push_back(static_cast<int>(rng() % 10));
      trig.push_back(static_cast<int>(rng() % 10));
    }
    total += backdoor_vsr(Method::kBadnets, labels, clean, trig, 0);
  }
  EXPECT_NEAR(total / trials, 0.10, 0.005);
}

TEST(NonPoisoning, IndifferentModelIsNotDetected) {
  const LabeledDataset test = testing::toy_dataset(60, 3, {3, 4, 4}, 3);
  const LabeledDataset gallery = testing::toy_dataset(40, 3, {3, 4, 4}, 9);
  const nn::Classifier flat = constant_model(test.shape, {0.3f, 0.1f, -0.2f});
  NonPoisoningOptions opts;
  opts.seed = 4;

  const Image key(test.shape, Eigen::VectorXf::Constant(test.shape.size(), 0.4f));
  MarkedDataset iso = embed_isotope(test, key, 0.9, 0.1, 1);
  stats::VerificationReport r = verify_nonpoisoning(flat, test, iso.materials, &gallery, opts);
  EXPECT_NEAR(r.value, 0.5, 1e-9);
  EXPECT_FALSE(r.detected);
  EXPECT_THROW(verify_nonpoisoning(flat, test, iso.materials, nullptr, opts), PreconditionError);
  const LabeledDataset empty_pool;
  EXPECT_THROW(verify_nonpoisoning(flat, test, iso.materials, &empty_pool, opts), PreconditionError);

  MarkedDataset anw = embed_anw(test, 180.0, 0.1, 1);
  r = verify_nonpoisoning(flat, test, anw.materials, nullptr, opts);
  EXPECT_NEAR(r.value, 0.5, 1e-9);
  EXPECT_FALSE(r.detected);
}

TEST(Fingerprint, EqualLossesAndErrors) {
  const LabeledDataset d = testing::toy_dataset(40, 2, {3, 4, 4}, 3);
  const nn::Classifier flat = constant_model(d.shape, {0.0f, 0.0f});
  const std::vector<int> a = {0, 1, 2, 3, 4, 5, 6, 7}, b = {8, 9, 10, 11, 12, 13, 14, 15};
  const stats::VerificationReport r = verify_fingerprint(flat, d.subset(a), d.subset(b));
  EXPECT_NEAR(r.value, 0.5, 1e-9);
  EXPECT_FALSE(r.detected);
  const std::vector<int> one = {0}, other = {1};
  EXPECT_THROW(verify_fingerprint(flat, d.subset(one), d.subset(other)), PreconditionError);
  EXPECT_THROW(verify_fingerprint(flat, d.subset(a), d.subset(a)), PreconditionError);
}

TEST(Fingerprint, OverfitModelShowsALossGap) {
  // Random labels can only be memorized, so held-out loss stays near log K
  // while training loss goes to zero.
  LabeledDataset all = testing::toy_dataset(200, 4, {3, 4, 4}, 3);
  Rng rng = make_rng(8);
  for (int& y : all.labels) y = static_cast<int>(rng() % 4);
  std::vector<int> train_rows = iota_indices(100), held_rows;
  for (int i = 100; i < 200; ++i) held_rows.push_back(i);
  const LabeledDataset train = all.subset(train_rows);
  nn::TrainConfig cfg;
  cfg.architecture = "mlp-128";
  cfg.epochs = 300;
  cfg.batch_size = 20;
  cfg.learning_rate = 0.05;
  cfg.weight_decay = 0.0;
  const nn::Classifier m = nn::train_classifier(train, cfg, 3);
  std::vector<int> tp, hp;
  for (int i = 0; i < 50; ++i) {
    tp.push_back(i);
    hp.push_back(100 + i);
  }
  const stats::VerificationReport r = verify_fingerprint(m, all.subset(tp), all.subset(hp));
  EXPECT_LT(r.value, 0.01);
  EXPECT_TRUE(r.detected);
  EXPECT_GE(r.extras.at("loss_ratio").get<double>(), 5.0);
}

TEST(Fingerprint, ProbesAreDisjointAndSeeded) {
  const LabeledDataset train = testing::toy_dataset(300, 3, {3, 4, 4}, 3);
  LabeledDataset held = testing::toy_dataset(300, 3, {3, 4, 4}, 4);
  for (auto& id : held.ids) id += 1000;
  const MarkedDataset a = embed_fingerprint(train, held, 100, 6);
  const MarkedDataset b = embed_fingerprint(train, held, 100, 6);
  EXPECT_EQ(a.materials.train_probe_ids, b.materials.train_probe_ids);
  EXPECT_EQ(a.materials.heldout_probe_ids, b.materials.heldout_probe_ids);
  EXPECT_EQ(a.dataset.images, train.images);
  EXPECT_EQ(a.materials.train_probe_ids.size(), 100u);
  EXPECT_EQ(std::set<std::uint64_t>(a.materials.heldout_probe_ids.begin(), a.materials.heldout_probe_ids.end()).size(), 100u);
  EXPECT_THROW(embed_fingerprint(train, held, 1, 6), PreconditionError);
}

TEST(Materials, JsonRoundTrip) {
  const LabeledDataset d = testing::toy_dataset(30, 3, {3, 4, 4}, 3);
  LabeledDataset heldout = testing::toy_dataset(10, 3, {3, 4, 4}, 4);
  for (auto& id : heldout.ids) id += 100;
  Rng rng = make_rng(2);
  Eigen::VectorXf key(d.shape.size());
  for (Eigen::Index i = 0; i < key.size(); ++i) key[i] = dequantize_u8(static_cast<std::uint8_t>(rng() % 256));
  for (const MarkedDataset& m : {embed_badnets(d, TriggerPattern::corner_checkerboard(d.shape, 2), 1, 0.2, 1),
                                 embed_ubw(d, TriggerPattern::corner_checkerboard(d.shape, 3), 0.2, 1),
                                 embed_anw(d, 75.0, 0.2, 1), embed_isotope(d, Image(d.shape, key), 0.9, 0.2, 1),
                                 embed_fingerprint(d, heldout, 5, 1)}) {
    const VerificationMaterials r = materials_from_json(to_json(m.materials));
    EXPECT_EQ(to_json(r), to_json(m.materials));
    EXPECT_EQ(r.marked_ids, m.materials.marked_ids);
    if (m.materials.key_image) {
      EXPECT_EQ(r.key_image->pixels, key);
    }
    if (m.materials.trigger) {
      EXPECT_EQ(*r.trigger, *m.materials.trigger);
    }
  }
  EXPECT_THROW(parse_method("narcissus"), ValidationError);
  EXPECT_THROW(materials_from_json(nlohmann::json{{"method", "badnets"}}), FormatError);
}

}  // namespace
}  // namespace dovkit::dov
