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

#include "dovkit/curation/curation.hpp"
#include "dovkit/stats/stats.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

namespace dovkit::curation {
namespace {

// Images of shape {d, 1, 1} embed as normalized(2x - 1); texts come from a
// fixed table. Gives the tests full control over the geometry.
class TableProvider : public EmbeddingProvider {
 public:
  TableProvider(int d, std::map<std::string, Eigen::VectorXf> texts) : d_(d), texts_(std::move(texts)) {}
  int dim() const override { return d_; }
  Eigen::VectorXf embed_image(const Image& image) const override {
    return normalized((2.0f * image.pixels.array() - 1.0f).matrix());
  }
  Eigen::VectorXf embed_text(std::string_view text) const override { return normalized(texts_.at(std::string(text))); }
  std::string id() const override { return "table"; }

 private:
  int d_;
  std::map<std::string, Eigen::VectorXf> texts_;
};

Eigen::VectorXf vec(std::initializer_list<float> v) {
  Eigen::VectorXf out(static_cast<Eigen::Index>(v.size()));
  std::copy(v.begin(), v.end(), out.data());
  return out;
}

// Pixels whose embedding is the direction `e` (e in [-1, 1]^d).
LabeledDataset gallery_from(const Eigen::MatrixXf& dirs) {
  LabeledDataset g;
  g.shape = {static_cast<int>(dirs.rows()), 1, 1};
  g.images = ((dirs.array() + 1.0f) * 0.5f).matrix();
  g.labels.assign(static_cast<std::size_t>(dirs.cols()), 0);
  g.class_names = default_class_names(1);
  for (Eigen::Index i = 0; i < dirs.cols(); ++i) g.ids.push_back(static_cast<std::uint64_t>(1000 + i));
  return g;
}

// Linear teacher with rows `w` acting on 2x - 1, i.e. on the embedding
// direction before normalization.
nn::Classifier linear_teacher(const Eigen::MatrixXf& w) {
  nn::Classifier m = nn::Classifier::create("linear", {static_cast<int>(w.cols()), 1, 1}, static_cast<int>(w.rows()), 1);
  m.params.setZero();
  for (const nn::ParamEntry& e : m.net.manifest()) {
    if (e.name == "fc0.weight") Eigen::Map<Eigen::MatrixXf>(m.params.data() + e.offset, w.rows(), w.cols()) = w;
  }
  return m;
}

TEST(Cosine, Examples) {
  const Eigen::VectorXf v = vec({0.3f, -2.0f, 1.0f});
  EXPECT_NEAR(cosine_similarity(v, v), 1.0, 1e-12);
  EXPECT_NEAR(cosine_similarity(vec({1, 0}), vec({0, 3})), 0.0, 1e-12);
  EXPECT_NEAR(cosine_similarity(vec({1, 0}), vec({1, 1})), 1.0 / std::sqrt(2.0), 1e-12);
  EXPECT_THROW(cosine_similarity(vec({0, 0}), vec({1, 1})), PreconditionError);
}

TEST(Prototypes, Examples) {
  TableProvider p(2, {{"a", vec({1, 0})}, {"b", vec({0, 1})}, {"c", vec({0.6f, 0.8f})}, {"neg", vec({-1, 0})}});
  DescriptionSet ds{{"x", "y", "z"}, {{"c"}, {"c", "c"}, {"a", "b"}}};
  const ClassPrototypes pr = class_prototypes(p, ds);
  EXPECT_LT((pr.unit.col(0) - vec({0.6f, 0.8f})).norm(), 1e-6f);
  EXPECT_LT((pr.unit.col(1) - pr.unit.col(0)).norm(), 1e-6f);
  EXPECT_NEAR(cosine_similarity(pr.unit.col(2), vec({1, 0})), 1.0 / std::sqrt(2.0), 1e-6);
  EXPECT_NEAR(pr.unit.col(2).norm(), 1.0f, 1e-6f);
  EXPECT_THROW(class_prototypes(p, {{"x"}, {{"a", "neg"}}}), PreconditionError);
  EXPECT_THROW(class_prototypes(p, {{"x"}, {{}}}), PreconditionError);
}

TEST(Descriptions, OrderedByClassNames) {
  const nlohmann::json j = {{"dog", {"a dog"}}, {"cat", {"a cat", "kitty"}}};
  const DescriptionSet ds = descriptions_from_json(j, {"cat", "dog"});
  EXPECT_EQ(ds.descriptions[0], (std::vector<std::string>{"a cat", "kitty"}));
  EXPECT_EQ(ds.descriptions[1], (std::vector<std::string>{"a dog"}));
  EXPECT_THROW(descriptions_from_json(j, {"cat", "dog", "owl"}), Error);
}

TEST(Assignment, ArgmaxTiesAndPartition) {
  ClassPrototypes pr;
  pr.mean.resize(2, 4);
  pr.mean << 1, 0, 1, -1, 0, 1, 1, 0;
  pr.unit = pr.mean;
  Eigen::MatrixXf e(2, 3);
  e << 0, 1, 0.6f, 1, 0, -0.8f;
  // Column 0 ties between classes 1 and 2 (both 1.0) -> 1. Column 1 ties
  // between 0 and 2 -> 0. Column 2 -> class 0 (0.6) over 3 (-0.6).
  EXPECT_EQ(assign_embeddings(e, pr), (std::vector<int>{1, 0, 0}));

  Eigen::MatrixXf proto_dir(2, 1);
  proto_dir << 0, 1;
  const LabeledDataset g = gallery_from(proto_dir);
  TableProvider p(2, {});
  const GalleryBins bins = assign_gallery(p, g, pr);
  EXPECT_EQ(bins.assignment, (std::vector<int>{1}));

  Eigen::MatrixXf many = Eigen::MatrixXf::Random(2, 200);
  const GalleryBins all = assign_gallery(p, gallery_from(many), pr);
  std::size_t total = 0;
  std::set<int> seen;
  for (const auto& b : all.rows) {
    total += b.size();
    for (int r : b) EXPECT_TRUE(seen.insert(r).second);
  }
  EXPECT_EQ(total, 200u);
}

TEST(Digests, Examples) {
  Eigen::MatrixXf e(2, 3);
  e << 1, 0, 0.6f, 0, 1, 0.8f;
  const std::vector<int> labels = {0, 1, 1};
  const DistributionDigest d = digests_from_embeddings(e, labels, 2);
  EXPECT_EQ(d.centroids.col(0), e.col(0));
  Eigen::MatrixXf twice(2, 6);
  twice << e, e;
  const std::vector<int> labels2 = {0, 1, 1, 0, 1, 1};
  EXPECT_LT((digests_from_embeddings(twice, labels2, 2).centroids - d.centroids).norm(), 1e-7f);
  EXPECT_THROW(digests_from_embeddings(e, labels, 3), PreconditionError);
}

TEST(Digests, OutliersMoveTheCentroidBoundedly) {
  // Brute force on 2-D unit vectors: clean points around angle 0, outliers
  // anywhere. With outlier fraction f the centroid's angular shift obeys
  // 1 - cos <= f (both the bound and the clean mean are unit-ish here).
  Rng rng = make_rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    const int n_clean = 90;
    const int n_out = 1 + static_cast<int>(rng() % 10);
    Eigen::MatrixXf e(2, n_clean + n_out);
    for (int i = 0; i < n_clean + n_out; ++i) {
      const double a = i < n_clean ? 0.2 * (uniform01(rng) - 0.5) : 2.0 * M_PI * uniform01(rng);
      e(0, i) = static_cast<float>(std::cos(a));
      e(1, i) = static_cast<float>(std::sin(a));
    }
    const std::vector<int> clean_labels(n_clean, 0);
    const std::vector<int> all_labels(n_clean + n_out, 0);
    const Eigen::VectorXf c0 = digests_from_embeddings(e.leftCols(n_clean), clean_labels, 1).centroids.col(0);
    const Eigen::VectorXf c1 = digests_from_embeddings(e, all_labels, 1).centroids.col(0);
    const double frac = static_cast<double>(n_out) / (n_clean + n_out);
    EXPECT_LT(1.0 - cosine_similarity(c0, c1), frac);
  }
}

TEST(FeatureBank, PersistenceEmptyAndMagic) {
  testing::TempDir tmp("bank");
  TableProvider p(3, {});
  const LabeledDataset g = gallery_from(Eigen::MatrixXf::Random(3, 17));
  bool reused = true;
  const FeatureBank b = build_feature_bank(p, g, tmp / "bank.bin", nullptr, &reused);
  EXPECT_FALSE(reused);
  const FeatureBank r = load_feature_bank(tmp / "bank.bin");
  EXPECT_EQ(r.ids, b.ids);
  EXPECT_EQ(r.classes, b.classes);
  EXPECT_EQ(r.embeddings, b.embeddings);
  build_feature_bank(p, g, tmp / "bank.bin", nullptr, &reused);
  EXPECT_TRUE(reused);
  TableProvider wide(4, {});
  EXPECT_THROW(build_feature_bank(wide, g, tmp / "bank.bin"), FormatError);

  LabeledDataset empty = g.subset(std::vector<int>{});
  const FeatureBank e = build_feature_bank(p, empty, tmp / "empty.bin");
  EXPECT_EQ(load_feature_bank(tmp / "empty.bin").size(), 0);
  EXPECT_EQ(e.size(), 0);

  {
    std::ofstream out(tmp / "bad.bin", std::ios::binary);
    out << "EDOVXX01 and some bytes";
  }
  EXPECT_THROW(load_feature_bank(tmp / "bad.bin"), FormatError);
}

struct Fixture {
  LabeledDataset gallery;
  FeatureBank bank;
  DistributionDigest digest;
  ClassPrototypes prototypes;
};

// 30 gallery points in 3-D, three classes along the axes with noise.
Fixture thirty(std::uint64_t seed) {
  Rng rng = make_rng(seed);
  Eigen::MatrixXf dirs(3, 30);
  for (int i = 0; i < 30; ++i) {
    for (int r = 0; r < 3; ++r) dirs(r, i) = static_cast<float>(uniform01(rng) * 2.0 - 1.0) * 0.6f;
    dirs(i % 3, i) = 0.9f;
  }
  Fixture f;
  f.gallery = gallery_from(dirs);
  TableProvider p(3, {});
  f.bank.ids = f.gallery.ids;
  f.bank.embeddings = p.embed_dataset(f.gallery);
  f.prototypes.mean = Eigen::MatrixXf::Identity(3, 3);
  f.prototypes.unit = f.prototypes.mean;
  f.bank.classes = assign_embeddings(f.bank.embeddings, f.prototypes);
  f.digest.centroids.resize(3, 3);
  f.digest.centroids << 1, 0.2f, 0, 0.3f, 1, 0.1f, 0, 0.2f, 1;
  return f;
}

TEST(Curate, MatchesStraightLineOracle) {
  for (std::uint64_t seed : {1, 2, 3, 4}) {
    const Fixture f = thirty(seed);
    const nn::Classifier teacher = linear_teacher(Eigen::MatrixXf::Random(3, 3) + Eigen::MatrixXf::Identity(3, 3));
    const std::vector<int> quotas = {4, 3, 20};
    const TransferSet t = curate_transfer_set(f.bank, f.digest, teacher, f.gallery, quotas);

    // Straight-line oracle: per class, score every bank row in the bin,
    // sort by score (descending, earlier row first on ties), keep rows the
    // teacher labels with the class until the quota is met.
    const std::vector<int> pred = teacher.predict(f.gallery.images);
    for (int c = 0; c < 3; ++c) {
      std::vector<std::pair<double, int>> scored;
      for (int r = 0; r < f.bank.size(); ++r) {
        if (f.bank.classes[r] != c) continue;
        const Eigen::VectorXf a = f.bank.embeddings.col(r), b = f.digest.centroids.col(c);
        scored.push_back({a.cast<double>().dot(b.cast<double>()) / (a.cast<double>().norm() * b.cast<double>().norm()), r});
      }
      std::stable_sort(scored.begin(), scored.end(), [](auto& x, auto& y) { return x.first > y.first; });
      std::vector<std::uint64_t> want;
      for (const auto& [s, r] : scored) {
        if (static_cast<int>(want.size()) == quotas[c]) break;
        if (pred[r] == c) want.push_back(f.gallery.ids[r]);
      }
      EXPECT_EQ(t.ids[c], want) << "seed " << seed << " class " << c;
    }
    // Class 2 asks for 20 out of a bin of about 10, so it must fall short.
    EXPECT_FALSE(t.warnings.empty());
  }
}

TEST(Curate, AgreeingTeacherTakesTheTopOfEachBin) {
  const Fixture f = thirty(7);
  const nn::Classifier teacher = linear_teacher(f.prototypes.mean.transpose());
  const std::vector<int> quotas = {2, 2, 2};
  const TransferSet t = curate_transfer_set(f.bank, f.digest, teacher, f.gallery, quotas);
  EXPECT_TRUE(t.warnings.empty());
  for (int c = 0; c < 3; ++c) {
    ASSERT_EQ(t.ids[c].size(), 2u);
    double lowest_kept = t.similarity[c].back();
    EXPECT_GE(t.similarity[c][0], t.similarity[c][1]);
    const auto rows = f.gallery.row_index();
    const std::set<std::uint64_t> kept(t.ids[c].begin(), t.ids[c].end());
    for (int r = 0; r < f.bank.size(); ++r) {
      if (f.bank.classes[r] != c || kept.count(f.bank.ids[r])) continue;
      EXPECT_LE(cosine_similarity(f.bank.embeddings.col(r), f.digest.centroids.col(c)), lowest_kept + 1e-12);
    }
  }
}

TEST(Curate, TeacherNeverPredictingAClassLeavesItEmpty) {
  const Fixture f = thirty(7);
  Eigen::MatrixXf w = f.prototypes.mean.transpose();
  w.row(1).setConstant(-100.0f);
  const TransferSet t = curate_transfer_set(f.bank, f.digest, linear_teacher(w), f.gallery, std::vector<int>{3, 3, 3});
  EXPECT_TRUE(t.ids[1].empty());
  ASSERT_EQ(t.warnings.size(), 1u);
  EXPECT_NE(t.warnings[0].find("class 1"), std::string::npos);
  EXPECT_NE(t.warnings[0].find("0 of 3"), std::string::npos);
}

TEST(Curate, ConsensusAndMaterialization) {
  const Fixture f = thirty(9);
  const nn::Classifier teacher = linear_teacher(Eigen::MatrixXf::Identity(3, 3));
  const TransferSet t = curate_transfer_set(f.bank, f.digest, teacher, f.gallery, std::vector<int>{5, 5, 5});
  const LabeledDataset m = materialize_transfer_set(t, f.gallery, {"a", "b", "c"});
  EXPECT_EQ(m.size(), t.size());
  const std::vector<int> pred = teacher.predict(m.images);
  const auto bank_rows = [&] {
    std::map<std::uint64_t, int> r;
    for (int i = 0; i < f.bank.size(); ++i) r[f.bank.ids[i]] = f.bank.classes[i];
    return r;
  }();
  for (int i = 0; i < m.size(); ++i) {
    EXPECT_EQ(pred[i], m.labels[i]);
    EXPECT_EQ(bank_rows.at(m.ids[i]), m.labels[i]);
  }
  EXPECT_EQ(TransferSet::from_json(t.to_json()).ids, t.ids);
}

TEST(Curate, CuratedSamplesAreCloserThanRandomOnes) {
  Rng rng = make_rng(5);
  Eigen::MatrixXf dirs = Eigen::MatrixXf::Random(4, 400);
  Fixture f;
  f.gallery = gallery_from(dirs);
  TableProvider p(4, {});
  f.bank.ids = f.gallery.ids;
  f.bank.embeddings = p.embed_dataset(f.gallery);
  f.prototypes.mean = Eigen::MatrixXf::Identity(4, 4);
  f.prototypes.unit = f.prototypes.mean;
  f.bank.classes = assign_embeddings(f.bank.embeddings, f.prototypes);
  f.digest.centroids = Eigen::MatrixXf::Identity(4, 4);
  const TransferSet t = curate_transfer_set(f.bank, f.digest, linear_teacher(f.prototypes.mean), f.gallery,
                                            std::vector<int>{15, 15, 15, 15});
  std::vector<double> curated, random;
  for (const auto& s : t.similarity) curated.insert(curated.end(), s.begin(), s.end());
  std::vector<int> rows = iota_indices(400);
  shuffle_in_place(rows, rng);
  for (std::size_t i = 0; i < curated.size(); ++i) {
    const int r = rows[i];
    random.push_back(cosine_similarity(f.bank.embeddings.col(r), f.digest.centroids.col(f.bank.classes[r])));
  }
  EXPECT_LT(stats::welch_one_tailed(random, curated, stats::Alternative::kBGreater).p, 0.01);
}

TEST(Embedding, ProjectionProviderIsDeterministicAndUnit) {
  const ImageShape shape{3, 4, 4};
  const ProjectionEmbeddingProvider a(shape, 16, 3), b(shape, 16, 3);
  const LabeledDataset d = testing::toy_dataset(5, 2, shape, 1);
  const Eigen::MatrixXf ea = a.embed_dataset(d);
  EXPECT_EQ(ea, b.embed_dataset(d));
  for (Eigen::Index j = 0; j < ea.cols(); ++j) {
    EXPECT_NEAR(ea.col(j).norm(), 1.0f, 1e-5f);
    EXPECT_LT((ea.col(j) - a.embed_image(d.image(static_cast<int>(j)))).norm(), 1e-5f);
  }
  EXPECT_EQ(a.embed_text("a red fox"), b.embed_text("a red fox"));
  EXPECT_NE(a.id(), ProjectionEmbeddingProvider(shape, 16, 4).id());
}

TEST(Embedding, FileProviderLooksUpByContentHash) {
  testing::TempDir tmp("embfile");
  const LabeledDataset d = testing::toy_dataset(2, 2, {3, 2, 2}, 1);
  const nlohmann::json j = {{"dim", 2},
                            {"images", {{image_content_hash(d.image(0)), {3.0, 4.0}}}},
                            {"texts", {{"cat", {0.0, 2.0}}}}};
  {
    std::ofstream out(tmp / "e.json");
    out << j.dump();
  }
  const FileEmbeddingProvider p(tmp / "e.json");
  EXPECT_EQ(p.dim(), 2);
  EXPECT_LT((p.embed_image(d.image(0)) - vec({0.6f, 0.8f})).norm(), 1e-6f);
  EXPECT_LT((p.embed_text("cat") - vec({0, 1})).norm(), 1e-6f);
  EXPECT_THROW(p.embed_image(d.image(1)), PreconditionError);
  EXPECT_THROW(p.embed_text("dog"), PreconditionError);
}

}  // namespace
}  // namespace dovkit::curation
