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

#include "dovkit/data/io.hpp"
#include "dovkit/errors.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

namespace dovkit::curation {

namespace {
constexpr std::string_view kBankMagic = "EDOVFB01";
constexpr Eigen::Index kPredictChunk = 256;
}  // namespace

DescriptionSet descriptions_from_json(const nlohmann::json& j, const std::vector<std::string>& class_names) {
  if (!j.is_object()) throw FormatError("description file must be a JSON object");
  DescriptionSet ds;
  ds.class_names = class_names;
  for (const std::string& name : class_names) {
    if (!j.contains(name)) throw PreconditionError("no descriptions for class '" + name + "'");
    const auto& arr = j.at(name);
    if (!arr.is_array() || arr.empty()) throw PreconditionError("class '" + name + "' needs at least one description");
    std::vector<std::string> list;
    for (const auto& s : arr) {
      if (!s.is_string() || s.get<std::string>().empty()) {
        throw PreconditionError("class '" + name + "' has an empty or non-string description");
      }
      list.push_back(s.get<std::string>());
    }
    ds.descriptions.push_back(std::move(list));
  }
  return ds;
}

DescriptionSet load_descriptions(const std::filesystem::path& path, const std::vector<std::string>& class_names) {
  std::ifstream in(path);
  if (!in) throw PreconditionError("cannot open description file: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("description file " + path.string() + ": " + e.what());
  }
  return descriptions_from_json(j, class_names);
}

ClassPrototypes class_prototypes(const EmbeddingProvider& provider, const DescriptionSet& ds) {
  const int k = static_cast<int>(ds.descriptions.size());
  if (k == 0) throw PreconditionError("description set is empty");
  ClassPrototypes p;
  p.mean = Eigen::MatrixXf::Zero(provider.dim(), k);
  for (int c = 0; c < k; ++c) {
    const auto& list = ds.descriptions[static_cast<std::size_t>(c)];
    if (list.empty()) throw PreconditionError("class '" + ds.class_names[static_cast<std::size_t>(c)] + "' has no descriptions");
    for (const auto& text : list) p.mean.col(c) += provider.embed_text(text);
    p.mean.col(c) /= static_cast<float>(list.size());
  }
  p.unit = p.mean;
  for (int c = 0; c < k; ++c) {
    if (!(p.mean.col(c).norm() > 1e-6f)) {
      throw PreconditionError("prototype of class '" + ds.class_names[static_cast<std::size_t>(c)] + "' is degenerate");
    }
    p.unit.col(c).normalize();
  }
  return p;
}

std::vector<int> assign_embeddings(const Eigen::MatrixXf& embeddings, const ClassPrototypes& prototypes) {
  if (embeddings.rows() != prototypes.mean.rows()) throw ShapeMismatchError("embedding and prototype dims differ");
  // Mean of per-description cosines equals the dot with the plain mean,
  // because every embedding is unit norm.
  const Eigen::MatrixXf scores = prototypes.mean.transpose() * embeddings;
  std::vector<int> out(static_cast<std::size_t>(embeddings.cols()));
  for (Eigen::Index j = 0; j < scores.cols(); ++j) {
    int best = 0;
    for (Eigen::Index c = 1; c < scores.rows(); ++c) {
      if (scores(c, j) > scores(best, j)) best = static_cast<int>(c);
    }
    out[static_cast<std::size_t>(j)] = best;
  }
  return out;
}

GalleryBins bins_from_assignment(std::span<const int> assignment, int num_classes) {
  GalleryBins bins;
  bins.assignment.assign(assignment.begin(), assignment.end());
  bins.rows.resize(static_cast<std::size_t>(num_classes));
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    const int c = assignment[i];
    if (c == kUnassigned) continue;
    if (c < 0 || c >= num_classes) throw PreconditionError("bin assignment outside [0, K)");
    bins.rows[static_cast<std::size_t>(c)].push_back(static_cast<int>(i));
  }
  return bins;
}

GalleryBins assign_gallery(const EmbeddingProvider& provider, const LabeledDataset& gallery,
                           const ClassPrototypes& prototypes) {
  const auto a = assign_embeddings(provider.embed_dataset(gallery), prototypes);
  return bins_from_assignment(a, static_cast<int>(prototypes.mean.cols()));
}

DistributionDigest digests_from_embeddings(const Eigen::MatrixXf& embeddings, std::span<const int> labels,
                                           int num_classes) {
  if (static_cast<Eigen::Index>(labels.size()) != embeddings.cols()) throw ShapeMismatchError("labels/embeddings differ");
  DistributionDigest d;
  d.centroids = Eigen::MatrixXf::Zero(embeddings.rows(), num_classes);
  std::vector<int> counts(static_cast<std::size_t>(num_classes), 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    d.centroids.col(labels[i]) += embeddings.col(static_cast<Eigen::Index>(i));
    ++counts[static_cast<std::size_t>(labels[i])];
  }
  for (int c = 0; c < num_classes; ++c) {
    if (counts[static_cast<std::size_t>(c)] == 0) {
      throw PreconditionError("class " + std::to_string(c) + " has no samples for its digest");
    }
    d.centroids.col(c) /= static_cast<float>(counts[static_cast<std::size_t>(c)]);
  }
  return d;
}

DistributionDigest compute_digests(const EmbeddingProvider& provider, const LabeledDataset& data) {
  return digests_from_embeddings(provider.embed_dataset(data), data.labels, data.num_classes());
}

void save_feature_bank(const FeatureBank& bank, const std::filesystem::path& path) {
  if (bank.classes.size() != bank.ids.size() || bank.embeddings.cols() != static_cast<Eigen::Index>(bank.ids.size())) {
    throw ShapeMismatchError("feature bank fields differ in length");
  }
  atomic_write(path, [&](std::ostream& out) {
    out.write(kBankMagic.data(), static_cast<std::streamsize>(kBankMagic.size()));
    binio::write_u32(out, static_cast<std::uint32_t>(bank.size()));
    binio::write_u32(out, static_cast<std::uint32_t>(bank.dim()));
    for (int i = 0; i < bank.size(); ++i) {
      binio::write_u64(out, bank.ids[static_cast<std::size_t>(i)]);
      const int c = bank.classes[static_cast<std::size_t>(i)];
      binio::write_u16(out, c == kUnassigned ? kUnassignedTag : static_cast<std::uint16_t>(c));
      binio::write_f32s(out, {bank.embeddings.col(i).data(), static_cast<std::size_t>(bank.dim())});
    }
  });
}

FeatureBank load_feature_bank(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open feature bank: " + path.string());
  binio::expect_magic(in, kBankMagic, "feature bank");
  const std::uint32_t n = binio::read_u32(in);
  const std::uint32_t d = binio::read_u32(in);
  if (n > (1u << 28) || d > (1u << 16)) throw FormatError("implausible feature bank header");
  FeatureBank bank;
  bank.embeddings.resize(d, n);
  for (std::uint32_t i = 0; i < n; ++i) {
    bank.ids.push_back(binio::read_u64(in));
    const std::uint16_t c = binio::read_u16(in);
    bank.classes.push_back(c == kUnassignedTag ? kUnassigned : static_cast<int>(c));
    binio::read_f32s(in, {bank.embeddings.col(i).data(), d});
  }
  return bank;
}

FeatureBank build_feature_bank(const EmbeddingProvider& provider, const LabeledDataset& gallery,
                               const std::filesystem::path& path, const ClassPrototypes* prototypes, bool* reused) {
  if (std::filesystem::exists(path)) {
    FeatureBank bank = load_feature_bank(path);
    if (bank.dim() != provider.dim() && bank.size() > 0) {
      throw FormatError("feature bank dim " + std::to_string(bank.dim()) + " does not match provider dim " +
                        std::to_string(provider.dim()));
    }
    if (bank.ids == gallery.ids) {
      if (reused) *reused = true;
      return bank;
    }
  }
  FeatureBank bank;
  bank.ids = gallery.ids;
  bank.embeddings = provider.embed_dataset(gallery);
  if (prototypes) {
    bank.classes = assign_embeddings(bank.embeddings, *prototypes);
  } else {
    bank.classes.assign(bank.ids.size(), kUnassigned);
  }
  save_feature_bank(bank, path);
  if (reused) *reused = false;
  return bank;
}

void write_gallery_manifest(const LabeledDataset& gallery, const std::filesystem::path& path) {
  atomic_write(path, [&](std::ostream& out) {
    for (int i = 0; i < gallery.size(); ++i) {
      const std::uint64_t id = gallery.ids[static_cast<std::size_t>(i)];
      const std::string rel = static_cast<std::size_t>(i) < gallery.sources.size()
                                  ? gallery.sources[static_cast<std::size_t>(i)]
                                  : "#" + std::to_string(i);
      out << nlohmann::json{{"id", id}, {"relative_path", rel}}.dump() << '\n';
    }
  });
}

int TransferSet::size() const {
  int n = 0;
  for (const auto& v : ids) n += static_cast<int>(v.size());
  return n;
}

nlohmann::json TransferSet::to_json() const {
  return {{"ids", ids}, {"similarity", similarity}, {"quotas", quotas}, {"warnings", warnings}};
}

TransferSet TransferSet::from_json(const nlohmann::json& j) {
  TransferSet t;
  j.at("ids").get_to(t.ids);
  j.at("similarity").get_to(t.similarity);
  j.at("quotas").get_to(t.quotas);
  j.at("warnings").get_to(t.warnings);
  return t;
}

TransferSet curate_transfer_set(const FeatureBank& bank, const DistributionDigest& digest,
                                const nn::Classifier& teacher, const LabeledDataset& gallery,
                                std::span<const int> quotas) {
  const int k = static_cast<int>(digest.centroids.cols());
  if (static_cast<int>(quotas.size()) != k) throw PreconditionError("one quota per class is required");
  if (digest.centroids.rows() != bank.embeddings.rows() && bank.size() > 0) {
    throw ShapeMismatchError("digest and bank dims differ");
  }
  if (teacher.num_classes() != k) throw ShapeMismatchError("teacher K differs from the digest");
  const auto gallery_rows = gallery.row_index();
  const GalleryBins bins = bins_from_assignment(bank.classes, k);

  TransferSet t;
  t.quotas.assign(quotas.begin(), quotas.end());
  t.ids.resize(static_cast<std::size_t>(k));
  t.similarity.resize(static_cast<std::size_t>(k));
  for (int c = 0; c < k; ++c) {
    const auto& members = bins.rows[static_cast<std::size_t>(c)];
    const int quota = quotas[static_cast<std::size_t>(c)];
    std::vector<double> sim(members.size());
    for (std::size_t i = 0; i < members.size(); ++i) {
      sim[i] = cosine_similarity(bank.embeddings.col(members[i]), digest.centroids.col(c));
    }
    std::vector<std::size_t> order(members.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sim[a] > sim[b]; });

    auto& picked = t.ids[static_cast<std::size_t>(c)];
    auto& picked_sim = t.similarity[static_cast<std::size_t>(c)];
    // Walk the ranking in chunks so the teacher only sees what it must.
    for (std::size_t start = 0; start < order.size() && static_cast<int>(picked.size()) < quota;
         start += kPredictChunk) {
      const std::size_t n = std::min<std::size_t>(kPredictChunk, order.size() - start);
      std::vector<int> rows(n);
      for (std::size_t i = 0; i < n; ++i) {
        const std::uint64_t id = bank.ids[static_cast<std::size_t>(members[order[start + i]])];
        const auto it = gallery_rows.find(id);
        if (it == gallery_rows.end()) throw PreconditionError("bank id " + std::to_string(id) + " is not in the gallery");
        rows[i] = it->second;
      }
      const auto pred = teacher.predict(gather_columns(gallery.images, rows));
      for (std::size_t i = 0; i < n && static_cast<int>(picked.size()) < quota; ++i) {
        if (pred[i] != c) continue;
        picked.push_back(gallery.ids[static_cast<std::size_t>(rows[i])]);
        picked_sim.push_back(sim[order[start + i]]);
      }
    }
    if (static_cast<int>(picked.size()) < quota) {
      t.warnings.push_back("curation shortfall for class " + std::to_string(c) + ": selected " +
                           std::to_string(picked.size()) + " of " + std::to_string(quota));
    }
  }
  return t;
}

LabeledDataset materialize_transfer_set(const TransferSet& transfer, const LabeledDataset& gallery,
                                        const std::vector<std::string>& class_names) {
  std::vector<int> rows;
  std::vector<int> labels;
  const auto index = gallery.row_index();
  for (std::size_t c = 0; c < transfer.ids.size(); ++c) {
    for (std::uint64_t id : transfer.ids[c]) {
      const auto it = index.find(id);
      if (it == index.end()) throw PreconditionError("transfer id " + std::to_string(id) + " is not in the gallery");
      rows.push_back(it->second);
      labels.push_back(static_cast<int>(c));
    }
  }
  LabeledDataset out = gallery.subset(rows);
  out.labels = std::move(labels);
  out.class_names = class_names;
  return out;
}

}  // namespace dovkit::curation
