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

// Desk-scale acceptance run. Prints one PASS/FAIL line per criterion and
// exits non-zero when any criterion fails.
//
// usage: acceptance <config_dir> <work_dir>

#include "dovkit/curation/curation.hpp"
#include "dovkit/data/io.hpp"
#include "dovkit/dov/materials.hpp"
#include "dovkit/dov/verify.hpp"
#include "dovkit/errors.hpp"
#include "dovkit/nn/checkpoint.hpp"
#include "dovkit/nn/classifier.hpp"
#include "dovkit/pipeline/config.hpp"
#include "dovkit/pipeline/pipeline.hpp"
#include "dovkit/random.hpp"
#include "dovkit/skt/corruption.hpp"
#include "dovkit/skt/perturbation.hpp"
#include "dovkit/stats/barrier.hpp"
#include "dovkit/stats/stats.hpp"
#include "dovkit/synth/world.hpp"
#include "grad_check.hpp"
#include "welch_fixtures.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <map>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

namespace fs = std::filesystem;
using dovkit::LabeledDataset;
using nlohmann::json;
namespace pl = dovkit::pipeline;

namespace {

// Tolerances and thresholds, fixed here rather than read from anywhere.
constexpr double kBadnetsTeacherVsrMin = 0.90;
constexpr double kBadnetsStudentVsrMax = 0.10;
constexpr double kAccuracyDropMax = 0.10;
constexpr double kRuntimeMaxSeconds = 30.0 * 60.0;
constexpr double kUbwTeacherVsrMin = 0.60;
constexpr double kUbwStudentVsrMax = 0.15;
constexpr double kTeacherPMax = 0.01;
constexpr double kStudentPMin = 0.05;
constexpr double kFingerprintTeacherRatioMin = 5.0;
constexpr double kFingerprintStudentRatioMax = 2.0;
constexpr double kSelfSpreadMax = 0.20;
constexpr double kCurationPMax = 0.01;
constexpr double kEntropyFraction = 0.9;
constexpr double kWelchTolerance = 1e-6;
constexpr double kPoolRatioMin = 1.5;
constexpr int kRandomChains = 50;
constexpr double kGradientTolerance = 1e-4;
constexpr std::uint64_t kAcceptanceSeed = 2024;

struct Line {
  int id;
  std::string name;
  bool pass;
  std::string detail;
};

std::vector<Line> g_lines;

void record(int id, std::string name, bool pass, std::string detail) {
  std::printf("criterion %2d %-22s %s  %s\n", id, name.c_str(), pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  g_lines.push_back({id, std::move(name), pass, std::move(detail)});
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw dovkit::FormatError("cannot open " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

json read_json(const fs::path& p) { return json::parse(read_bytes(p)); }

// One finished pipeline run with its loaded artifacts.
struct Run {
  pl::ExperimentConfig cfg;
  pl::RunManifest manifest;
  double seconds = 0.0;

  fs::path artifact(const std::string& stage, const std::string& name) const {
    const pl::StageRecord* s = manifest.stage(stage);
    if (!s || !s->artifacts.count(name)) throw dovkit::Error("missing artifact " + stage + "/" + name);
    return s->artifacts.at(name);
  }
  LabeledDataset dataset(const std::string& stage, const std::string& name) const {
    return dovkit::load_dataset(artifact(stage, name), dovkit::DatasetFormat::kPackedBinary);
  }
  dovkit::nn::Classifier model(const std::string& stage, const std::string& name) const {
    return dovkit::nn::load_checkpoint(artifact(stage, name)).model;
  }
  const dovkit::stats::VerificationReport& teacher() const { return *manifest.teacher_report; }
  const dovkit::stats::VerificationReport& student() const { return *manifest.student_report; }
};

pl::PipelineOptions quiet_options(const std::string& tag) {
  pl::PipelineOptions o;
  o.log = [tag](const std::string& line) { std::fprintf(stderr, "  [%s] %s\n", tag.c_str(), line.c_str()); };
  return o;
}

Run run_config(const pl::ExperimentConfig& cfg, const std::string& tag) {
  Run r;
  r.cfg = cfg;
  const auto t0 = std::chrono::steady_clock::now();
  r.manifest = pl::run_pipeline(cfg, quiet_options(tag));
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

// Fresh output directory, so every stage runs and the runtime is honest.
Run run_fresh(const fs::path& config_dir, const fs::path& work, const std::string& method) {
  pl::ExperimentConfig cfg = pl::load_experiment_config(config_dir / (method + ".toml"));
  cfg.output_dir = work / method;
  fs::remove_all(cfg.output_dir);
  std::fprintf(stderr, "running %s into %s\n", method.c_str(), cfg.output_dir.c_str());
  return run_config(cfg, method);
}

double extra(const dovkit::stats::VerificationReport& r, const char* key) { return r.extras.at(key).get<double>(); }

// ---------------------------------------------------------------------------

void check_statistics() {
  using namespace dovkit::stats;
  bool ok = true;
  double worst = 0.0;
  for (const auto& f : dovkit::testing::welch_fixtures()) {
    const WelchResult w = welch_one_tailed(f.a, f.b, Alternative::kBGreater);
    worst = std::max({worst, std::abs(w.t - f.t), std::abs(w.df - f.df), std::abs(w.p - f.p)});
  }
  ok = ok && worst <= kWelchTolerance && dovkit::testing::welch_fixtures().size() == 5;

  const bool hm = harmonic_mean_p(std::vector<double>{0.2, 0.2}) == 2.0 / (1.0 / 0.2 + 1.0 / 0.2) &&
                  harmonic_mean_p(std::vector<double>{0.01, 1.0}) == 2.0 / 101.0;
  const bool ent = annotation_entropy(std::vector<int>{3, 3, 3}, 10) == 0.0 &&
                   annotation_entropy(std::vector<int>{0, 0, 1, 1}, 2) == 1.0 &&
                   annotation_entropy(std::vector<int>{0, 1, 2, 3}, 4) == 2.0;

  // VSR against an exhaustive per-sample count on 100-sample fixtures.
  bool vsr = true;
  dovkit::Rng rng = dovkit::make_rng(77);
  for (int trial = 0; trial < 25; ++trial) {
    const int n = 100;
    const int target = static_cast<int>(rng() % 10);
    std::vector<int> labels(n), clean(n), trig(n);
    for (int i = 0; i < n; ++i) {
      labels[i] = static_cast<int>(rng() % 10);
      clean[i] = rng() % 4 == 0 ? static_cast<int>(rng() % 10) : labels[i];
      trig[i] = rng() % 3 == 0 ? target : static_cast<int>(rng() % 10);
    }
    int hits = 0, eligible = 0;
    for (int i = 0; i < n; ++i) {
      if (labels[i] == target) continue;
      ++eligible;
      hits += trig[i] == target;
    }
    vsr = vsr && dovkit::dov::backdoor_vsr(dovkit::dov::Method::kBadnets, labels, clean, trig, target) ==
                     static_cast<double>(hits) / eligible;
    hits = eligible = 0;
    for (int i = 0; i < n; ++i) {
      if (clean[i] != labels[i]) continue;
      ++eligible;
      hits += trig[i] != labels[i];
    }
    vsr = vsr && dovkit::dov::backdoor_vsr(dovkit::dov::Method::kUbw, labels, clean, trig, target) ==
                     static_cast<double>(hits) / eligible;
  }
  record(10, "statistical-oracles", ok && hm && ent && vsr,
         "welch max abs err " + fmt("%.2e", worst) + ", harmonic " + (hm ? "exact" : "MISMATCH") + ", entropy " +
             (ent ? "exact" : "MISMATCH") + ", vsr " + (vsr ? "exact" : "MISMATCH"));
}

void check_backdoor(int id, const char* name, const Run& r, double teacher_min, double student_max, bool timed) {
  const double tv = r.teacher().value;
  const double sv = r.student().value;
  const double drop = *r.manifest.teacher_accuracy - *r.manifest.student_accuracy;
  bool pass = tv >= teacher_min && sv <= student_max;
  std::string d = "teacher VSR " + fmt("%.4f", tv) + ", student VSR " + fmt("%.4f", sv);
  if (timed) {
    pass = pass && drop <= kAccuracyDropMax && r.seconds <= kRuntimeMaxSeconds;
    d += ", acc " + fmt("%.4f", *r.manifest.teacher_accuracy) + " -> " + fmt("%.4f", *r.manifest.student_accuracy) +
         ", runtime " + fmt("%.0f", r.seconds) + " s";
  }
  record(id, name, pass, d);
}

void check_pvalue(int id, const char* name, const Run& r) {
  const double tp = r.teacher().value;
  const double sp = r.student().value;
  record(id, name, tp < kTeacherPMax && sp > kStudentPMin,
         "teacher p " + fmt("%.3g", tp) + ", student p " + fmt("%.3g", sp));
}

void check_fingerprint(const Run& r) {
  const double tr = extra(r.teacher(), "loss_ratio");
  const double sr = extra(r.student(), "loss_ratio");
  const double tp = r.teacher().value;
  const double sp = r.student().value;
  record(5, "fingerprint-loss-gap",
         tr >= kFingerprintTeacherRatioMin && tp < kTeacherPMax && sr < kFingerprintStudentRatioMax && sp > kStudentPMin,
         "teacher ratio " + fmt("%.2f", tr) + " p " + fmt("%.3g", tp) + ", student ratio " + fmt("%.2f", sr) + " p " +
             fmt("%.3g", sp));
}

void check_barrier(const Run& r) {
  // The report stage wrote the evasion-pair profile.
  std::ifstream in(r.artifact("report", "barrier"));
  std::string header;
  std::getline(in, header);
  std::map<double, double> train;
  double a, tr, te;
  while (in >> a >> tr >> te) train[std::round(a * 10.0) / 10.0] = tr;
  double interior = -1.0;
  for (const auto& [alpha, loss] : train) {
    if (alpha > 0.05 && alpha < 0.95) interior = std::max(interior, loss);
  }
  const bool have = train.count(0.0) && train.count(1.0) && train.size() == 11;
  const bool barrier = have && interior > train[0.0] && interior > train[1.0];

  const auto teacher = r.model("train-teacher", "teacher");
  const LabeledDataset test = r.dataset("data", "test");
  const LabeledDataset marked = r.dataset("mark", "marked");
  const auto self = dovkit::stats::loss_barrier(teacher, teacher, marked, test);
  const double spread = self.train_relative_spread();
  record(6, "loss-barrier", barrier && spread <= kSelfSpreadMax,
         "endpoints " + fmt("%.4f", train[0.0]) + " / " + fmt("%.4f", train[1.0]) + ", interior max " +
             fmt("%.4f", interior) + ", self spread " + fmt("%.3f", spread));
}

void check_curation(const Run& r) {
  const auto bank = dovkit::curation::load_feature_bank(r.artifact("bank", "bank"));
  const auto ts = dovkit::curation::TransferSet::from_json(read_json(r.artifact("curate", "transfer")));
  const LabeledDataset marked = r.dataset("mark", "marked");
  dovkit::synth::AttributeEncoder enc;
  const auto digest = dovkit::curation::compute_digests(enc, marked);

  std::vector<double> curated;
  for (const auto& s : ts.similarity) curated.insert(curated.end(), s.begin(), s.end());

  // A uniform gallery sample of the same size, scored against the digest of
  // the bin each image fell into.
  std::vector<int> rows;
  for (int i = 0; i < bank.size(); ++i) {
    if (bank.classes[static_cast<std::size_t>(i)] != dovkit::curation::kUnassigned) rows.push_back(i);
  }
  dovkit::Rng rng = dovkit::make_rng(kAcceptanceSeed);
  dovkit::shuffle_in_place(rows, rng);
  rows.resize(std::min(rows.size(), curated.size()));
  std::vector<double> random;
  for (int i : rows) {
    const int k = bank.classes[static_cast<std::size_t>(i)];
    random.push_back(dovkit::curation::cosine_similarity(bank.embeddings.col(i), digest.centroids.col(k)));
  }
  const auto w = dovkit::stats::welch_one_tailed(random, curated, dovkit::stats::Alternative::kBGreater);
  const double mc = dovkit::stats::mean_and_variance(curated).mean;
  const double mr = dovkit::stats::mean_and_variance(random).mean;
  record(7, "curation-quality", mc > mr && w.p < kCurationPMax && curated.size() == random.size(),
         "curated " + fmt("%.4f", mc) + " vs random " + fmt("%.4f", mr) + " (n " + std::to_string(curated.size()) +
             "), p " + fmt("%.3g", w.p));
}

void check_entropy(const Run& r) {
  const auto ts = dovkit::curation::TransferSet::from_json(read_json(r.artifact("curate", "transfer")));
  const LabeledDataset gallery = r.dataset("data", "gallery");
  const LabeledDataset marked = r.dataset("mark", "marked");
  const LabeledDataset t = dovkit::curation::materialize_transfer_set(ts, gallery, marked.class_names);
  const auto teacher = r.model("train-teacher", "teacher");
  const std::vector<int> labels = teacher.predict(t.images);
  const int k = marked.num_classes();
  const double h = dovkit::stats::annotation_entropy(labels, k);
  const double bound = kEntropyFraction * std::log2(static_cast<double>(k));
  record(8, "annotation-entropy", h >= bound,
         "entropy " + fmt("%.4f", h) + " bits, bound " + fmt("%.4f", bound) + " (n " + std::to_string(t.size()) + ")");
}

void check_ablation(const Run& isotope) {
  pl::ExperimentConfig cfg = isotope.cfg;
  cfg.student.skt.tau = 4.0;
  const Run with = run_config(cfg, "isotope tau=4 skt");
  cfg.student.skt.op_probs = {1.0, 0.0, 0.0};
  const Run without = run_config(cfg, "isotope tau=4 plain");
  const double ps = with.student().value;
  const double pp = without.student().value;
  record(9, "skt-ablation", ps >= pp, "student p with SKT " + fmt("%.3g", ps) + ", without " + fmt("%.3g", pp));
}

void check_pool_and_chain(const Run& r) {
  const auto teacher = r.model("train-teacher", "teacher");
  const LabeledDataset test = r.dataset("data", "test");
  const auto pool = dovkit::skt::load_pool(r.artifact("gen-pool", "pool"));
  const double clean = dovkit::nn::mean_loss(teacher, test);
  double min_ratio = std::numeric_limits<double>::infinity();
  for (const auto& p : pool) {
    LabeledDataset perturbed = test;
    perturbed.images = dovkit::skt::apply_perturbation(test.images, p.delta);
    min_ratio = std::min(min_ratio, dovkit::nn::mean_loss(teacher, perturbed) / clean);
  }

  // Random chains scored on the GA's own batch and noise seed.
  const json search = read_json(r.artifact("gen-chain", "search"));
  const auto batch_rows = search.at("batch_rows").get<std::vector<int>>();
  const auto noise_seed = search.at("noise_seed").get<std::uint64_t>();
  const double best = search.at("best_fitness").get<double>();
  const LabeledDataset marked = r.dataset("mark", "marked");
  const LabeledDataset batch = marked.subset(batch_rows);
  dovkit::Rng rng = dovkit::make_rng(kAcceptanceSeed);
  std::vector<double> fits;
  for (int i = 0; i < kRandomChains; ++i) {
    const auto chain = dovkit::skt::random_chain(r.cfg.chain.ga.chain_length, rng);
    fits.push_back(dovkit::skt::chain_fitness(teacher, batch.images, batch.labels, batch.shape, chain, noise_seed));
  }
  std::sort(fits.begin(), fits.end());
  const double median = 0.5 * (fits[kRandomChains / 2 - 1] + fits[kRandomChains / 2]);

  double grad = 0.0;
  grad = std::max(grad, dovkit::testing::gradient_check("resnet-mini-w4", {3, 8, 8}, 5).param_rel);
  for (const char* arch : {"mlp-7", "linear"}) {
    const auto g = dovkit::testing::gradient_check(arch, {2, 3, 3}, 9);
    grad = std::max({grad, g.param_rel, g.input_rel});
  }
  record(11, "pool-chain-gradient",
         !pool.empty() && min_ratio >= kPoolRatioMin && best >= median && grad <= kGradientTolerance,
         "min pool loss ratio " + fmt("%.2f", min_ratio) + " over " + std::to_string(pool.size()) +
             ", GA best " + fmt("%.3f", best) + " vs random median " + fmt("%.3f", median) + ", grad rel err " +
             fmt("%.2e", grad));
}

bool resave_identical(const fs::path& original, const fs::path& scratch, const std::function<void(const fs::path&)>& save) {
  save(scratch);
  return read_bytes(original) == read_bytes(scratch);
}

void check_persistence(const Run& badnets, const fs::path& work) {
  const fs::path scratch = work / "roundtrip";
  fs::create_directories(scratch);
  const fs::path bank_path = badnets.artifact("bank", "bank");
  const fs::path pool_path = badnets.artifact("gen-pool", "pool");
  const fs::path ckpt_path = badnets.artifact("train-teacher", "teacher");
  const bool bank = resave_identical(bank_path, scratch / "bank.bin", [&](const fs::path& p) {
    dovkit::curation::save_feature_bank(dovkit::curation::load_feature_bank(bank_path), p);
  });
  const bool pool = resave_identical(pool_path, scratch / "pool.bin", [&](const fs::path& p) {
    dovkit::ImageShape shape;
    const auto members = dovkit::skt::load_pool(pool_path, &shape);
    dovkit::skt::save_pool(members, shape, p);
  });
  const bool ckpt = resave_identical(ckpt_path, scratch / "teacher.ckpt", [&](const fs::path& p) {
    const auto c = dovkit::nn::load_checkpoint(ckpt_path);
    dovkit::nn::save_checkpoint(c.model, c.train_config, p);
  });

  const std::string report_before = read_bytes(badnets.artifact("report", "report"));
  const Run again = run_config(badnets.cfg, "badnets rerun");
  int cached = 0;
  for (const auto& s : again.manifest.stages) cached += s.status == "cached";
  const bool all_cached = cached == static_cast<int>(pl::stage_names().size());
  const bool same_report = read_bytes(again.artifact("report", "report")) == report_before;
  record(12, "persistence", bank && pool && ckpt && all_cached && same_report,
         std::string("bank ") + (bank ? "identical" : "DIFFERS") + ", pool " + (pool ? "identical" : "DIFFERS") +
             ", checkpoint " + (ckpt ? "identical" : "DIFFERS") + ", rerun cached " + std::to_string(cached) + "/" +
             std::to_string(pl::stage_names().size()) + ", report " + (same_report ? "identical" : "DIFFERS"));
}

// Runs `body`; an exception fails the listed criteria instead of aborting.
void guarded(std::initializer_list<std::pair<int, const char*>> ids, const std::function<void()>& body) {
  try {
    body();
  } catch (const std::exception& e) {
    for (const auto& [id, name] : ids) record(id, name, false, std::string("error: ") + e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 3) {
    std::fprintf(stderr, "usage: %s <config_dir> <work_dir>\n", argv[0]);
    return 2;
  }
  const fs::path config_dir = argv[1];
  const fs::path work = argv[2];
  fs::create_directories(work);

  guarded({{10, "statistical-oracles"}}, check_statistics);

  guarded({{1, "badnets"}, {7, "curation-quality"}, {8, "annotation-entropy"}, {11, "pool-chain-gradient"},
           {12, "persistence"}},
          [&] {
            const Run r = run_fresh(config_dir, work, "badnets");
            check_backdoor(1, "badnets", r, kBadnetsTeacherVsrMin, kBadnetsStudentVsrMax, true);
            guarded({{7, "curation-quality"}}, [&] { check_curation(r); });
            guarded({{8, "annotation-entropy"}}, [&] { check_entropy(r); });
            guarded({{11, "pool-chain-gradient"}}, [&] { check_pool_and_chain(r); });
            guarded({{12, "persistence"}}, [&] { check_persistence(r, work); });
          });
  guarded({{2, "ubw"}}, [&] {
    const Run r = run_fresh(config_dir, work, "ubw");
    check_backdoor(2, "ubw", r, kUbwTeacherVsrMin, kUbwStudentVsrMax, false);
  });
  guarded({{3, "isotope"}, {9, "skt-ablation"}}, [&] {
    const Run r = run_fresh(config_dir, work, "isotope");
    check_pvalue(3, "isotope", r);
    guarded({{9, "skt-ablation"}}, [&] { check_ablation(r); });
  });
  guarded({{4, "anw"}}, [&] { check_pvalue(4, "anw", run_fresh(config_dir, work, "anw")); });
  guarded({{5, "fingerprint-loss-gap"}, {6, "loss-barrier"}}, [&] {
    const Run r = run_fresh(config_dir, work, "fingerprint");
    check_fingerprint(r);
    guarded({{6, "loss-barrier"}}, [&] { check_barrier(r); });
  });

  std::sort(g_lines.begin(), g_lines.end(), [](const Line& a, const Line& b) { return a.id < b.id; });
  int failed = 0;
  std::printf("\nsummary\n");
  for (const Line& l : g_lines) {
    std::printf("criterion %2d %-22s %s\n", l.id, l.name.c_str(), l.pass ? "PASS" : "FAIL");
    failed += !l.pass;
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(g_lines.size()) - failed, g_lines.size());
  return failed == 0 && g_lines.size() == 12 ? 0 : 1;
}
