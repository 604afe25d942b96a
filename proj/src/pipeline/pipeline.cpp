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

#include "dovkit/pipeline/pipeline.hpp"

#include "dovkit/curation/curation.hpp"
#include "dovkit/digest.hpp"
#include "dovkit/dov/embed.hpp"
#include "dovkit/errors.hpp"
#include "dovkit/nn/checkpoint.hpp"
#include "dovkit/nn/train.hpp"
#include "dovkit/stats/barrier.hpp"
#include "dovkit/stats/stats.hpp"
#include "dovkit/synth/world.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <memory>
#include <set>
#include <sstream>

namespace dovkit::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names = {"data",      "mark",     "train-teacher", "bank",
                                                 "curate",    "gen-pool", "gen-chain",     "distill",
                                                 "verify",    "report"};
  return names;
}

bool is_stage(std::string_view name) {
  for (const std::string& s : stage_names()) {
    if (s == name) return true;
  }
  return false;
}

const StageRecord* RunManifest::stage(std::string_view name) const {
  for (const StageRecord& s : stages) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

std::map<std::string, std::string> RunManifest::artifacts() const {
  std::map<std::string, std::string> out;
  for (const StageRecord& s : stages) {
    for (const auto& [name, path] : s.artifacts) out[s.name + "/" + name] = path;
  }
  return out;
}

json to_json(const RunManifest& m) {
  json stages = json::array();
  for (const StageRecord& s : m.stages) {
    stages.push_back({{"name", s.name},
                      {"key", s.key},
                      {"status", s.status},
                      {"started", s.started},
                      {"finished", s.finished},
                      {"seconds", s.seconds},
                      {"artifacts", s.artifacts}});
  }
  json j = {{"run_id", m.run_id},         {"config_digest", m.config_digest}, {"method", m.method},
            {"stages", stages},           {"warnings", m.warnings},           {"calibration", m.calibration},
            {"complete", m.complete},     {"failed_stage", m.failed_stage},   {"error", m.error}};
  j["teacher_report"] = m.teacher_report ? stats::to_json(*m.teacher_report) : json(nullptr);
  j["student_report"] = m.student_report ? stats::to_json(*m.student_report) : json(nullptr);
  j["teacher_accuracy"] = m.teacher_accuracy ? json(*m.teacher_accuracy) : json(nullptr);
  j["student_accuracy"] = m.student_accuracy ? json(*m.student_accuracy) : json(nullptr);
  return j;
}

RunManifest manifest_from_json(const json& j) {
  RunManifest m;
  try {
    m.run_id = j.at("run_id").get<std::string>();
    m.config_digest = j.at("config_digest").get<std::string>();
    m.method = j.value("method", "");
    for (const json& s : j.at("stages")) {
      StageRecord r;
      r.name = s.at("name").get<std::string>();
      r.key = s.value("key", "");
      r.status = s.value("status", "");
      r.started = s.value("started", "");
      r.finished = s.value("finished", "");
      r.seconds = s.value("seconds", 0.0);
      r.artifacts = s.value("artifacts", std::map<std::string, std::string>{});
      m.stages.push_back(std::move(r));
    }
    m.warnings = j.value("warnings", std::vector<std::string>{});
    m.calibration = j.value("calibration", json::object());
    m.complete = j.value("complete", false);
    m.failed_stage = j.value("failed_stage", "");
    m.error = j.value("error", "");
    if (j.contains("teacher_report") && !j["teacher_report"].is_null()) {
      m.teacher_report = stats::report_from_json(j["teacher_report"]);
    }
    if (j.contains("student_report") && !j["student_report"].is_null()) {
      m.student_report = stats::report_from_json(j["student_report"]);
    }
    if (j.contains("teacher_accuracy") && !j["teacher_accuracy"].is_null()) {
      m.teacher_accuracy = j["teacher_accuracy"].get<double>();
    }
    if (j.contains("student_accuracy") && !j["student_accuracy"].is_null()) {
      m.student_accuracy = j["student_accuracy"].get<double>();
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed run manifest: ") + e.what());
  }
  return m;
}

void save_manifest(const RunManifest& m, const fs::path& path) {
  fs::create_directories(path.parent_path());
  atomic_write(path, [&](std::ostream& out) { out << to_json(m).dump(2) << '\n'; });
}

RunManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open run manifest: " + path.string());
  try {
    return manifest_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("run manifest is not JSON: ") + e.what());
  }
}

namespace {

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string key_of(const std::string& stage, const json& parts) {
  return sha256_hex(json{{"stage", stage}, {"parts", parts}}.dump());
}

void write_json_file(const fs::path& path, const json& j) {
  atomic_write(path, [&](std::ostream& out) { out << j.dump(2) << '\n'; });
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + " is not JSON: " + e.what());
  }
}

// Everything a stage may need, loaded lazily from the stage directories so
// that fresh and cached runs consume byte-identical inputs.
class Run {
 public:
  Run(const ExperimentConfig& cfg, const PipelineOptions& options) : cfg_(cfg), opt_(options) {
    compute_keys();
    manifest_path_ = cfg_.output_dir / "manifest.json";
    if (options.only_stage && fs::exists(manifest_path_)) {
      try {
        m_ = load_manifest(manifest_path_);
      } catch (const Error&) {
        m_ = RunManifest{};
      }
    }
    m_.run_id = cfg_.run_id;
    m_.config_digest = cfg_.config_digest;
    m_.method = std::string(dov::to_string(cfg_.dov.method));
    m_.complete = false;
    m_.failed_stage.clear();
    m_.error.clear();
  }

  RunManifest execute() {
    fs::create_directories(cfg_.output_dir);
    for (const std::string& name : stage_names()) {
      if (opt_.only_stage && *opt_.only_stage != name) continue;
      run_stage(name);
    }
    m_.complete = !opt_.only_stage || *opt_.only_stage == "report";
    if (opt_.only_stage) {
      // A single stage completes the run only if every stage has a record.
      bool all = true;
      for (const std::string& name : stage_names()) all = all && m_.stage(name) != nullptr;
      m_.complete = all && m_.teacher_report && m_.student_report;
    }
    save_manifest(m_, manifest_path_);
    return m_;
  }

 private:
  // ---- cache bookkeeping ----

  void compute_keys() {
    const json teacher = {{"train", nn::to_json(cfg_.teacher)}, {"init_seed", cfg_.teacher_init_seed}};
    keys_["data"] = key_of("data", data_section(cfg_));
    keys_["mark"] = key_of("mark", {keys_["data"], mark_section(cfg_)});
    keys_["train-teacher"] = key_of("train-teacher", {keys_["mark"], teacher});
    keys_["bank"] = key_of("bank", {keys_["data"], embedding_section(cfg_)});
    keys_["curate"] = key_of("curate", {keys_["bank"], keys_["mark"], keys_["train-teacher"],
                                        cfg_.curation.quota_multiplier});
    keys_["gen-pool"] = key_of("gen-pool", {keys_["train-teacher"], keys_["mark"], pool_section(cfg_)});
    keys_["gen-chain"] = key_of("gen-chain", {keys_["train-teacher"], keys_["mark"], chain_section(cfg_)});
    keys_["distill"] = key_of("distill", {keys_["curate"], keys_["gen-pool"], keys_["gen-chain"],
                                          student_section(cfg_)});
    keys_["verify"] = key_of("verify", {keys_["train-teacher"], keys_["distill"], keys_["mark"],
                                        verify_section(cfg_), cfg_.run_id, cfg_.config_digest});
    keys_["report"] = key_of("report", {keys_["verify"], cfg_.report.loss_barrier});
  }

  fs::path dir(const std::string& stage) const { return cfg_.output_dir / stage; }
  fs::path stamp_path(const std::string& stage) const { return dir(stage) / "stamp.json"; }

  // The stamp's payload when the stage can be reused, otherwise nullopt.
  std::optional<json> cached(const std::string& stage) const {
    const fs::path sp = stamp_path(stage);
    if (!fs::exists(sp)) return std::nullopt;
    json stamp;
    try {
      stamp = read_json_file(sp);
      if (stamp.at("key").get<std::string>() != keys_.at(stage)) return std::nullopt;
      for (const auto& [name, a] : stamp.at("artifacts").items()) {
        const fs::path p = a.at("path").get<std::string>();
        if (!fs::exists(p) || sha256_file(p) != a.at("sha256").get<std::string>()) return std::nullopt;
      }
    } catch (const std::exception&) {
      return std::nullopt;
    }
    return stamp;
  }

  void write_stamp(const std::string& stage, const std::map<std::string, fs::path>& artifacts, const json& payload) {
    json a = json::object();
    for (const auto& [name, p] : artifacts) a[name] = {{"path", p.string()}, {"sha256", sha256_file(p)}};
    write_json_file(stamp_path(stage), {{"key", keys_.at(stage)}, {"artifacts", a}, {"payload", payload}});
  }

  json stamp_of(const std::string& stage) const {
    const fs::path sp = stamp_path(stage);
    if (!fs::exists(sp)) {
      throw Error("stage '" + stage + "' has not run yet; run it first (missing " + sp.string() + ")");
    }
    json stamp = read_json_file(sp);
    if (stamp.value("key", "") != keys_.at(stage) && !stale_warned_.count(stage)) {
      stale_warned_.insert(stage);
      warn("upstream stage '" + stage + "' was produced with a different configuration");
    }
    return stamp;
  }

  fs::path artifact(const std::string& stage, const std::string& name) const {
    return stamp_of(stage).at("artifacts").at(name).at("path").get<std::string>();
  }

  void log(const std::string& stage, const std::string& msg) const {
    if (opt_.log) opt_.log("[" + stage + "] " + msg);
  }

  void warn(const std::string& msg) const {
    for (const std::string& w : m_.warnings) {
      if (w == msg) return;
    }
    m_.warnings.push_back(msg);
    if (opt_.log) opt_.log("warning: " + msg);
  }

  void run_stage(const std::string& name) {
    StageRecord rec;
    rec.name = name;
    rec.key = keys_.at(name);
    rec.started = utc_now();
    const auto t0 = std::chrono::steady_clock::now();
    try {
      std::optional<json> stamp;
      if (!opt_.force && !opt_.only_stage) stamp = cached(name);
      if (stamp) {
        rec.status = "cached";
        log(name, "cached");
        restore(name, stamp->at("payload"));
      } else {
        rec.status = "ran";
        log(name, "running");
        fs::create_directories(dir(name));
        auto [artifacts, payload] = dispatch(name);
        write_stamp(name, artifacts, payload);
        stamp = read_json_file(stamp_path(name));
        restore(name, payload);
      }
      for (const auto& [a, v] : stamp->at("artifacts").items()) rec.artifacts[a] = v.at("path").get<std::string>();
    } catch (const std::exception& e) {
      rec.status = "failed";
      rec.finished = utc_now();
      record(rec);
      m_.failed_stage = name;
      m_.error = e.what();
      save_manifest(m_, manifest_path_);
      throw StageError(name, e.what());
    }
    rec.finished = utc_now();
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    record(rec);
    save_manifest(m_, manifest_path_);
  }

  void record(const StageRecord& rec) {
    for (StageRecord& s : m_.stages) {
      if (s.name == rec.name) {
        s = rec;
        return;
      }
    }
    m_.stages.push_back(rec);
  }

  // Copies a stage's persisted payload (warnings, reports, calibration) into
  // the manifest.
  void restore(const std::string& name, const json& payload) {
    for (const std::string& w : payload.value("warnings", std::vector<std::string>{})) warn(w);
    if (payload.contains("calibration")) m_.calibration[name] = payload["calibration"];
    if (name == "verify") {
      m_.teacher_report = stats::report_from_json(payload.at("teacher_report"));
      m_.student_report = stats::report_from_json(payload.at("student_report"));
      m_.teacher_accuracy = payload.at("teacher_accuracy").get<double>();
      m_.student_accuracy = payload.at("student_accuracy").get<double>();
    }
  }

  using StageOutput = std::pair<std::map<std::string, fs::path>, json>;

  StageOutput dispatch(const std::string& name) {
    if (name == "data") return stage_data();
    if (name == "mark") return stage_mark();
    if (name == "train-teacher") return stage_teacher();
    if (name == "bank") return stage_bank();
    if (name == "curate") return stage_curate();
    if (name == "gen-pool") return stage_pool();
    if (name == "gen-chain") return stage_chain();
    if (name == "distill") return stage_distill();
    if (name == "verify") return stage_verify();
    return stage_report();
  }

  // ---- lazy artifact access ----

  const LabeledDataset& dataset(const std::string& which) {
    auto& slot = datasets_[which];
    if (!slot) {
      const std::string stage = which == "marked" ? "mark" : "data";
      slot = std::make_unique<LabeledDataset>(load_dataset(artifact(stage, which), cfg_.data.format));
    }
    return *slot;
  }

  const dov::VerificationMaterials& materials() {
    if (!materials_) {
      materials_ = std::make_unique<dov::VerificationMaterials>(
          dov::materials_from_json(read_json_file(artifact("mark", "materials"))));
    }
    return *materials_;
  }

  const nn::Classifier& model(const std::string& which) {
    auto& slot = models_[which];
    if (!slot) {
      const std::string stage = which == "teacher" ? "train-teacher" : "distill";
      slot = std::make_unique<nn::Classifier>(nn::load_checkpoint(artifact(stage, which)).model);
    }
    return *slot;
  }

  const curation::EmbeddingProvider& embedder() {
    if (!embedder_) {
      const EmbeddingConfig& e = cfg_.embedding;
      if (e.provider == "file") {
        embedder_ = std::make_unique<curation::FileEmbeddingProvider>(e.path);
      } else if (e.provider == "projection") {
        embedder_ = std::make_unique<curation::ProjectionEmbeddingProvider>(dataset("train").shape, e.dim, e.seed);
      } else {
        embedder_ = std::make_unique<synth::AttributeEncoder>();
      }
    }
    return *embedder_;
  }

  // ---- stages ----

  StageOutput stage_data() {
    if (cfg_.data.source == "files") {
      // Inputs are referenced in place; loading them here validates them.
      for (const auto& p : {cfg_.data.train, cfg_.data.test, cfg_.data.gallery}) load_dataset(p, cfg_.data.format);
      return {{{"train", cfg_.data.train},
               {"test", cfg_.data.test},
               {"gallery", cfg_.data.gallery},
               {"descriptions", cfg_.data.descriptions}},
              json::object()};
    }
    if (cfg_.data.format != DatasetFormat::kPackedBinary) {
      throw ValidationError("synthetic data is stored in the packed format");
    }
    log("data", "rendering synthetic world");
    synth::World w = synth::make_world(cfg_.data.world);
    const fs::path d = dir("data");
    save_packed_dataset(w.train, d / "train.bin");
    save_packed_dataset(w.test, d / "test.bin");
    save_packed_dataset(w.gallery, d / "gallery.bin");
    write_json_file(d / "descriptions.json", w.descriptions);
    return {{{"train", d / "train.bin"},
             {"test", d / "test.bin"},
             {"gallery", d / "gallery.bin"},
             {"descriptions", d / "descriptions.json"}},
            json::object()};
  }

  StageOutput stage_mark() {
    const LabeledDataset& train = dataset("train");
    const DovConfig& dv = cfg_.dov;
    dov::MarkedDataset md;
    switch (dv.method) {
      case dov::Method::kBadnets:
        md = dov::embed_badnets(train, dov::TriggerPattern::corner_checkerboard(train.shape, dv.trigger_size),
                                dv.target_class, dv.rate, dv.seed);
        break;
      case dov::Method::kUbw:
        md = dov::embed_ubw(train, dov::TriggerPattern::corner_checkerboard(train.shape, dv.trigger_size), dv.rate,
                            dv.seed);
        break;
      case dov::Method::kAnw:
        md = dov::embed_anw(train, dv.hue_shift, dv.rate, dv.seed);
        break;
      case dov::Method::kIsotope:
        md = dov::embed_isotope(train, isotope_key(train.shape), dv.blend_ratio, dv.rate, dv.seed);
        break;
      case dov::Method::kFingerprint:
        md = dov::embed_fingerprint(train, dataset("test"), dv.n_probe, dv.seed);
        break;
    }
    md.materials.validate(&md.dataset);
    const fs::path d = dir("mark");
    save_packed_dataset(md.dataset, d / "marked.bin");
    write_json_file(d / "materials.json", dov::to_json(md.materials));
    return {{{"marked", d / "marked.bin"}, {"materials", d / "materials.json"}},
            {{"calibration", {{"marked_samples", md.materials.marked_ids.size()}}}}};
  }

  Image isotope_key(ImageShape shape) const {
    Image key;
    if (!cfg_.dov.key_image.empty()) {
      key = read_png(cfg_.dov.key_image);
      if (!(key.shape == shape)) throw ShapeMismatchError("key image shape differs from the dataset");
      return key;
    }
    // An out-of-distribution pattern in the gallery style, quantized to 8
    // bits like any published image.
    Rng rng = make_rng(cfg_.dov.key_seed);
    const float ori = static_cast<float>(uniform01(rng) * 180.0);
    const float hue = static_cast<float>(uniform01(rng) * 360.0);
    if (shape.channels != 3 || shape.height != shape.width) {
      throw PreconditionError("the rendered isotope key needs square RGB images; set dov.key_image");
    }
    key = Image(shape, synth::render(synth::Style::kGallery, ori, hue, shape.height, 0.04f, rng));
    for (Eigen::Index i = 0; i < key.pixels.size(); ++i) key.pixels[i] = dequantize_u8(quantize_u8(key.pixels[i]));
    return key;
  }

  template <typename Fn>
  auto with_retry(const std::string& stage, double& lr, Fn&& fn) {
    try {
      return fn();
    } catch (const DivergenceError& e) {
      lr *= 0.5;
      retry_warnings_.push_back(stage + ": diverged (" + e.what() + "); retried once with learning rate " +
                                std::to_string(lr));
      log(stage, retry_warnings_.back());
      return fn();
    }
  }

  StageOutput stage_teacher() {
    const LabeledDataset& marked = dataset("marked");
    nn::TrainConfig tc = cfg_.teacher;
    retry_warnings_.clear();
    nn::Classifier teacher = with_retry("train-teacher", tc.learning_rate, [&] {
      return nn::train_classifier(marked, tc, cfg_.teacher_init_seed, [&](const nn::EpochStats& s) {
        log("train-teacher", "epoch " + std::to_string(s.epoch + 1) + "/" + std::to_string(tc.epochs) +
                                 " loss " + std::to_string(s.mean_loss));
      });
    });
    const fs::path p = dir("train-teacher") / "teacher.ckpt";
    nn::save_checkpoint(teacher, nn::to_json(tc), p);
    return {{{"teacher", p}}, {{"warnings", retry_warnings_}}};
  }

  StageOutput stage_bank() {
    const LabeledDataset& gallery = dataset("gallery");
    const curation::DescriptionSet desc =
        curation::load_descriptions(artifact("data", "descriptions"), dataset("train").class_names);
    const curation::ClassPrototypes protos = curation::class_prototypes(embedder(), desc);
    const fs::path p = dir("bank") / "bank.bin";
    // The stage key already decided that the bank must be rebuilt.
    fs::remove(p);
    curation::build_feature_bank(embedder(), gallery, p, &protos);
    curation::write_gallery_manifest(gallery, dir("bank") / "gallery_manifest.jsonl");
    return {{{"bank", p}, {"gallery_manifest", dir("bank") / "gallery_manifest.jsonl"}},
            {{"calibration", {{"embedder", embedder().id()}, {"dim", embedder().dim()}}}}};
  }

  StageOutput stage_curate() {
    const LabeledDataset& marked = dataset("marked");
    const curation::FeatureBank bank = curation::load_feature_bank(artifact("bank", "bank"));
    const curation::DistributionDigest digest = curation::compute_digests(embedder(), marked);
    std::vector<int> quotas = marked.class_counts();
    for (int& q : quotas) q = static_cast<int>(std::lround(q * cfg_.curation.quota_multiplier));
    const curation::TransferSet ts =
        curation::curate_transfer_set(bank, digest, model("teacher"), dataset("gallery"), quotas);
    const fs::path p = dir("curate") / "transfer.json";
    write_json_file(p, ts.to_json());
    std::vector<std::string> warnings;
    for (const std::string& w : ts.warnings) warnings.push_back("curation shortfall: " + w);
    return {{{"transfer", p}}, {{"warnings", warnings}, {"calibration", {{"size", ts.size()}}}}};
  }

  const LabeledDataset& transfer_set() {
    if (!transfer_) {
      const curation::TransferSet ts = curation::TransferSet::from_json(read_json_file(artifact("curate", "transfer")));
      transfer_ = std::make_unique<LabeledDataset>(
          curation::materialize_transfer_set(ts, dataset("gallery"), dataset("marked").class_names));
    }
    return *transfer_;
  }

  skt::PerturbationConfig resolved_pool_config() {
    skt::PerturbationConfig pc = cfg_.pool.perturbation;
    const skt::Budgets defaults = skt::Budgets::defaults(dataset("marked").shape, static_cast<float>(pc.scale));
    if (pc.budgets.k0 == 0.0f) pc.budgets.k0 = defaults.k0;
    if (pc.budgets.eps2 == 0.0f) pc.budgets.eps2 = defaults.eps2;
    return pc;
  }

  StageOutput stage_pool() {
    const LabeledDataset& marked = dataset("marked");
    const nn::Classifier& teacher = model("teacher");
    const skt::PerturbationConfig pc = resolved_pool_config();
    const auto pool = skt::build_perturbation_pool(teacher, marked, cfg_.pool.size, pc, cfg_.pool.seed,
                                                   [&](int i, const skt::Perturbation& p) {
                                                     log("gen-pool", "member " + std::to_string(i + 1) + " " +
                                                                         std::string(skt::to_string(p.norm_tag)));
                                                   });
    const fs::path p = dir("gen-pool") / "pool.bin";
    skt::save_pool(pool, marked.shape, p);
    json tags = json::array();
    for (const auto& m : pool) tags.push_back(skt::to_string(m.norm_tag));
    json calib = pool_section(cfg_);
    calib["k0"] = pc.budgets.k0;
    calib["eps2"] = pc.budgets.eps2;
    calib["norm_tags"] = tags;
    return {{{"pool", p}}, {{"calibration", calib}}};
  }

  StageOutput stage_chain() {
    const skt::GaResult ga = skt::search_corruption_chain(model("teacher"), dataset("marked"), cfg_.chain.ga,
                                                          cfg_.chain.seed);
    const fs::path p = dir("gen-chain") / "chain.json";
    skt::save_chain(ga.best, p);
    json calib = chain_section(cfg_);
    calib["best"] = ga.best.describe();
    calib["best_fitness"] = ga.best_fitness;
    // The evaluation batch lets other chains be scored on identical inputs.
    const fs::path search = dir("gen-chain") / "search.json";
    write_json_file(search, {{"batch_rows", ga.batch_rows},
                             {"noise_seed", ga.noise_seed},
                             {"best_fitness", ga.best_fitness},
                             {"best_per_epoch", ga.best_per_epoch}});
    return {{{"chain", p}, {"search", search}}, {{"calibration", calib}}};
  }

  StageOutput stage_distill() {
    const LabeledDataset& t = transfer_set();
    const nn::Classifier& teacher = model("teacher");
    const auto pool = skt::load_pool(artifact("gen-pool", "pool"));
    const skt::CorruptionChain chain = skt::load_chain(artifact("gen-chain", "chain"));
    skt::SktConfig sc = cfg_.student.skt;
    const nn::Classifier init = nn::Classifier::create(cfg_.student.architecture, teacher.input_shape(),
                                                       teacher.num_classes(), cfg_.student.init_seed);
    retry_warnings_.clear();
    const nn::Classifier student = with_retry("distill", sc.learning_rate, [&] {
      return skt::distill_selective(teacher, init, t, sc, pool, chain, [&](const skt::DistillStats& s) {
        log("distill", "epoch " + std::to_string(s.epoch + 1) + "/" + std::to_string(sc.epochs) + " loss " +
                           std::to_string(s.mean_loss));
      });
    });
    const fs::path p = dir("distill") / "student.ckpt";
    json tc = student_section(cfg_);
    tc["learning_rate"] = sc.learning_rate;
    nn::save_checkpoint(student, tc, p);
    return {{{"student", p}}, {{"warnings", retry_warnings_}, {"calibration", student_section(cfg_)}}};
  }

  stats::VerificationReport verify_model(const nn::Classifier& m) {
    const dov::VerificationMaterials& mat = materials();
    const LabeledDataset& test = dataset("test");
    stats::VerificationReport r;
    switch (mat.method) {
      case dov::Method::kBadnets:
      case dov::Method::kUbw:
        r = dov::verify_backdoor(m, test, mat);
        break;
      case dov::Method::kAnw:
      case dov::Method::kIsotope:
        r = dov::verify_nonpoisoning(m, test, mat, &dataset("gallery"), cfg_.dov.verify);
        break;
      case dov::Method::kFingerprint: {
        const LabeledDataset& marked = dataset("marked");
        r = dov::verify_fingerprint(m, marked.subset(marked.rows_of(mat.train_probe_ids)),
                                    test.subset(test.rows_of(mat.heldout_probe_ids)));
        break;
      }
    }
    r.run_id = cfg_.run_id;
    r.config_digest = cfg_.config_digest;
    r.seeds = {cfg_.seed, cfg_.dov.seed, cfg_.dov.verify.seed};
    return r;
  }

  StageOutput stage_verify() {
    const nn::Classifier& teacher = model("teacher");
    const nn::Classifier& student = model("student");
    const stats::VerificationReport tr = verify_model(teacher);
    const stats::VerificationReport sr = verify_model(student);
    const fs::path d = dir("verify");
    write_json_file(d / "teacher_report.json", stats::to_json(tr));
    write_json_file(d / "student_report.json", stats::to_json(sr));
    return {{{"teacher_report", d / "teacher_report.json"}, {"student_report", d / "student_report.json"}},
            {{"teacher_report", stats::to_json(tr)},
             {"student_report", stats::to_json(sr)},
             {"teacher_accuracy", nn::accuracy(teacher, dataset("test"))},
             {"student_accuracy", nn::accuracy(student, dataset("test"))}}};
  }

  StageOutput stage_report() {
    std::map<std::string, fs::path> artifacts;
    const fs::path d = dir("report");
    json rep = report_json(m_);
    if (cfg_.report.loss_barrier) {
      // Training loss is taken over the unmarked rows: relabelled backdoor
      // rows would otherwise dominate the student endpoint.
      const LabeledDataset& marked = dataset("marked");
      const std::set<std::uint64_t> skip(materials().marked_ids.begin(), materials().marked_ids.end());
      std::vector<int> clean_rows;
      for (int i = 0; i < marked.size(); ++i) {
        if (!skip.count(marked.ids[static_cast<std::size_t>(i)])) clean_rows.push_back(i);
      }
      const stats::LossBarrierProfile prof = stats::loss_barrier(model("teacher"), model("student"),
                                                                 marked.subset(clean_rows), dataset("test"));
      atomic_write(d / "barrier.tsv", [&](std::ostream& out) { stats::write_barrier_tsv(prof, out); });
      artifacts["barrier"] = d / "barrier.tsv";
      rep["loss_barrier"] = {{"alpha", prof.alphas}, {"train_loss", prof.train_loss}, {"test_loss", prof.test_loss}};
    }
    write_json_file(d / "report.json", rep);
    atomic_write(d / "summary.txt", [&](std::ostream& out) { out << format_summary(m_); });
    artifacts["report"] = d / "report.json";
    artifacts["summary"] = d / "summary.txt";
    return {artifacts, json::object()};
  }

  const ExperimentConfig& cfg_;
  const PipelineOptions& opt_;
  mutable RunManifest m_;
  fs::path manifest_path_;
  std::map<std::string, std::string> keys_;
  mutable std::set<std::string> stale_warned_;
  std::vector<std::string> retry_warnings_;

  std::map<std::string, std::unique_ptr<LabeledDataset>> datasets_;
  std::map<std::string, std::unique_ptr<nn::Classifier>> models_;
  std::unique_ptr<dov::VerificationMaterials> materials_;
  std::unique_ptr<curation::EmbeddingProvider> embedder_;
  std::unique_ptr<LabeledDataset> transfer_;
};

std::string format_metric(const stats::VerificationReport& r) {
  char buf[32];
  if (r.metric_kind == stats::MetricKind::kVsr) {
    std::snprintf(buf, sizeof(buf), "%.2f", 100.0 * r.value);
  } else {
    std::snprintf(buf, sizeof(buf), "%.2e", r.value);
  }
  return buf;
}

std::string format_percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", 100.0 * v);
  return buf;
}

}  // namespace

RunManifest run_pipeline(const ExperimentConfig& cfg, const PipelineOptions& options) {
  cfg.validate();
  if (options.only_stage && !is_stage(*options.only_stage)) {
    throw ValidationError("unknown stage: " + *options.only_stage);
  }
  Run run(cfg, options);
  return run.execute();
}

json report_json(const RunManifest& m) {
  if (!m.teacher_report || !m.student_report || !m.teacher_accuracy || !m.student_accuracy) {
    throw PreconditionError("the manifest has no verification results; run the verify stage first");
  }
  return {{"run_id", m.run_id},
          {"method", m.method},
          {"config_digest", m.config_digest},
          {"teacher", stats::to_json(*m.teacher_report)},
          {"student", stats::to_json(*m.student_report)},
          {"teacher_accuracy", *m.teacher_accuracy},
          {"student_accuracy", *m.student_accuracy},
          {"warnings", m.warnings}};
}

std::string format_summary(const RunManifest& m) {
  if (!m.teacher_report || !m.student_report || !m.teacher_accuracy || !m.student_accuracy) {
    throw PreconditionError("the manifest has no verification results; run the verify stage first");
  }
  const std::string metric = m.teacher_report->metric_kind == stats::MetricKind::kVsr ? "VSR" : "p-value";
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-12s | %-11s | %-11s | %-11s | %-11s\n", "Method", "Vanilla ACC",
                ("Vanilla " + metric).c_str(), "Evasion ACC", ("Evasion " + metric).c_str());
  out << line;
  std::snprintf(line, sizeof(line), "%-12s | %-11s | %-11s | %-11s | %-11s\n", m.method.c_str(),
                format_percent(*m.teacher_accuracy).c_str(), format_metric(*m.teacher_report).c_str(),
                format_percent(*m.student_accuracy).c_str(), format_metric(*m.student_report).c_str());
  out << line;
  out << "detected: teacher " << (m.teacher_report->detected ? "yes" : "no") << ", student "
      << (m.student_report->detected ? "yes" : "no") << '\n';
  for (const std::string& w : m.warnings) out << "warning: " << w << '\n';
  return out.str();
}

}  // namespace dovkit::pipeline
