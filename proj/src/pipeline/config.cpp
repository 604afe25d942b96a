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

#include "dovkit/pipeline/config.hpp"

#include "dovkit/digest.hpp"
#include "dovkit/errors.hpp"
#include "dovkit/pipeline/toml.hpp"
#include "dovkit/random.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace dovkit::pipeline {

namespace fs = std::filesystem;

namespace {

// Reads typed keys from one table and remembers which were consumed so that
// leftovers can be reported as unknown.
class Section {
 public:
  Section(const nlohmann::json* table, std::string name) : table_(table), name_(std::move(name)) {
    if (table_ && !table_->is_object()) throw ValidationError("[" + name_ + "] must be a table");
  }

  bool has(const std::string& key) const { return table_ && table_->contains(key); }

  Section sub(const std::string& key) {
    seen_.insert(key);
    return Section(has(key) ? &table_->at(key) : nullptr, name_.empty() ? key : name_ + "." + key);
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    if (!has(key)) return;
    seen_.insert(key);
    const nlohmann::json& v = table_->at(key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ValidationError("");
        out = v.get<bool>();
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ValidationError("");
        out = v.get<std::string>();
      } else if constexpr (std::is_same_v<T, std::uint64_t>) {
        if (!v.is_number_integer() || v.get<std::int64_t>() < 0) throw ValidationError("");
        out = v.get<std::uint64_t>();
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw ValidationError("");
        out = v.get<T>();
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw ValidationError("");
        out = v.get<T>();
      } else {
        out = v.get<T>();
      }
    } catch (const std::exception&) {
      throw ValidationError("config key " + qualified(key) + " has the wrong type");
    }
  }

  void path(const std::string& key, fs::path& out, const fs::path& base) {
    std::string s;
    get(key, s);
    if (!s.empty()) out = fs::path(s).is_absolute() ? fs::path(s) : base / s;
  }

  void seed(const std::string& key, std::uint64_t& out, std::uint64_t master, std::uint64_t stream) {
    out = derive_seed(master, stream);
    get(key, out);
  }

  void finish() const {
    if (!table_) return;
    for (const auto& [key, value] : table_->items()) {
      if (!seen_.count(key)) throw ValidationError("unknown config key " + qualified(key));
    }
  }

 private:
  std::string qualified(const std::string& key) const { return name_.empty() ? key : name_ + "." + key; }

  const nlohmann::json* table_;
  std::string name_;
  std::set<std::string> seen_;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw ValidationError(what);
}

}  // namespace

ExperimentConfig parse_experiment_config(const nlohmann::json& doc, const fs::path& base_dir,
                                         std::optional<std::uint64_t> seed_override) {
  if (!doc.is_object()) throw ValidationError("config must be a table");
  ExperimentConfig cfg;
  Section top(&doc, "");
  top.get("run_id", cfg.run_id);
  if (cfg.run_id.empty()) cfg.run_id = "run";
  if (!top.has("seed") && !seed_override) throw ValidationError("config must set the top-level seed");
  top.get("seed", cfg.seed);
  if (seed_override) cfg.seed = *seed_override;
  const std::uint64_t s = cfg.seed;
  cfg.output_dir = base_dir / "runs" / cfg.run_id;
  top.path("output_dir", cfg.output_dir, base_dir);

  {
    Section d = top.sub("data");
    d.get("source", cfg.data.source);
    d.path("train", cfg.data.train, base_dir);
    d.path("test", cfg.data.test, base_dir);
    d.path("gallery", cfg.data.gallery, base_dir);
    d.path("descriptions", cfg.data.descriptions, base_dir);
    std::string format = std::string(to_string(cfg.data.format));
    d.get("format", format);
    try {
      cfg.data.format = parse_dataset_format(format);
    } catch (const Error& e) {
      throw ValidationError(e.what());
    }
    Section w = d.sub("synthetic");
    synth::WorldConfig& wc = cfg.data.world;
    w.get("num_classes", wc.num_classes);
    w.get("train_per_class", wc.train_per_class);
    w.get("test_per_class", wc.test_per_class);
    w.get("gallery_size", wc.gallery_size);
    w.get("image_size", wc.image_size);
    w.get("orientation_jitter", wc.orientation_jitter_deg);
    w.get("hue_jitter", wc.hue_jitter_deg);
    w.get("pixel_noise", wc.pixel_noise);
    w.seed("seed", wc.seed, s, 1);
    w.finish();
    d.finish();
  }
  {
    Section e = top.sub("embedding");
    e.get("provider", cfg.embedding.provider);
    e.path("path", cfg.embedding.path, base_dir);
    e.get("dim", cfg.embedding.dim);
    e.seed("seed", cfg.embedding.seed, s, 2);
    e.finish();
  }
  {
    Section v = top.sub("dov");
    std::string method = std::string(dov::to_string(cfg.dov.method));
    v.get("method", method);
    cfg.dov.method = dov::parse_method(method);
    v.get("rate", cfg.dov.rate);
    v.get("target_class", cfg.dov.target_class);
    v.get("trigger_size", cfg.dov.trigger_size);
    v.get("hue_shift", cfg.dov.hue_shift);
    v.get("blend_ratio", cfg.dov.blend_ratio);
    v.path("key_image", cfg.dov.key_image, base_dir);
    v.seed("key_seed", cfg.dov.key_seed, s, 3);
    v.get("n_probe", cfg.dov.n_probe);
    v.seed("seed", cfg.dov.seed, s, 4);
    Section vv = v.sub("verify");
    vv.get("n_decoys", cfg.dov.verify.n_decoys);
    vv.get("max_samples", cfg.dov.verify.max_samples);
    vv.seed("seed", cfg.dov.verify.seed, s, 5);
    vv.finish();
    v.finish();
  }
  {
    Section t = top.sub("teacher");
    t.get("architecture", cfg.teacher.architecture);
    t.get("epochs", cfg.teacher.epochs);
    t.get("batch_size", cfg.teacher.batch_size);
    t.get("learning_rate", cfg.teacher.learning_rate);
    t.get("weight_decay", cfg.teacher.weight_decay);
    t.get("momentum", cfg.teacher.momentum);
    t.get("mixup", cfg.teacher.mixup_enabled);
    t.get("mixup_alpha", cfg.teacher.mixup_alpha);
    t.get("grad_clip", cfg.teacher.grad_clip);
    t.seed("seed", cfg.teacher.seed, s, 6);
    t.seed("init_seed", cfg.teacher_init_seed, s, 7);
    t.finish();
  }
  {
    Section c = top.sub("curation");
    c.get("quota_multiplier", cfg.curation.quota_multiplier);
    c.finish();
  }
  {
    Section p = top.sub("pool");
    skt::PerturbationConfig& pc = cfg.pool.perturbation;
    p.get("size", cfg.pool.size);
    p.get("iterations", pc.iterations);
    p.get("learning_rate", pc.learning_rate);
    p.get("scale", pc.scale);
    p.get("regularization", pc.regularization);
    p.get("batch_size", pc.batch_size);
    p.get("samples_per_iteration", pc.samples_per_iteration);
    p.get("selection_samples", pc.selection_samples);
    p.get("use_ground_truth", pc.use_ground_truth);
    // Zero means "derive from the image shape and scale" at generation time.
    pc.budgets.k0 = 0.0f;
    pc.budgets.eps2 = 0.0f;
    p.get("k0", pc.budgets.k0);
    p.get("eps2", pc.budgets.eps2);
    p.get("epsinf", pc.budgets.epsinf);
    p.seed("seed", cfg.pool.seed, s, 8);
    p.finish();
  }
  {
    Section c = top.sub("chain");
    skt::GaConfig& ga = cfg.chain.ga;
    c.get("population", ga.population);
    c.get("epochs", ga.epochs);
    c.get("length", ga.chain_length);
    c.get("mutation_rate", ga.mutation_rate);
    c.get("tournament_size", ga.tournament_size);
    c.get("elitism", ga.elitism);
    c.get("batch_size", ga.batch_size);
    c.seed("seed", cfg.chain.seed, s, 9);
    c.finish();
  }
  {
    Section st = top.sub("student");
    skt::SktConfig& k = cfg.student.skt;
    st.get("architecture", cfg.student.architecture);
    st.seed("init_seed", cfg.student.init_seed, s, 10);
    st.get("tau", k.tau);
    if (st.has("op_probs")) {
      std::vector<double> probs;
      st.get("op_probs", probs);
      require(probs.size() == 3, "student.op_probs must have three entries (skip, perturb, corrupt)");
      k.op_probs = {probs[0], probs[1], probs[2]};
    }
    st.get("epochs", k.epochs);
    st.get("batch_size", k.batch_size);
    st.get("learning_rate", k.learning_rate);
    st.get("weight_decay", k.weight_decay);
    st.get("momentum", k.momentum);
    st.get("grad_clip", k.grad_clip);
    st.seed("seed", k.seed, s, 11);
    st.finish();
  }
  {
    Section r = top.sub("report");
    r.get("loss_barrier", cfg.report.loss_barrier);
    r.finish();
  }
  top.finish();
  return cfg;
}

ExperimentConfig load_experiment_config(const fs::path& path, std::optional<std::uint64_t> seed_override) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read config: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string bytes = buf.str();
  nlohmann::json doc;
  try {
    doc = parse_toml(bytes);
  } catch (const FormatError& e) {
    throw ValidationError(e.what());
  }
  ExperimentConfig cfg = parse_experiment_config(doc, fs::absolute(path).parent_path(), seed_override);
  cfg.config_digest =
      sha256_hex(seed_override ? bytes + "\nseed-override=" + std::to_string(*seed_override) : bytes);
  return cfg;
}

void ExperimentConfig::validate() const {
  try {
    require(!run_id.empty(), "run_id must not be empty");
    if (data.source == "synthetic") {
      const synth::WorldConfig& w = data.world;
      require(w.num_classes >= 2 && w.train_per_class > 0 && w.test_per_class > 0 && w.gallery_size > 0 &&
                  w.image_size >= 8,
              "synthetic world sizes must be positive (at least 2 classes, 8 pixel images)");
    } else if (data.source == "files") {
      for (const auto& [name, p] : {std::pair{"data.train", data.train}, std::pair{"data.test", data.test},
                                    std::pair{"data.gallery", data.gallery},
                                    std::pair{"data.descriptions", data.descriptions}}) {
        require(!p.empty(), std::string(name) + " is required when data.source = \"files\"");
        require(fs::exists(p), std::string(name) + " does not exist: " + p.string());
      }
    } else {
      throw ValidationError("data.source must be \"synthetic\" or \"files\"");
    }
    if (embedding.provider == "file") {
      require(fs::exists(embedding.path), "embedding.path does not exist: " + embedding.path.string());
    } else if (embedding.provider == "projection") {
      require(embedding.dim > 0, "embedding.dim must be positive");
    } else {
      require(embedding.provider == "attribute", "embedding.provider must be attribute, projection or file");
    }
    require(dov.rate > 0.0 && dov.rate <= 1.0, "dov.rate must lie in (0, 1]");
    require(dov.trigger_size > 0, "dov.trigger_size must be positive");
    require(dov.hue_shift > 0.0 && dov.hue_shift <= 360.0, "dov.hue_shift must lie in (0, 360]");
    require(dov.blend_ratio > 0.0 && dov.blend_ratio < 1.0, "dov.blend_ratio must lie in (0, 1)");
    require(dov.key_image.empty() || fs::exists(dov.key_image), "dov.key_image does not exist");
    require(dov.n_probe >= 2, "dov.n_probe must be at least 2");
    require(dov.verify.n_decoys >= 2 && dov.verify.max_samples >= 0, "dov.verify needs at least two decoys");
    if (data.source == "synthetic") {
      require(dov.target_class >= 0 && dov.target_class < data.world.num_classes, "dov.target_class out of range");
    }
    teacher.validate();
    require(curation.quota_multiplier > 0.0, "curation.quota_multiplier must be positive");
    require(pool.size >= 1, "pool.size must be at least 1");
    skt::PerturbationConfig pc = pool.perturbation;
    if (pc.budgets.k0 == 0.0f) pc.budgets.k0 = 1.0f;
    if (pc.budgets.eps2 == 0.0f) pc.budgets.eps2 = static_cast<float>(pc.scale);
    pc.validate();
    chain.ga.validate();
    student.skt.validate();
    nn::Network::build(student.architecture, ImageShape{}, 2);
    nn::Network::build(teacher.architecture, ImageShape{}, 2);
  } catch (const ValidationError&) {
    throw;
  } catch (const Error& e) {
    throw ValidationError(e.what());
  }
}

namespace {

nlohmann::json file_ref(const fs::path& p) {
  if (p.empty()) return nullptr;
  return {{"path", p.string()}, {"sha256", fs::exists(p) ? sha256_file(p) : ""}};
}

}  // namespace

nlohmann::json data_section(const ExperimentConfig& cfg) {
  const DataConfig& d = cfg.data;
  if (d.source == "synthetic") {
    const synth::WorldConfig& w = d.world;
    return {{"source", "synthetic"},
            {"num_classes", w.num_classes},
            {"train_per_class", w.train_per_class},
            {"test_per_class", w.test_per_class},
            {"gallery_size", w.gallery_size},
            {"image_size", w.image_size},
            {"orientation_jitter", w.orientation_jitter_deg},
            {"hue_jitter", w.hue_jitter_deg},
            {"pixel_noise", w.pixel_noise},
            {"seed", w.seed}};
  }
  return {{"source", "files"},
          {"format", to_string(d.format)},
          {"train", file_ref(d.train)},
          {"test", file_ref(d.test)},
          {"gallery", file_ref(d.gallery)},
          {"descriptions", file_ref(d.descriptions)}};
}

nlohmann::json embedding_section(const ExperimentConfig& cfg) {
  const EmbeddingConfig& e = cfg.embedding;
  nlohmann::json j = {{"provider", e.provider}};
  if (e.provider == "file") j["file"] = file_ref(e.path);
  if (e.provider == "projection") {
    j["dim"] = e.dim;
    j["seed"] = e.seed;
  }
  return j;
}

nlohmann::json mark_section(const ExperimentConfig& cfg) {
  const DovConfig& d = cfg.dov;
  nlohmann::json j = {{"method", dov::to_string(d.method)}, {"seed", d.seed}};
  switch (d.method) {
    case dov::Method::kBadnets:
      j["target_class"] = d.target_class;
      [[fallthrough]];
    case dov::Method::kUbw:
      j["trigger_size"] = d.trigger_size;
      j["rate"] = d.rate;
      break;
    case dov::Method::kAnw:
      j["hue_shift"] = d.hue_shift;
      j["rate"] = d.rate;
      break;
    case dov::Method::kIsotope:
      j["blend_ratio"] = d.blend_ratio;
      j["rate"] = d.rate;
      if (d.key_image.empty()) {
        j["key_seed"] = d.key_seed;
      } else {
        j["key_image"] = file_ref(d.key_image);
      }
      break;
    case dov::Method::kFingerprint:
      j["n_probe"] = d.n_probe;
      break;
  }
  return j;
}

nlohmann::json verify_section(const ExperimentConfig& cfg) {
  return {{"n_decoys", cfg.dov.verify.n_decoys},
          {"max_samples", cfg.dov.verify.max_samples},
          {"seed", cfg.dov.verify.seed}};
}

nlohmann::json pool_section(const ExperimentConfig& cfg) {
  const skt::PerturbationConfig& p = cfg.pool.perturbation;
  return {{"size", cfg.pool.size},
          {"iterations", p.iterations},
          {"learning_rate", p.learning_rate},
          {"scale", p.scale},
          {"regularization", p.regularization},
          {"batch_size", p.batch_size},
          {"samples_per_iteration", p.samples_per_iteration},
          {"selection_samples", p.selection_samples},
          {"use_ground_truth", p.use_ground_truth},
          {"k0", p.budgets.k0},
          {"eps2", p.budgets.eps2},
          {"epsinf", p.budgets.epsinf},
          {"seed", cfg.pool.seed}};
}

nlohmann::json chain_section(const ExperimentConfig& cfg) {
  const skt::GaConfig& g = cfg.chain.ga;
  return {{"population", g.population},
          {"epochs", g.epochs},
          {"length", g.chain_length},
          {"mutation_rate", g.mutation_rate},
          {"tournament_size", g.tournament_size},
          {"elitism", g.elitism},
          {"batch_size", g.batch_size},
          {"seed", cfg.chain.seed}};
}

nlohmann::json student_section(const ExperimentConfig& cfg) {
  nlohmann::json j = skt::to_json(cfg.student.skt);
  j["architecture"] = cfg.student.architecture;
  j["init_seed"] = cfg.student.init_seed;
  return j;
}

}  // namespace dovkit::pipeline
