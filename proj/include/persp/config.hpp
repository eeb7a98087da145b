#pragma once

// Pipeline configuration: one JSON document, validated in full (unknown keys
// rejected) before any command does work.
//
//   {
//     "output_dir": "out",                      relative to the config file
//     "verbosity": 1,
//     "data":  { "annotations", "profiles", "text_embeddings", "socio_embeddings",
//                "columns": { "text", "annotator", "score" } },
//     "prep":  { "min_annotators_per_text", "min_annotations_per_annotator",
//                "train_fraction", "seed" },
//     "train": { "variants", "lr", "batch_size", "epochs", "seeds", "hidden_dims",
//                "projection_dims", "dropout_rate", "temperature", "contrastive_weight",
//                "normalize_embeddings", "exclude_self_from_softmax",
//                "simple_per_text", "threads" },
//     "homophily": { "k", "iterations", "seed", "metric", "attributes", "threads" },
//     "synth": { "annotator_count", "text_count", "annotations_per_text",
//                "embedding_dim", "latent_mean", "latent_sd", "embedding_noise",
//                "socio_embedding_dim", "socio_embedding_noise", "seed",
//                "attributes": [ { "name", "categories", "probabilities", "shifts" } ] }
//   }
//
// Data paths left out default to the files `synth` writes under output_dir.
// "variants" may contain "ablation": socio_contrastive with weight 0.

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "persp/corpus.hpp"
#include "persp/error.hpp"
#include "persp/homophily.hpp"
#include "persp/io.hpp"
#include "persp/model.hpp"
#include "persp/synth.hpp"
#include "persp/trainer.hpp"

namespace persp {

inline constexpr std::string_view kAblationName = "ablation";

struct PrepConfig {
  int min_annotators_per_text = 2;
  int min_annotations_per_annotator = 20;
  double train_fraction = 0.7;
  std::uint64_t seed = 0;
};

struct TrainConfig {
  std::vector<std::string> variants{"simple", "multitask", "socio_multihot", "socio_embedding", "socio_contrastive",
                                    std::string(kAblationName)};
  RunConfig run;
};

struct HomophilyConfig {
  BootstrapOptions bootstrap;
  std::vector<std::string> attributes;  // empty: every schema attribute
};

struct DataPaths {
  std::filesystem::path annotations, profiles, text_embeddings, socio_embeddings;
  ColumnMapping columns;
};

struct PipelineConfig {
  std::filesystem::path output_dir = "out";
  int verbosity = 1;
  DataPaths data;
  PrepConfig prep;
  TrainConfig train;
  HomophilyConfig homophily;
  std::optional<PopulationSpec> synth;

  std::filesystem::path synth_dir() const { return output_dir / "synth"; }
  std::filesystem::path prep_dir() const { return output_dir / "prep"; }
  std::filesystem::path train_dir() const { return output_dir / "train"; }
  std::filesystem::path eval_dir() const { return output_dir / "eval"; }
  std::filesystem::path homophily_dir() const { return output_dir / "homophily"; }
  std::filesystem::path report_dir() const { return output_dir / "report"; }
};

/// Variant and contrastive weight behind a variant name ("ablation" included).
inline std::pair<Variant, std::optional<double>> resolve_variant_name(std::string_view name) {
  if (name == kAblationName) return {Variant::socio_contrastive, 0.0};
  return {parse_variant(name), std::nullopt};
}

namespace detail {

class ConfigReader {
 public:
  ConfigReader(const nlohmann::json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + " must be an object");
  }

  /// Rejects keys that were never read.
  void done() const {
    for (const auto& [key, value] : j_.items())
      if (!seen_.contains(key)) throw ConfigError("unknown key '" + where_ + "." + key + "'");
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("bad value for '" + where_ + "." + key + "': " + e.what());
    }
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  const nlohmann::json& sub(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

 private:
  const nlohmann::json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

inline std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  if (p.empty()) return {};
  std::filesystem::path path(p);
  return (path.is_absolute() ? path : base / path).lexically_normal();
}

}  // namespace detail

inline PipelineConfig parse_config(const nlohmann::json& root, const std::filesystem::path& base_dir = ".") {
  using detail::ConfigReader;
  PipelineConfig cfg;
  ConfigReader top(root, "config");
  std::string output_dir = "out";
  top.get("output_dir", output_dir);
  cfg.output_dir = detail::resolve(base_dir, output_dir);
  top.get("verbosity", cfg.verbosity);

  if (top.has("data")) {
    ConfigReader d(top.sub("data"), "data");
    std::string a, p, t, s;
    d.get("annotations", a);
    d.get("profiles", p);
    d.get("text_embeddings", t);
    d.get("socio_embeddings", s);
    cfg.data.annotations = detail::resolve(base_dir, a);
    cfg.data.profiles = detail::resolve(base_dir, p);
    cfg.data.text_embeddings = detail::resolve(base_dir, t);
    cfg.data.socio_embeddings = detail::resolve(base_dir, s);
    if (d.has("columns")) {
      ConfigReader c(d.sub("columns"), "data.columns");
      c.get("text", cfg.data.columns.text);
      c.get("annotator", cfg.data.columns.annotator);
      c.get("score", cfg.data.columns.score);
      c.done();
    }
    d.done();
  }

  if (top.has("prep")) {
    ConfigReader p(top.sub("prep"), "prep");
    p.get("min_annotators_per_text", cfg.prep.min_annotators_per_text);
    p.get("min_annotations_per_annotator", cfg.prep.min_annotations_per_annotator);
    p.get("train_fraction", cfg.prep.train_fraction);
    p.get("seed", cfg.prep.seed);
    p.done();
  }
  if (cfg.prep.min_annotators_per_text < 1 || cfg.prep.min_annotations_per_annotator < 1)
    throw ConfigError("prep thresholds must be >= 1");
  if (!(cfg.prep.train_fraction > 0.0 && cfg.prep.train_fraction < 1.0))
    throw ConfigError("prep.train_fraction must lie in (0, 1)");

  RunConfig& run = cfg.train.run;
  if (top.has("train")) {
    ConfigReader t(top.sub("train"), "train");
    t.get("variants", cfg.train.variants);
    t.get("lr", run.lr);
    t.get("batch_size", run.batch_size);
    t.get("epochs", run.epochs);
    t.get("seeds", run.seeds);
    t.get("hidden_dims", run.spec.hidden_dims);
    t.get("projection_dims", run.spec.projection_dims);
    t.get("dropout_rate", run.spec.dropout_rate);
    t.get("temperature", run.spec.temperature);
    t.get("contrastive_weight", run.spec.contrastive_weight);
    t.get("normalize_embeddings", run.spec.normalize_embeddings);
    t.get("exclude_self_from_softmax", run.spec.exclude_self_from_softmax);
    t.get("simple_per_text", run.simple_per_text);
    t.get("threads", run.threads);
    t.done();
  }
  run.validate();
  if (cfg.train.variants.empty()) throw ConfigError("train.variants must not be empty");
  for (const auto& v : cfg.train.variants) resolve_variant_name(v);
  if (!(run.spec.dropout_rate >= 0.0 && run.spec.dropout_rate < 1.0)) throw ConfigError("dropout_rate must lie in [0, 1)");
  if (!(run.spec.temperature > 0.0)) throw ConfigError("temperature must be > 0");
  if (!(run.spec.contrastive_weight >= 0.0)) throw ConfigError("contrastive_weight must be >= 0");

  if (top.has("homophily")) {
    ConfigReader h(top.sub("homophily"), "homophily");
    h.get("k", cfg.homophily.bootstrap.k);
    h.get("iterations", cfg.homophily.bootstrap.iterations);
    h.get("seed", cfg.homophily.bootstrap.seed);
    std::string metric = "cosine";
    h.get("metric", metric);
    cfg.homophily.bootstrap.metric = parse_metric(metric);
    h.get("attributes", cfg.homophily.attributes);
    h.get("threads", cfg.homophily.bootstrap.threads);
    h.done();
  }
  if (cfg.homophily.bootstrap.k < 1 || cfg.homophily.bootstrap.iterations < 1)
    throw ConfigError("homophily.k and homophily.iterations must be >= 1");

  if (top.has("synth")) {
    ConfigReader s(top.sub("synth"), "synth");
    PopulationSpec spec;
    s.get("annotator_count", spec.annotator_count);
    s.get("text_count", spec.text_count);
    s.get("annotations_per_text", spec.annotations_per_text);
    s.get("embedding_dim", spec.embedding_dim);
    s.get("latent_mean", spec.latent_mean);
    s.get("latent_sd", spec.latent_sd);
    s.get("embedding_noise", spec.embedding_noise);
    s.get("socio_embedding_dim", spec.socio_embedding_dim);
    s.get("socio_embedding_noise", spec.socio_embedding_noise);
    s.get("seed", spec.seed);
    if (s.has("attributes")) {
      const auto& arr = s.sub("attributes");
      if (!arr.is_array()) throw ConfigError("synth.attributes must be an array");
      for (std::size_t i = 0; i < arr.size(); ++i) {
        ConfigReader a(arr[i], "synth.attributes[" + std::to_string(i) + "]");
        SynthAttribute attr;
        a.get("name", attr.name);
        a.get("categories", attr.categories);
        a.get("probabilities", attr.probabilities);
        a.get("shifts", attr.shifts);
        a.done();
        spec.attributes.push_back(std::move(attr));
      }
    }
    s.done();
    spec.validate();
    cfg.synth = std::move(spec);
  }

  top.done();

  if (cfg.data.annotations.empty()) cfg.data.annotations = cfg.synth_dir() / "annotations.csv";
  if (cfg.data.profiles.empty()) cfg.data.profiles = cfg.synth_dir() / "profiles.csv";
  if (cfg.data.text_embeddings.empty()) cfg.data.text_embeddings = cfg.synth_dir() / "text_embeddings.csv";
  if (cfg.data.socio_embeddings.empty()) cfg.data.socio_embeddings = cfg.synth_dir() / "socio_embeddings.csv";
  return cfg;
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("config file '" + path.string() + "' not found");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config is not valid JSON: " + std::string(e.what()));
  }
  return parse_config(j, path.has_parent_path() ? path.parent_path() : std::filesystem::path("."));
}

}  // namespace persp
