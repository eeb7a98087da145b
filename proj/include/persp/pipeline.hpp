#pragma once

// The CLI commands as library functions: synth, prep, train, eval,
// homophily and report. Every output lands under the configured output
// directory; inputs are never modified.

#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "persp/config.hpp"
#include "persp/corpus.hpp"
#include "persp/eval.hpp"
#include "persp/features.hpp"
#include "persp/homophily.hpp"
#include "persp/io.hpp"
#include "persp/model.hpp"
#include "persp/synth.hpp"
#include "persp/trainer.hpp"

namespace persp {

/// Flags that override config values for one invocation.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> variant;
  std::optional<double> lambda;
  std::optional<unsigned> threads;
  bool dump_plan = false;
  std::filesystem::path reps;  // homophily on an external representation file
};

inline std::string display_name(std::string_view variant) {
  if (variant == "simple") return "Simple Model";
  if (variant == "multitask") return "Multi-task";
  if (variant == "socio_multihot") return "Socio Multi-hot";
  if (variant == "socio_embedding") return "Socio Embedding";
  if (variant == "socio_contrastive") return "Socio Contrastive";
  if (variant == kAblationName) return "Ablation (w/o contrastive)";
  return std::string(variant);
}

inline const std::vector<std::string>& canonical_variant_order() {
  static const std::vector<std::string> order{"simple",          "multitask",         "socio_multihot",
                                              "socio_embedding", "socio_contrastive", std::string(kAblationName)};
  return order;
}

inline void require_file(const std::filesystem::path& p, std::string_view what) {
  if (!std::filesystem::exists(p))
    throw DataError("missing " + std::string(what) + ": '" + p.string() + "'");
}

inline void write_json(const std::filesystem::path& p, const nlohmann::ordered_json& j) {
  io::write_file(p, j.dump(2) + "\n");
}

class Pipeline {
 public:
  Pipeline(PipelineConfig cfg, Overrides ov = {}, std::ostream* log = &std::cerr)
      : cfg_(std::move(cfg)), ov_(std::move(ov)), log_(log) {
    if (ov_.threads) {
      cfg_.train.run.threads = *ov_.threads;
      cfg_.homophily.bootstrap.threads = *ov_.threads;
    }
    if (ov_.lambda) {
      if (!(*ov_.lambda >= 0.0)) throw ConfigError("--lambda must be >= 0");
      cfg_.train.run.spec.contrastive_weight = *ov_.lambda;
    }
    if (ov_.variant) {
      resolve_variant_name(*ov_.variant);
      cfg_.train.variants = {*ov_.variant};
    }
  }

  const PipelineConfig& config() const { return cfg_; }

  void synth() {
    if (!cfg_.synth) throw ConfigError("config has no 'synth' section");
    PopulationSpec spec = *cfg_.synth;
    if (ov_.seed) spec.seed = *ov_.seed;
    const SynthBundle b = generate_all(spec);
    const auto dir = cfg_.synth_dir();
    io::write_file(dir / "annotations.csv", annotations_to_csv(b.dataset));
    io::write_file(dir / "profiles.csv", profiles_to_csv(b.population.profiles, spec.attribute_names()));
    io::write_file(dir / "text_embeddings.csv", embeddings_to_csv(b.corpus.embeddings));
    io::write_file(dir / "socio_embeddings.csv", embeddings_to_csv(b.socio_embeddings));
    std::string latent = "text_id,latent\n";
    for (std::size_t t = 0; t < b.corpus.text_ids.size(); ++t)
      io::append_csv_row(latent, {b.corpus.text_ids[t], io::format_double(b.corpus.latent[t])});
    io::write_file(dir / "latent.csv", latent);
    write_json(dir / "population.json", population_spec_to_json(spec));
    say(1, "synth: " + std::to_string(b.dataset.size()) + " annotations, " +
               std::to_string(b.population.profiles.size()) + " annotators -> " + dir.string());
  }

  void prep() {
    require_file(cfg_.data.annotations, "annotation file");
    require_file(cfg_.data.profiles, "profile file");
    const Dataset raw = load_annotations(cfg_.data.annotations, cfg_.data.columns);
    const ProfileMap profiles = load_profiles(cfg_.data.profiles);
    const Dataset labelled = binarize(raw).with_profiles(profiles);
    const FilterResult filtered =
        filter_dataset(labelled, cfg_.prep.min_annotators_per_text, cfg_.prep.min_annotations_per_annotator);
    const std::uint64_t seed = ov_.seed.value_or(cfg_.prep.seed);
    const SplitPair split = split_by_text(filtered.dataset, cfg_.prep.train_fraction, seed);
    const auto dir = cfg_.prep_dir();
    io::write_file(dir / "train.csv", annotations_to_csv(split.train, cfg_.data.columns));
    io::write_file(dir / "test.csv", annotations_to_csv(split.test, cfg_.data.columns));
    write_json(dir / "filter_report.json", filtered.report.to_json());
    write_json(dir / "split.json", {{"seed", seed},
                                    {"train_fraction", split.train_fraction},
                                    {"before_filter", stats_to_json(labelled.stats())},
                                    {"after_filter", stats_to_json(filtered.dataset.stats())},
                                    {"train", stats_to_json(split.train.stats())},
                                    {"test", stats_to_json(split.test.stats())}});
    say(1, "prep: " + std::to_string(split.train.size()) + " train / " + std::to_string(split.test.size()) +
               " test records -> " + dir.string());
  }

  void train() {
    Inputs in = load_inputs();
    for (const auto& name : cfg_.train.variants) {
      auto [variant, weight] = resolve_variant_name(name);
      RunConfig run = cfg_.train.run;
      run.spec.variant = variant;
      if (weight) run.spec.contrastive_weight = *weight;
      if (ov_.seed) run.seeds = {*ov_.seed};
      run.output_dir = cfg_.train_dir() / name;
      TrainingInputs ti = in.training_inputs(variant);
      const RunResult result = train_suite(run, ti);
      if (ov_.dump_plan)
        for (const auto& r : result.runs)
          for (std::size_t e = 0; e < r.plans.size(); ++e)
            write_json(run_dir(run.output_dir, r.seed) / ("plan_epoch" + std::to_string(e + 1) + ".json"),
                       r.plans[e].to_json());
      say(1, "train: " + name + " f1 " + io::format_fixed(result.aggregate.f1.mean) + " +/- " +
                 io::format_fixed(result.aggregate.f1.std) + " over " + std::to_string(result.runs.size()) + " runs");
    }
  }

  void eval() {
    Inputs in = load_inputs();
    nlohmann::ordered_json all = nlohmann::ordered_json::object();
    std::string table = "model,precision,precision_std,recall,recall_std,f1,f1_std,auc,auc_std,runs\n";
    std::size_t evaluated = 0;
    for (const auto& name : cfg_.train.variants) {
      const auto vdir = cfg_.train_dir() / name;
      const std::vector<std::uint64_t> seeds = seeds_for_eval();
      std::vector<MetricsReport> reports;
      nlohmann::ordered_json per_seed = nlohmann::ordered_json::array();
      std::map<std::pair<std::string, std::string>, std::vector<MetricsReport>> group_runs;
      std::vector<std::pair<std::string, std::string>> group_order;
      for (std::uint64_t seed : seeds) {
        const auto ckdir = run_dir(vdir, seed) / "checkpoint";
        require_file(ckdir / "manifest.json", "checkpoint for " + name + " seed " + std::to_string(seed));
        const Checkpoint ck = load_checkpoint(ckdir);
        const TrainingInputs ti = in.training_inputs(ck.spec.variant);
        const Predictions pred = predict(ck.spec, ck.params, in.split.test, feature_context(ck.spec, ti));
        MetricsReport m = evaluate(pred.probs, pred.labels);
        reports.push_back(m);
        auto mj = m.to_json();
        mj["seed"] = seed;
        if (ck.spec.variant == Variant::multitask) mj["mean_head_rows"] = pred.mean_head_rows;
        per_seed.push_back(mj);
        if (m.has_auc)
          io::write_file(cfg_.eval_dir() / "roc" / (name + "_seed" + std::to_string(seed) + ".csv"),
                         roc_to_csv(roc_curve(pred.probs, pred.labels)));
        for (const auto& g : group_breakdown(pred.probs, pred.labels, pred.annotator_ids, in.profiles, in.schema))
          for (const auto& c : g.categories) {
            const auto key = std::make_pair(g.attribute, c.category);
            if (!group_runs.contains(key)) group_order.push_back(key);
            group_runs[key].push_back(c.metrics);
          }
      }
      const AggregateReport agg = aggregate_runs(reports);
      all[name] = {{"aggregate", agg.to_json()}, {"runs", per_seed}};
      io::append_csv_row(table, {name, io::format_fixed(agg.precision.mean), io::format_fixed(agg.precision.std),
                                 io::format_fixed(agg.recall.mean), io::format_fixed(agg.recall.std),
                                 io::format_fixed(agg.f1.mean), io::format_fixed(agg.f1.std),
                                 io::format_fixed(agg.auc.mean), io::format_fixed(agg.auc.std),
                                 std::to_string(agg.runs)});
      std::string groups = "attribute,category,n,f1,f1_std,precision,recall,runs\n";
      nlohmann::ordered_json gj = nlohmann::ordered_json::array();
      for (const auto& key : group_order) {
        const auto& runs = group_runs[key];
        const AggregateReport ga = aggregate_runs(runs);
        io::append_csv_row(groups, {key.first, key.second, std::to_string(runs.front().n),
                                    io::format_fixed(ga.f1.mean), io::format_fixed(ga.f1.std),
                                    io::format_fixed(ga.precision.mean), io::format_fixed(ga.recall.mean),
                                    std::to_string(runs.size())});
        gj.push_back({{"attribute", key.first}, {"category", key.second}, {"n", runs.front().n},
                      {"aggregate", ga.to_json()}});
      }
      io::write_file(cfg_.eval_dir() / "groups" / (name + ".csv"), groups);
      write_json(cfg_.eval_dir() / "groups" / (name + ".json"), gj);
      ++evaluated;
      say(1, "eval: " + name + " f1 " + io::format_fixed(agg.f1.mean));
    }
    if (evaluated == 0) throw DataError("no trained variants to evaluate");
    write_json(cfg_.eval_dir() / "metrics.json", all);
    io::write_file(cfg_.eval_dir() / "table2.csv", table);
  }

  void homophily() {
    Inputs in = load_inputs(/*need_text=*/false);
    std::vector<std::string> attributes = cfg_.homophily.attributes;
    if (attributes.empty())
      for (const auto& a : in.schema.attributes()) attributes.push_back(a.name);
    BootstrapOptions opt = cfg_.homophily.bootstrap;
    if (ov_.seed) opt.seed = *ov_.seed;

    std::vector<std::pair<std::string, EmbeddingTable>> spaces;
    if (!ov_.reps.empty()) {
      require_file(ov_.reps, "representation file");
      spaces.emplace_back("external", parse_reps_csv(io::read_file(ov_.reps)));
    } else {
      const auto vdir = cfg_.train_dir() / "socio_contrastive";
      ProfileMap pool;
      for (const Dataset* ds : {&in.split.train, &in.split.test})
        for (const auto& id : ds->annotator_ids()) pool.emplace(id, in.profiles.at(id));
      for (std::uint64_t seed : seeds_for_eval()) {
        const auto ckdir = run_dir(vdir, seed) / "checkpoint";
        require_file(ckdir / "manifest.json", "socio_contrastive checkpoint for seed " + std::to_string(seed));
        const Checkpoint ck = load_checkpoint(ckdir);
        EmbeddingTable reps = extract_socio_reps(ck.spec, ck.params, pool, in.schema);
        const std::string tag = "seed" + std::to_string(seed);
        io::write_file(cfg_.homophily_dir() / ("reps_" + tag + ".csv"), reps_to_csv(reps));
        spaces.emplace_back(tag, std::move(reps));
      }
    }
    nlohmann::ordered_json all = nlohmann::ordered_json::object();
    for (std::size_t s = 0; s < spaces.size(); ++s) {
      const auto& [tag, reps] = spaces[s];
      const RepSpace space = RepSpace::from_tables(reps, in.profiles, attributes);
      const DistanceCache cache(space, opt.metric);
      std::vector<HomophilyRow> rows;
      for (const auto& a : attributes) rows.push_back(bootstrap_homophily(space, a, opt, &cache));
      nlohmann::ordered_json rj = nlohmann::ordered_json::array();
      for (const auto& r : rows) rj.push_back(r.to_json());
      all[tag] = {{"annotators", space.size()}, {"rows", rj}};
      io::write_file(cfg_.homophily_dir() / ("table3_" + tag + ".csv"), homophily_to_csv(rows));
      // The first representation space is the headline table.
      if (s == 0) io::write_file(cfg_.homophily_dir() / "table3.csv", homophily_to_csv(rows));
      say(1, "homophily: " + tag + " over " + std::to_string(space.size()) + " annotators");
    }
    write_json(cfg_.homophily_dir() / "homophily.json", all);
  }

  void report() {
    std::string md = "# Perspective modeling report\n\n";
    std::vector<std::string> gaps;
    std::string table = "model,precision,precision_std,recall,recall_std,f1,f1_std,auc,auc_std,runs\n";
    const auto metrics_path = cfg_.eval_dir() / "metrics.json";
    nlohmann::json metrics;
    if (std::filesystem::exists(metrics_path)) metrics = nlohmann::json::parse(io::read_file(metrics_path));
    else gaps.push_back("eval/metrics.json is missing; run `eval` first");

    md += "## Model comparison\n\n| Model | Precision | Recall | F1 | AUC | Runs |\n|---|---|---|---|---|---|\n";
    auto pm = [](const nlohmann::json& a, const char* key) {
      return io::format_fixed(a.at(key).at("mean").get<double>()) + " ± " +
             io::format_fixed(a.at(key).at("std").get<double>());
    };
    for (const auto& name : canonical_variant_order()) {
      if (!metrics.is_object() || !metrics.contains(name)) {
        if (metrics.is_object()) gaps.push_back("no evaluation results for " + display_name(name));
        continue;
      }
      const auto& a = metrics.at(name).at("aggregate");
      md += "| " + display_name(name) + " | " + pm(a, "precision") + " | " + pm(a, "recall") + " | " + pm(a, "f1") +
            " | " + pm(a, "auc") + " | " + std::to_string(a.at("runs").get<std::size_t>()) + " |\n";
      io::append_csv_row(table, {name, io::format_fixed(a["precision"]["mean"].get<double>()),
                                 io::format_fixed(a["precision"]["std"].get<double>()),
                                 io::format_fixed(a["recall"]["mean"].get<double>()),
                                 io::format_fixed(a["recall"]["std"].get<double>()),
                                 io::format_fixed(a["f1"]["mean"].get<double>()),
                                 io::format_fixed(a["f1"]["std"].get<double>()),
                                 io::format_fixed(a["auc"]["mean"].get<double>()),
                                 io::format_fixed(a["auc"]["std"].get<double>()),
                                 std::to_string(a["runs"].get<std::size_t>())});
    }
    if (metrics.is_object() && metrics.contains("socio_contrastive") && metrics.contains(kAblationName)) {
      const double with = metrics["socio_contrastive"]["aggregate"]["f1"]["mean"].get<double>();
      const double without = metrics[std::string(kAblationName)]["aggregate"]["f1"]["mean"].get<double>();
      md += "\nContrastive term ablation: F1 delta (with - without) = " + io::format_fixed(with - without) + "\n";
    }

    md += "\n## Group slices (F1, mean over runs)\n\n";
    bool any_group = false;
    for (const auto& name : canonical_variant_order()) {
      const auto gpath = cfg_.eval_dir() / "groups" / (name + ".csv");
      if (!std::filesystem::exists(gpath)) continue;
      any_group = true;
      md += "### " + display_name(name) + "\n\n| Attribute | Category | n | F1 |\n|---|---|---|---|\n";
      const io::CsvTable g = io::read_csv(gpath);
      for (const auto& row : g.rows)
        md += "| " + row[g.require_column("attribute")] + " | " + row[g.require_column("category")] + " | " +
              row[g.require_column("n")] + " | " + row[g.require_column("f1")] + " ± " +
              row[g.require_column("f1_std")] + " |\n";
      md += "\n";
    }
    if (!any_group) gaps.push_back("no group breakdowns found");

    md += "## Homophily of socio representations\n\n";
    const auto hpath = cfg_.homophily_dir() / "table3.csv";
    if (std::filesystem::exists(hpath)) {
      md += "| Attribute | Observed | Random | Ratio |\n|---|---|---|---|\n";
      const io::CsvTable h = io::read_csv(hpath);
      for (const auto& row : h.rows)
        md += "| " + row[0] + " | " + row[1] + " ± " + row[2] + " | " + row[3] + " ± " + row[4] + " | " + row[5] +
              " ± " + row[6] + " |\n";
    } else {
      gaps.push_back("homophily/table3.csv is missing; run `homophily` first");
      md += "_not available_\n";
    }
    if (!gaps.empty()) {
      md += "\n## Gaps\n\n";
      for (const auto& g : gaps) md += "- " + g + "\n";
      for (const auto& g : gaps) say(0, "report warning: " + g);
    }
    io::write_file(cfg_.report_dir() / "report.md", md);
    io::write_file(cfg_.report_dir() / "table2.csv", table);
    say(1, "report: " + (cfg_.report_dir() / "report.md").string());
  }

 private:
  struct Inputs {
    SplitPair split;
    ProfileMap profiles;
    SocioSchema schema;
    EmbeddingTable text_embeddings;
    std::optional<EmbeddingTable> socio_embeddings;

    TrainingInputs training_inputs(Variant v) const {
      if (v == Variant::socio_embedding && !socio_embeddings)
        throw DataError("socio_embedding needs an annotator embedding file");
      return {&split, &text_embeddings, &schema, &profiles,
              v == Variant::socio_embedding ? &*socio_embeddings : nullptr};
    }
  };

  Inputs load_inputs(bool need_text = true) const {
    const auto dir = cfg_.prep_dir();
    require_file(dir / "train.csv", "prepared train split (run `prep` first)");
    require_file(dir / "test.csv", "prepared test split (run `prep` first)");
    require_file(cfg_.data.profiles, "profile file");
    Inputs in;
    in.profiles = load_profiles(cfg_.data.profiles);
    in.schema = build_schema(in.profiles);
    in.split.train = binarize(load_annotations(dir / "train.csv", cfg_.data.columns)).with_profiles(in.profiles);
    in.split.test = binarize(load_annotations(dir / "test.csv", cfg_.data.columns)).with_profiles(in.profiles);
    if (need_text) {
      require_file(cfg_.data.text_embeddings, "text embedding file");
      in.text_embeddings = load_embeddings(cfg_.data.text_embeddings);
    }
    bool wants_socio = false;
    for (const auto& n : cfg_.train.variants) wants_socio |= resolve_variant_name(n).first == Variant::socio_embedding;
    if (need_text && wants_socio) {
      require_file(cfg_.data.socio_embeddings, "annotator embedding file");
      in.socio_embeddings = load_embeddings(cfg_.data.socio_embeddings);
    }
    return in;
  }

  std::vector<std::uint64_t> seeds_for_eval() const {
    if (ov_.seed) return {*ov_.seed};
    return cfg_.train.run.seeds;
  }

  void say(int level, const std::string& msg) const {
    if (log_ && cfg_.verbosity >= level) *log_ << msg << "\n";
  }

  PipelineConfig cfg_;
  Overrides ov_;
  std::ostream* log_;
};

}  // namespace persp
