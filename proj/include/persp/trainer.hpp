#pragma once

// Training regimes: one run per seed, the multi-seed suite, and the
// contrastive-weight ablation.

#include <algorithm>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "persp/batcher.hpp"
#include "persp/corpus.hpp"
#include "persp/error.hpp"
#include "persp/eval.hpp"
#include "persp/features.hpp"
#include "persp/io.hpp"
#include "persp/model.hpp"
#include "persp/objectives.hpp"

namespace persp {

/// Annotator id used for aggregated (majority-vote) records of the Simple Model.
inline constexpr std::string_view kMajorityAnnotator = "⟂majority⟂";

struct RunConfig {
  ModelSpec spec;  // text_dim, socio_width and annotator_count are filled from the data
  double lr = 0.01;
  std::size_t batch_size = 32;
  std::size_t epochs = 7;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5};
  bool simple_per_text = true;  // false: Simple trains on every annotation with its text's majority label
  unsigned threads = 1;
  std::filesystem::path output_dir;  // empty: keep everything in memory

  void validate() const {
    if (!(lr > 0.0)) throw ConfigError("lr must be > 0");
    if (batch_size < 2) throw ConfigError("batch_size must be >= 2");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (seeds.empty()) throw ConfigError("at least one seed is required");
  }
};

/// Read-only inputs shared by every run.
struct TrainingInputs {
  const SplitPair* split = nullptr;
  const EmbeddingTable* text_embeddings = nullptr;
  const SocioSchema* schema = nullptr;
  const ProfileMap* profiles = nullptr;                 // covers train and test annotators
  const EmbeddingTable* socio_embeddings = nullptr;     // socio_embedding variant only
};

struct StepLog {
  std::size_t step = 0;
  std::size_t epoch = 0;
  LossReport loss;

  nlohmann::ordered_json to_json() const {
    return {{"step", step},
            {"epoch", epoch},
            {"total", loss.total},
            {"classification", loss.classification},
            {"contrastive_pos", loss.contrastive_pos},
            {"contrastive_neg", loss.contrastive_neg},
            {"pos_pairs", loss.pos_pairs},
            {"neg_pairs", loss.neg_pairs}};
  }
};

struct Predictions {
  std::vector<std::string> text_ids;
  std::vector<std::string> annotator_ids;
  std::vector<int> labels;
  std::vector<double> probs;
  std::size_t mean_head_rows = 0;  // multitask rows served by the mean-head fallback

  std::string to_csv() const {
    std::string out = "text_id,annotator_id,label,prob\n";
    for (std::size_t i = 0; i < probs.size(); ++i)
      io::append_csv_row(out, {text_ids[i], annotator_ids[i], std::to_string(labels[i]), io::format_double(probs[i])});
    return out;
  }
};

struct RunEntry {
  std::uint64_t seed = 0;
  ModelSpec spec;
  ModelParams params;
  std::vector<StepLog> log;
  std::vector<BatchPlan> plans;  // one per epoch
  Predictions predictions;
  MetricsReport metrics;
  std::filesystem::path checkpoint_dir;
};

struct RunResult {
  std::vector<RunEntry> runs;
  AggregateReport aggregate;
};

/// Fills data-dependent widths of the spec and validates it.
inline ModelSpec resolve_spec(ModelSpec spec, const TrainingInputs& in) {
  spec.text_dim = in.text_embeddings->dimension();
  switch (socio_source(spec.variant)) {
    case SocioSource::multihot:
      if (!in.schema) throw ConfigError(std::string(to_string(spec.variant)) + " needs a socio schema");
      spec.socio_width = in.schema->total_width();
      break;
    case SocioSource::embedding:
      if (!in.socio_embeddings) throw ConfigError("socio_embedding needs an annotator embedding table");
      spec.socio_width = in.socio_embeddings->dimension();
      break;
    case SocioSource::none:
      spec.socio_width = 0;
  }
  if (spec.variant == Variant::multitask) spec.annotator_count = in.split->train.annotator_ids().size();
  spec.validate();
  return spec;
}

inline FeatureContext feature_context(const ModelSpec& spec, const TrainingInputs& in) {
  FeatureContext ctx;
  ctx.text_embeddings = in.text_embeddings;
  ctx.socio = socio_source(spec.variant);
  ctx.schema = in.schema;
  ctx.profiles = in.profiles;
  ctx.socio_embeddings = in.socio_embeddings;
  return ctx;
}

/// Fails before training when any record lacks the features its variant needs.
inline void check_coverage(const ModelSpec& spec, const TrainingInputs& in) {
  if (!in.split || !in.text_embeddings) throw ConfigError("training needs a split and text embeddings");
  for (const Dataset* ds : {&in.split->train, &in.split->test})
    for (const auto& r : ds->records()) {
      if (!in.text_embeddings->contains(r.text_id))
        throw DataError("no text embedding for text_id '" + r.text_id + "'");
      if (r.label < 0) throw DataError("records must be binarized before training");
      const SocioSource src = socio_source(spec.variant);
      if (src == SocioSource::multihot && !in.profiles->contains(r.annotator_id))
        throw DataError("annotator '" + r.annotator_id + "' has no profile");
      if (src == SocioSource::embedding && !in.socio_embeddings->contains(r.annotator_id))
        throw DataError("no socio embedding for annotator '" + r.annotator_id + "'");
    }
}

/// Records the Simple Model trains on.
inline Dataset simple_training_set(const Dataset& train, bool per_text) {
  const auto votes = majority_vote(train);
  std::vector<AnnotationRecord> out;
  if (per_text) {
    for (const auto& [text, label] : votes) out.push_back({text, std::string(kMajorityAnnotator), label, label});
  } else {
    for (const auto& r : train.records()) {
      const int y = votes.at(r.text_id);
      out.push_back({r.text_id, r.annotator_id, y, y});
    }
  }
  return Dataset(std::move(out));
}

/// Loss and gradients for one batch; shared by training and gradient checks.
struct StepResult {
  LossReport loss;
  Gradients grads;
  Eigen::VectorXd probs;
};

inline StepResult loss_and_gradients(const ModelSpec& spec, const ModelParams& params, const Batch& batch,
                                     std::uint64_t dropout_seed) {
  ForwardResult fr = forward(spec, params, batch, Mode::train, dropout_seed);
  const BceResult bce = bce_loss(fr.probs, batch.labels);
  std::optional<ContrastiveResult> con;
  if (spec.variant == Variant::socio_contrastive)
    con = contrastive_loss(fr.trace.contrastive_embedding, batch,
                           {spec.temperature, spec.exclude_self_from_softmax});
  const CombinedLoss combined = combined_loss(bce, con ? &*con : nullptr, spec.contrastive_weight);
  const bool use_dE = con && spec.contrastive_weight > 0.0;
  StepResult out;
  out.loss = combined.report;
  out.grads = backward(spec, params, fr.trace, combined.dL_dlogits, use_dE ? &combined.dL_dE : nullptr);
  out.probs = std::move(fr.probs);
  return out;
}

/// Eval-mode predictions for every record of `dataset`.
inline Predictions predict(const ModelSpec& spec, const ModelParams& params, const Dataset& dataset,
                           const FeatureContext& ctx, std::size_t chunk = 256) {
  Predictions p;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < dataset.size(); start += chunk) {
    idx.clear();
    for (std::size_t i = start; i < std::min(dataset.size(), start + chunk); ++i) idx.push_back(i);
    const Batch b = assemble_batch(dataset, idx, ctx);
    const ForwardResult fr = forward(spec, params, b, Mode::eval);
    for (std::size_t r = 0; r < b.size(); ++r) {
      p.text_ids.push_back(b.text_ids[r]);
      p.annotator_ids.push_back(b.annotator_ids[r]);
      p.labels.push_back(b.labels[r]);
      p.probs.push_back(fr.probs[static_cast<Eigen::Index>(r)]);
      if (spec.variant == Variant::multitask && fr.trace.heads[r] < 0) ++p.mean_head_rows;
    }
  }
  return p;
}

inline std::string log_to_jsonl(const std::vector<StepLog>& log) {
  std::string out;
  for (const auto& s : log) out += s.to_json().dump() + "\n";
  return out;
}

inline std::filesystem::path run_dir(const std::filesystem::path& root, std::uint64_t seed) {
  return root / ("seed_" + std::to_string(seed));
}

/// Trains one model on split.train and scores it on split.test against
/// individual annotator labels.
inline RunEntry train_one(const RunConfig& config, std::uint64_t seed, const TrainingInputs& in) {
  config.validate();
  const ModelSpec spec = resolve_spec(config.spec, in);
  check_coverage(spec, in);

  const Dataset train = spec.variant == Variant::simple ? simple_training_set(in.split->train, config.simple_per_text)
                                                        : in.split->train;
  RunEntry run;
  run.seed = seed;
  run.spec = spec;
  run.params = init_params(spec, seed, spec.variant == Variant::multitask ? in.split->train.annotator_ids()
                                                                          : std::vector<std::string>{});

  std::set<std::string> touched;
  FeatureContext ctx = feature_context(spec, in);
  ctx.on_text_access = [&touched](const std::string& id) { touched.insert(id); };

  const AdamConfig adam{config.lr};
  const std::uint64_t dropout_root = derive_seed(seed, "dropout");
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    run.plans.push_back(plan_epoch(train, config.batch_size, seed + epoch));
    for (const auto& indices : run.plans.back().batches) {
      const Batch batch = assemble_batch(train, indices, ctx);
      StepResult sr = loss_and_gradients(spec, run.params, batch, derive_seed(dropout_root, step));
      adam_step(run.params, sr.grads, adam);
      ++step;
      run.log.push_back({step, epoch + 1, sr.loss});
    }
  }

  for (const auto& id : in.split->test.text_ids())
    if (touched.contains(id)) throw DataError("test text '" + id + "' was read during training");

  run.predictions = predict(spec, run.params, in.split->test, feature_context(spec, in));
  run.metrics = evaluate(run.predictions.probs, run.predictions.labels);

  if (!config.output_dir.empty()) {
    const auto dir = run_dir(config.output_dir, seed);
    run.checkpoint_dir = dir / "checkpoint";
    save_checkpoint(run.checkpoint_dir, spec, run.params, seed);
    io::write_file(dir / "log.jsonl", log_to_jsonl(run.log));
    io::write_file(dir / "predictions.csv", run.predictions.to_csv());
    nlohmann::ordered_json metrics = run.metrics.to_json();
    if (spec.variant == Variant::multitask) metrics["mean_head_rows"] = run.predictions.mean_head_rows;
    io::write_file(dir / "metrics.json", metrics.dump(2) + "\n");
  }
  return run;
}

/// One run per seed (up to config.threads at a time), then aggregation.
inline RunResult train_suite(const RunConfig& config, const TrainingInputs& in) {
  config.validate();
  RunResult result;
  result.runs.resize(config.seeds.size());
  std::vector<std::exception_ptr> errors(config.seeds.size());
  auto work = [&](std::size_t i) {
    try {
      result.runs[i] = train_one(config, config.seeds[i], in);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  const unsigned threads = std::max(1u, std::min<unsigned>(config.threads, static_cast<unsigned>(config.seeds.size())));
  if (threads == 1) {
    for (std::size_t i = 0; i < config.seeds.size(); ++i) work(i);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < threads; ++w)
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < config.seeds.size(); i += threads) work(i);
      });
    for (auto& t : pool) t.join();
  }
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (!errors[i]) continue;
    try {
      std::rethrow_exception(errors[i]);
    } catch (const Error& e) {
      throw Error("run with seed " + std::to_string(config.seeds[i]) + " failed: " + e.what(), e.exit_code());
    } catch (const std::exception& e) {
      throw Error("run with seed " + std::to_string(config.seeds[i]) + " failed: " + e.what(), 1);
    }
  }
  std::vector<MetricsReport> reports;
  for (const auto& r : result.runs) reports.push_back(r.metrics);
  result.aggregate = aggregate_runs(reports);
  if (!config.output_dir.empty())
    io::write_file(config.output_dir / "aggregate.json", result.aggregate.to_json().dump(2) + "\n");
  return result;
}

struct AblationResult {
  RunResult with_contrastive;
  RunResult without_contrastive;
  double f1_delta = 0.0;  // with minus without, mean F1

  nlohmann::ordered_json to_json() const {
    return {{"with_contrastive", with_contrastive.aggregate.to_json()},
            {"without_contrastive", without_contrastive.aggregate.to_json()},
            {"f1_delta", f1_delta}};
  }
};

/// The socio_contrastive suite trained with weight 1 and weight 0 on the
/// same seeds.
inline AblationResult run_ablation(const RunConfig& config, const TrainingInputs& in) {
  if (config.spec.variant != Variant::socio_contrastive)
    throw ConfigError("the ablation applies to the socio_contrastive variant only");
  RunConfig with = config, without = config;
  with.spec.contrastive_weight = 1.0;
  without.spec.contrastive_weight = 0.0;
  if (!config.output_dir.empty()) {
    with.output_dir = config.output_dir / "lambda_1";
    without.output_dir = config.output_dir / "lambda_0";
  }
  AblationResult out;
  out.with_contrastive = train_suite(with, in);
  out.without_contrastive = train_suite(without, in);
  out.f1_delta = out.with_contrastive.aggregate.f1.mean - out.without_contrastive.aggregate.f1.mean;
  if (!config.output_dir.empty()) io::write_file(config.output_dir / "ablation.json", out.to_json().dump(2) + "\n");
  return out;
}

}  // namespace persp
