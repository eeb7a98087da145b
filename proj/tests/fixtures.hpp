#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "persp.hpp"
#include "oracles.hpp"

namespace fixture {

/// Dataset with `texts` texts, each annotated by 1..max_per_text distinct
/// annotators drawn from `annotators`, labels random.
inline persp::Dataset random_dataset(persp::SplitMix64& rng, std::size_t texts, std::size_t annotators,
                                     std::size_t max_per_text) {
  std::vector<persp::AnnotationRecord> recs;
  for (std::size_t t = 0; t < texts; ++t) {
    const std::size_t n = 1 + rng.below(std::min(max_per_text, annotators));
    std::vector<std::size_t> pick(annotators);
    for (std::size_t i = 0; i < annotators; ++i) pick[i] = i;
    rng.shuffle(std::span<std::size_t>(pick));
    for (std::size_t s = 0; s < n; ++s) {
      const int label = rng.bernoulli(0.5) ? 1 : 0;
      recs.push_back({"t" + std::to_string(t), "a" + std::to_string(pick[s]), label, label});
    }
  }
  return persp::Dataset(std::move(recs));
}

/// Small population with every annotator profiled, text embeddings and
/// annotator embeddings, suitable for fast end-to-end training.
inline persp::PopulationSpec small_population(std::uint64_t seed = 3) {
  persp::PopulationSpec s;
  s.annotator_count = 30;
  s.text_count = 60;
  s.annotations_per_text = 4;
  s.embedding_dim = 6;
  s.socio_embedding_dim = 4;
  s.seed = seed;
  s.attributes = {{"gender", {"m", "w"}, {0.5, 0.5}, {0.0, 2.0}}, {"age", {"y", "o"}, {0.5, 0.5}, {}}};
  return s;
}

inline persp::ModelSpec tiny_spec(persp::Variant v) {
  persp::ModelSpec s;
  s.variant = v;
  s.hidden_dims = {8, 6};
  s.projection_dims = {5, 4};
  return s;
}

/// Fresh scratch directory under the build tree.
inline std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("persp_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::vector<std::vector<double>> rows_of(const Eigen::MatrixXd& m) {
  std::vector<std::vector<double>> out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) out[static_cast<std::size_t>(r)].push_back(m(r, c));
  return out;
}

/// Everything a gradient check needs: inputs, spec, params and one batch.
struct GradProblem {
  persp::SynthBundle data;
  persp::SplitPair split;
  persp::ModelSpec spec;
  persp::ModelParams params;
  persp::Batch batch;
  std::uint64_t dropout_seed = 0;
};

inline GradProblem grad_problem(persp::Variant v, std::uint64_t seed) {
  using namespace persp;
  GradProblem g;
  g.data = generate_all(small_population(seed));
  g.split = split_by_text(g.data.dataset, 0.7, seed);
  const TrainingInputs in{&g.split, &g.data.corpus.embeddings, &g.data.population.schema,
                          &g.data.population.profiles, &g.data.socio_embeddings};
  ModelSpec spec = tiny_spec(v);
  spec.temperature = 0.5;
  g.spec = resolve_spec(spec, in);
  g.params = init_params(g.spec, seed, v == Variant::multitask ? g.split.train.annotator_ids()
                                                               : std::vector<std::string>{});
  SplitMix64 rng(seed);
  for (auto& l : g.params.layers) l.bias = l.bias.unaryExpr([&](double) { return 0.1 * rng.normal(); });
  const BatchPlan plan = plan_epoch(g.split.train, 8 + rng.below(9), seed);
  g.batch = assemble_batch(g.split.train, plan.batches.front(), feature_context(g.spec, in));
  g.dropout_seed = derive_seed(seed, "dropout");
  return g;
}

inline std::vector<double> flatten(const std::vector<persp::Layer>& layers) {
  std::vector<double> out;
  for (const auto& l : layers) {
    out.insert(out.end(), l.weight.data(), l.weight.data() + l.weight.size());
    out.insert(out.end(), l.bias.data(), l.bias.data() + l.bias.size());
  }
  return out;
}

inline void unflatten(const std::vector<double>& x, std::vector<persp::Layer>& layers) {
  std::size_t p = 0;
  for (auto& l : layers) {
    for (Eigen::Index i = 0; i < l.weight.size(); ++i) l.weight.data()[i] = x[p++];
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias.data()[i] = x[p++];
  }
}

/// Relative error between backprop and central differences of the total loss
/// over every parameter.
inline double gradient_error(persp::Variant v, std::uint64_t seed) {
  GradProblem g = grad_problem(v, seed);
  const auto sr = persp::loss_and_gradients(g.spec, g.params, g.batch, g.dropout_seed);
  persp::ModelParams work = g.params;
  auto f = [&](const std::vector<double>& x) {
    unflatten(x, work.layers);
    return persp::loss_and_gradients(g.spec, work, g.batch, g.dropout_seed).loss.total;
  };
  return oracle::relative_error(flatten(sr.grads), oracle::numeric_gradient(f, flatten(g.params.layers)));
}

}  // namespace fixture
