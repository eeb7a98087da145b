#pragma once

// Synthetic annotator populations and corpora with planted demographic
// effects. Texts carry a latent offensiveness z; annotator a labels text t
// positive with probability sigmoid(z_t + sum of a's category shifts).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "persp/corpus.hpp"
#include "persp/error.hpp"
#include "persp/features.hpp"
#include "persp/rng.hpp"

namespace persp {

struct SynthAttribute {
  std::string name;
  std::vector<std::string> categories;
  std::vector<double> probabilities;
  std::vector<double> shifts;  // log-odds shift per category; empty = none
};

struct PopulationSpec {
  std::size_t annotator_count = 100;
  std::vector<SynthAttribute> attributes;
  std::size_t text_count = 200;
  std::size_t annotations_per_text = 5;
  std::size_t embedding_dim = 16;
  double latent_mean = 0.0;
  double latent_sd = 1.0;
  double embedding_noise = 0.1;
  std::size_t socio_embedding_dim = 8;
  double socio_embedding_noise = 0.05;
  std::uint64_t seed = 0;

  void validate() const {
    if (annotator_count < 1 || text_count < 1 || annotations_per_text < 1 || embedding_dim < 1 ||
        socio_embedding_dim < 1)
      throw ConfigError("synthetic counts and dimensions must be >= 1");
    if (annotations_per_text > annotator_count)
      throw ConfigError("annotations_per_text exceeds annotator_count");
    if (!(latent_sd >= 0.0) || !(embedding_noise >= 0.0) || !(socio_embedding_noise >= 0.0))
      throw ConfigError("synthetic noise levels must be >= 0");
    for (const auto& a : attributes) {
      if (a.categories.empty() || a.categories.size() != a.probabilities.size())
        throw ConfigError("attribute '" + a.name + "' needs one probability per category");
      if (!a.shifts.empty() && a.shifts.size() != a.categories.size())
        throw ConfigError("attribute '" + a.name + "' needs one shift per category");
      double sum = 0.0;
      for (double p : a.probabilities) {
        if (p < 0.0) throw ConfigError("negative category probability in '" + a.name + "'");
        sum += p;
      }
      if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("probabilities of '" + a.name + "' do not sum to 1");
    }
  }

  double shift_for(const AnnotatorProfile& p) const {
    double s = 0.0;
    for (const auto& a : attributes) {
      if (a.shifts.empty()) continue;
      const std::string& c = p.assignments.at(a.name);
      for (std::size_t i = 0; i < a.categories.size(); ++i)
        if (a.categories[i] == c) s += a.shifts[i];
    }
    return s;
  }

  std::vector<std::string> attribute_names() const {
    std::vector<std::string> out;
    for (const auto& a : attributes) out.push_back(a.name);
    return out;
  }
};

struct Population {
  ProfileMap profiles;
  SocioSchema schema;
};

inline std::string synth_id(char prefix, std::size_t i, std::size_t n) {
  const std::size_t width = std::to_string(n > 0 ? n - 1 : 0).size();
  std::string digits = std::to_string(i);
  return std::string(1, prefix) + std::string(width - digits.size(), '0') + digits;
}

/// Annotators drawn i.i.d. from the categorical attribute distributions.
inline Population generate_population(const PopulationSpec& spec) {
  spec.validate();
  SplitMix64 rng(derive_seed(spec.seed, "population"));
  Population pop;
  for (std::size_t i = 0; i < spec.annotator_count; ++i) {
    AnnotatorProfile p{synth_id('a', i, spec.annotator_count), {}};
    for (const auto& a : spec.attributes) {
      const double u = rng.uniform();
      double acc = 0.0;
      std::size_t chosen = a.categories.size() - 1;
      for (std::size_t c = 0; c < a.categories.size(); ++c) {
        acc += a.probabilities[c];
        if (u < acc) {
          chosen = c;
          break;
        }
      }
      p.assignments[a.name] = a.categories[chosen];
    }
    pop.profiles.emplace(p.annotator_id, std::move(p));
  }
  std::vector<Attribute> attrs;
  for (const auto& a : spec.attributes) {
    Attribute at{a.name, a.categories};
    std::sort(at.categories.begin(), at.categories.end());
    at.categories.emplace_back(kMissingCategory);
    attrs.push_back(std::move(at));
  }
  pop.schema = SocioSchema(std::move(attrs));
  return pop;
}

struct SynthCorpus {
  std::vector<std::string> text_ids;
  std::vector<double> latent;  // z per text
  Eigen::VectorXd direction;   // unit u
  EmbeddingTable embeddings;
};

/// embedding_t = z_t u + noise, with u a fixed random unit direction.
inline SynthCorpus generate_corpus(const PopulationSpec& spec) {
  spec.validate();
  SplitMix64 rng(derive_seed(spec.seed, "corpus"));
  SynthCorpus c;
  const auto d = static_cast<Eigen::Index>(spec.embedding_dim);
  c.direction.resize(d);
  for (Eigen::Index i = 0; i < d; ++i) c.direction[i] = rng.normal();
  c.direction /= c.direction.norm();
  c.embeddings = EmbeddingTable(spec.embedding_dim);
  std::vector<double> v(spec.embedding_dim);
  for (std::size_t t = 0; t < spec.text_count; ++t) {
    const double z = spec.latent_mean + spec.latent_sd * rng.normal();
    for (Eigen::Index i = 0; i < d; ++i) v[static_cast<std::size_t>(i)] = z * c.direction[i] + spec.embedding_noise * rng.normal();
    c.text_ids.push_back(synth_id('t', t, spec.text_count));
    c.latent.push_back(z);
    c.embeddings.add(c.text_ids.back(), v);
  }
  return c;
}

/// Per text, annotators sampled without replacement; label ~ Bernoulli.
/// raw_score equals the label.
inline Dataset generate_annotations(const Population& pop, const SynthCorpus& corpus, const PopulationSpec& spec) {
  spec.validate();
  SplitMix64 rng(derive_seed(spec.seed, "annotations"));
  std::vector<const AnnotatorProfile*> annotators;
  for (const auto& [id, p] : pop.profiles) annotators.push_back(&p);
  std::vector<AnnotationRecord> records;
  const std::size_t n = annotators.size();
  for (std::size_t t = 0; t < corpus.text_ids.size(); ++t) {
    std::vector<std::size_t> pick(n);
    std::iota(pick.begin(), pick.end(), 0);
    for (std::size_t s = 0; s < spec.annotations_per_text; ++s) {
      const std::size_t j = s + static_cast<std::size_t>(rng.below(n - s));
      std::swap(pick[s], pick[j]);
    }
    for (std::size_t s = 0; s < spec.annotations_per_text; ++s) {
      const AnnotatorProfile& a = *annotators[pick[s]];
      const double logit = corpus.latent[t] + spec.shift_for(a);
      const double p = 1.0 / (1.0 + std::exp(-logit));
      const int label = rng.bernoulli(p) ? 1 : 0;
      records.push_back({corpus.text_ids[t], a.annotator_id, label, label});
    }
  }
  ProfileMap used;
  for (const auto& r : records) used.emplace(r.annotator_id, pop.profiles.at(r.annotator_id));
  return Dataset(std::move(records), std::move(used));
}

/// Stand-in for an external encoder of annotator descriptions: a fixed random
/// linear map of the multi-hot vector plus noise.
inline EmbeddingTable generate_socio_embeddings(const Population& pop, const PopulationSpec& spec) {
  SplitMix64 rng(derive_seed(spec.seed, "socio_embeddings"));
  const auto w = static_cast<Eigen::Index>(pop.schema.total_width());
  const auto d = static_cast<Eigen::Index>(spec.socio_embedding_dim);
  Eigen::MatrixXd R(d, w);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < w; ++j) R(i, j) = rng.normal() / std::sqrt(static_cast<double>(w));
  EmbeddingTable table(spec.socio_embedding_dim);
  for (const auto& [id, p] : pop.profiles) {
    Eigen::VectorXd v = R * encode_multihot(p, pop.schema);
    for (Eigen::Index i = 0; i < d; ++i) v[i] += spec.socio_embedding_noise * rng.normal();
    table.add(id, std::span<const double>(v.data(), static_cast<std::size_t>(v.size())));
  }
  return table;
}

struct SynthBundle {
  Population population;
  SynthCorpus corpus;
  Dataset dataset;
  EmbeddingTable socio_embeddings;
};

inline SynthBundle generate_all(const PopulationSpec& spec) {
  SynthBundle b;
  b.population = generate_population(spec);
  b.corpus = generate_corpus(spec);
  b.dataset = generate_annotations(b.population, b.corpus, spec);
  b.socio_embeddings = generate_socio_embeddings(b.population, spec);
  return b;
}

inline nlohmann::ordered_json population_spec_to_json(const PopulationSpec& s) {
  nlohmann::ordered_json attrs = nlohmann::ordered_json::array();
  for (const auto& a : s.attributes)
    attrs.push_back({{"name", a.name}, {"categories", a.categories}, {"probabilities", a.probabilities}, {"shifts", a.shifts}});
  return {{"annotator_count", s.annotator_count},
          {"attributes", attrs},
          {"text_count", s.text_count},
          {"annotations_per_text", s.annotations_per_text},
          {"embedding_dim", s.embedding_dim},
          {"latent_mean", s.latent_mean},
          {"latent_sd", s.latent_sd},
          {"embedding_noise", s.embedding_noise},
          {"socio_embedding_dim", s.socio_embedding_dim},
          {"socio_embedding_noise", s.socio_embedding_noise},
          {"seed", s.seed}};
}

}  // namespace persp
