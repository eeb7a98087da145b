#pragma once

// Epoch planning that keeps annotations of the same text together, batch
// assembly, and the masks consumed by the contrastive objective.

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "persp/corpus.hpp"
#include "persp/features.hpp"
#include "persp/rng.hpp"

namespace persp {

struct BatchPlan {
  std::vector<std::vector<std::size_t>> batches;  // record indices
  std::size_t batch_size = 0;
  std::uint64_t seed = 0;

  std::size_t record_count() const {
    std::size_t n = 0;
    for (const auto& b : batches) n += b.size();
    return n;
  }

  nlohmann::ordered_json to_json() const {
    return {{"batch_size", batch_size}, {"seed", seed}, {"batches", batches}};
  }

  bool operator==(const BatchPlan&) const = default;
};

/// Text groups (records grouped by text id in order of first appearance)
/// are shuffled, then each group's records are shuffled, and the resulting
/// stream is cut into batches of `batch_size`. A group longer than a batch
/// spills into the following batches; a short group is followed by the next
/// group in the same batch. The final batch may be under-full.
inline BatchPlan plan_epoch(const Dataset& dataset, std::size_t batch_size, std::uint64_t seed) {
  if (batch_size < 2) throw ConfigError("batch_size must be >= 2 for contrastive pairs");
  std::vector<std::vector<std::size_t>> groups;
  std::map<std::string, std::size_t> group_of;
  const auto& records = dataset.records();
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto [it, inserted] = group_of.try_emplace(records[i].text_id, groups.size());
    if (inserted) groups.emplace_back();
    groups[it->second].push_back(i);
  }
  SplitMix64 rng(seed);
  rng.shuffle(std::span<std::vector<std::size_t>>(groups));
  for (auto& g : groups) rng.shuffle(std::span<std::size_t>(g));

  BatchPlan plan{{}, batch_size, seed};
  std::vector<std::size_t> current;
  current.reserve(batch_size);
  for (const auto& g : groups)
    for (std::size_t idx : g) {
      current.push_back(idx);
      if (current.size() == batch_size) {
        plan.batches.push_back(std::move(current));
        current.clear();
      }
    }
  if (!current.empty()) plan.batches.push_back(std::move(current));
  return plan;
}

/// Fused-input ingredients for one batch. `socio` holds multi-hot rows or
/// annotator embeddings depending on the variant; empty when unused.
struct Batch {
  Eigen::MatrixXd text;
  Eigen::MatrixXd socio;
  std::vector<int> labels;
  std::vector<std::string> text_ids;
  std::vector<std::string> annotator_ids;

  std::size_t size() const { return labels.size(); }
};

enum class SocioSource { none, multihot, embedding };

/// Read-only feature tables a batch is assembled from.
struct FeatureContext {
  const EmbeddingTable* text_embeddings = nullptr;
  SocioSource socio = SocioSource::none;
  const SocioSchema* schema = nullptr;
  const ProfileMap* profiles = nullptr;
  const EmbeddingTable* socio_embeddings = nullptr;
  /// Called with every text id whose embedding is read; used for leakage audits.
  std::function<void(const std::string&)> on_text_access;
};

inline Batch assemble_batch(const Dataset& dataset, std::span<const std::size_t> indices,
                            const FeatureContext& ctx) {
  if (!ctx.text_embeddings) throw ConfigError("batch assembly needs a text embedding table");
  const auto B = static_cast<Eigen::Index>(indices.size());
  const auto d = static_cast<Eigen::Index>(ctx.text_embeddings->dimension());
  Batch batch;
  batch.text.resize(B, d);
  Eigen::Index w = 0;
  if (ctx.socio == SocioSource::multihot) {
    if (!ctx.schema || !ctx.profiles) throw ConfigError("multi-hot features need a schema and profiles");
    w = static_cast<Eigen::Index>(ctx.schema->total_width());
  } else if (ctx.socio == SocioSource::embedding) {
    if (!ctx.socio_embeddings) throw ConfigError("socio embedding features need an annotator embedding table");
    w = static_cast<Eigen::Index>(ctx.socio_embeddings->dimension());
  }
  batch.socio.resize(B, w);
  for (Eigen::Index r = 0; r < B; ++r) {
    const auto& rec = dataset.records().at(indices[static_cast<std::size_t>(r)]);
    if (ctx.on_text_access) ctx.on_text_access(rec.text_id);
    const auto tv = ctx.text_embeddings->at(rec.text_id);
    batch.text.row(r) = Eigen::Map<const Eigen::RowVectorXd>(tv.data(), d);
    if (ctx.socio == SocioSource::multihot) {
      auto it = ctx.profiles->find(rec.annotator_id);
      if (it == ctx.profiles->end()) throw DataError("annotator '" + rec.annotator_id + "' has no profile");
      batch.socio.row(r) = encode_multihot(it->second, *ctx.schema).transpose();
    } else if (ctx.socio == SocioSource::embedding) {
      const auto sv = ctx.socio_embeddings->at(rec.annotator_id);
      batch.socio.row(r) = Eigen::Map<const Eigen::RowVectorXd>(sv.data(), w);
    }
    batch.labels.push_back(rec.label);
    batch.text_ids.push_back(rec.text_id);
    batch.annotator_ids.push_back(rec.annotator_id);
  }
  return batch;
}

/// M_text[i,j] = 1 iff text_ids[i] == text_ids[j].
inline Eigen::MatrixXd text_match_mask(std::span<const std::string> text_ids) {
  const auto B = static_cast<Eigen::Index>(text_ids.size());
  Eigen::MatrixXd m(B, B);
  for (Eigen::Index i = 0; i < B; ++i)
    for (Eigen::Index j = 0; j < B; ++j)
      m(i, j) = text_ids[static_cast<std::size_t>(i)] == text_ids[static_cast<std::size_t>(j)] ? 1.0 : 0.0;
  return m;
}

inline Eigen::MatrixXd text_match_mask(const Batch& batch) { return text_match_mask(batch.text_ids); }

struct ContrastiveMasks {
  Eigen::MatrixXd positive;  // same text, same label, off-diagonal
  Eigen::MatrixXd negative;  // same text, different label
};

inline ContrastiveMasks contrastive_masks(std::span<const std::string> text_ids, std::span<const int> labels) {
  if (text_ids.size() != labels.size()) throw ConfigError("text_ids and labels differ in length");
  const Eigen::MatrixXd text = text_match_mask(text_ids);
  const auto B = text.rows();
  ContrastiveMasks m{Eigen::MatrixXd::Zero(B, B), Eigen::MatrixXd::Zero(B, B)};
  for (Eigen::Index i = 0; i < B; ++i)
    for (Eigen::Index j = 0; j < B; ++j) {
      if (text(i, j) == 0.0) continue;
      const bool same = labels[static_cast<std::size_t>(i)] == labels[static_cast<std::size_t>(j)];
      if (same && i != j) m.positive(i, j) = 1.0;
      if (!same) m.negative(i, j) = 1.0;
    }
  return m;
}

inline ContrastiveMasks contrastive_masks(const Batch& batch) {
  return contrastive_masks(batch.text_ids, batch.labels);
}

}  // namespace persp
