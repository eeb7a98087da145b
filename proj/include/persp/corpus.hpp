#pragma once

// Annotation tables: loading, binarization, reliability filtering, text-level
// train/test splits and majority-vote aggregation.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "persp/error.hpp"
#include "persp/io.hpp"
#include "persp/rng.hpp"

namespace persp {

/// One (text, annotator, label) triple.
struct AnnotationRecord {
  std::string text_id;
  std::string annotator_id;
  long long raw_score = 0;
  int label = -1;  // -1 until binarized

  bool operator==(const AnnotationRecord&) const = default;
};

/// Category assignment per attribute; an attribute with no entry is missing.
struct AnnotatorProfile {
  std::string annotator_id;
  std::map<std::string, std::string> assignments;

  bool operator==(const AnnotatorProfile&) const = default;
};

using ProfileMap = std::map<std::string, AnnotatorProfile>;

struct DatasetStats {
  std::size_t records = 0;
  std::size_t unique_texts = 0;
  std::size_t unique_annotators = 0;
  std::size_t positives = 0;
  std::size_t negatives = 0;

  bool operator==(const DatasetStats&) const = default;
};

class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(std::vector<AnnotationRecord> records, ProfileMap profiles = {})
      : records_(std::move(records)), profiles_(std::move(profiles)) {
    check_profiles();
    recompute();
  }

  const std::vector<AnnotationRecord>& records() const { return records_; }
  const ProfileMap& profiles() const { return profiles_; }
  const DatasetStats& stats() const { return stats_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }

  /// Sorted unique text ids.
  std::vector<std::string> text_ids() const {
    std::set<std::string> ids;
    for (const auto& r : records_) ids.insert(r.text_id);
    return {ids.begin(), ids.end()};
  }

  std::vector<std::string> annotator_ids() const {
    std::set<std::string> ids;
    for (const auto& r : records_) ids.insert(r.annotator_id);
    return {ids.begin(), ids.end()};
  }

  /// Same records with a profile table attached. Every annotator must resolve.
  Dataset with_profiles(ProfileMap profiles) const { return Dataset(records_, std::move(profiles)); }

  /// Profiles restricted to annotators that occur in the records.
  ProfileMap used_profiles() const {
    ProfileMap out;
    for (const auto& r : records_) {
      auto it = profiles_.find(r.annotator_id);
      if (it != profiles_.end()) out.emplace(it->first, it->second);
    }
    return out;
  }

 private:
  void check_profiles() const {
    if (profiles_.empty()) return;
    for (const auto& r : records_)
      if (!profiles_.contains(r.annotator_id))
        throw DataError("annotator '" + r.annotator_id + "' has no profile");
  }

  void recompute() {
    stats_ = {};
    std::unordered_set<std::string> texts, annotators;
    for (const auto& r : records_) {
      texts.insert(r.text_id);
      annotators.insert(r.annotator_id);
      if (r.label == 1) ++stats_.positives;
      if (r.label == 0) ++stats_.negatives;
    }
    stats_.records = records_.size();
    stats_.unique_texts = texts.size();
    stats_.unique_annotators = annotators.size();
  }

  std::vector<AnnotationRecord> records_;
  ProfileMap profiles_;
  DatasetStats stats_;
};

/// Which CSV columns hold the text key, annotator key and score.
struct ColumnMapping {
  std::string text = "text_id";
  std::string annotator = "annotator_id";
  std::string score = "score";
};

/// Parse annotation rows from CSV text. Row numbers in errors are 1-based
/// data rows (the header is row 0).
inline Dataset parse_annotations(std::string_view csv, const ColumnMapping& mapping = {}) {
  const io::CsvTable table = io::parse_csv(csv);
  const std::size_t tc = table.require_column(mapping.text);
  const std::size_t ac = table.require_column(mapping.annotator);
  const std::size_t sc = table.require_column(mapping.score);
  const std::size_t width = std::max({tc, ac, sc}) + 1;

  std::vector<AnnotationRecord> records;
  records.reserve(table.rows.size());
  std::map<std::pair<std::string, std::string>, std::vector<std::size_t>> seen;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    const std::size_t row_no = i + 1;
    if (row.size() < width) throw ParseError("row " + std::to_string(row_no) + ": too few fields", row_no);
    AnnotationRecord rec;
    rec.text_id = row[tc];
    rec.annotator_id = row[ac];
    if (rec.text_id.empty() || rec.annotator_id.empty())
      throw ParseError("row " + std::to_string(row_no) + ": empty key", row_no);
    if (!io::parse_int(row[sc], rec.raw_score))
      throw ParseError("row " + std::to_string(row_no) + ": score '" + row[sc] + "' is not an integer", row_no);
    if (rec.raw_score < 0)
      throw ParseError("row " + std::to_string(row_no) + ": negative score", row_no);
    seen[{rec.text_id, rec.annotator_id}].push_back(row_no);
    records.push_back(std::move(rec));
  }

  std::vector<std::size_t> offenders;
  std::string detail;
  for (const auto& [key, rows] : seen) {
    if (rows.size() < 2) continue;
    offenders.insert(offenders.end(), rows.begin(), rows.end());
    if (!detail.empty()) detail += "; ";
    detail += "(" + key.first + ", " + key.second + ") at rows";
    for (auto r : rows) detail += " " + std::to_string(r);
  }
  if (!offenders.empty()) {
    std::sort(offenders.begin(), offenders.end());
    throw DuplicateError("duplicate (text, annotator) pairs: " + detail, std::move(offenders));
  }
  return Dataset(std::move(records));
}

inline Dataset load_annotations(const std::filesystem::path& path, const ColumnMapping& mapping = {}) {
  if (!std::filesystem::exists(path)) throw DataError("annotation file '" + path.string() + "' not found");
  return parse_annotations(io::read_file(path), mapping);
}

/// Score 0 is the negative class, anything above 0 positive.
inline Dataset binarize(const Dataset& dataset) {
  std::vector<AnnotationRecord> records = dataset.records();
  for (auto& r : records) r.label = r.raw_score > 0 ? 1 : 0;
  return Dataset(std::move(records), dataset.profiles());
}

struct FilterReport {
  std::size_t removed_annotators = 0;
  std::size_t removed_texts = 0;
  std::size_t removed_records = 0;
  std::size_t retained_records = 0;

  nlohmann::ordered_json to_json() const {
    return {{"removed_annotators", removed_annotators},
            {"removed_texts", removed_texts},
            {"removed_records", removed_records},
            {"retained_records", retained_records}};
  }
};

struct FilterResult {
  Dataset dataset;
  FilterReport report;
};

/// Drops annotators with fewer than `min_annotations_per_annotator` records,
/// then texts with fewer than `min_annotators_per_text` remaining annotators.
/// One pass of each, in that order.
inline FilterResult filter_dataset(const Dataset& dataset, int min_annotators_per_text,
                                   int min_annotations_per_annotator) {
  if (min_annotators_per_text < 1 || min_annotations_per_annotator < 1)
    throw ConfigError("filter thresholds must be >= 1");
  FilterReport report;

  std::unordered_map<std::string, std::size_t> per_annotator;
  for (const auto& r : dataset.records()) ++per_annotator[r.annotator_id];
  std::vector<AnnotationRecord> stage1;
  for (const auto& r : dataset.records())
    if (per_annotator[r.annotator_id] >= static_cast<std::size_t>(min_annotations_per_annotator))
      stage1.push_back(r);
  for (const auto& [id, n] : per_annotator)
    if (n < static_cast<std::size_t>(min_annotations_per_annotator)) ++report.removed_annotators;

  std::unordered_map<std::string, std::size_t> per_text;
  for (const auto& r : stage1) ++per_text[r.text_id];
  std::vector<AnnotationRecord> stage2;
  for (const auto& r : stage1)
    if (per_text[r.text_id] >= static_cast<std::size_t>(min_annotators_per_text)) stage2.push_back(r);
  std::unordered_set<std::string> original_texts;
  for (const auto& r : dataset.records()) original_texts.insert(r.text_id);
  std::unordered_set<std::string> kept_texts;
  for (const auto& r : stage2) kept_texts.insert(r.text_id);
  report.removed_texts = original_texts.size() - kept_texts.size();

  // Annotators can also vanish in the item stage when all their texts go.
  std::unordered_set<std::string> kept_annotators;
  for (const auto& r : stage2) kept_annotators.insert(r.annotator_id);
  report.removed_annotators = per_annotator.size() - kept_annotators.size();

  report.retained_records = stage2.size();
  report.removed_records = dataset.size() - stage2.size();
  if (stage2.empty()) throw EmptyDatasetError("filtering removed every record");

  ProfileMap profiles;
  for (const auto& [id, p] : dataset.profiles())
    if (kept_annotators.contains(id)) profiles.emplace(id, p);
  return {Dataset(std::move(stage2), std::move(profiles)), report};
}

struct SplitPair {
  Dataset train;
  Dataset test;
  std::uint64_t seed = 0;
  double train_fraction = 0.7;
};

/// Shuffles the sorted unique text ids with SplitMix64(seed) and sends the
/// first ceil(fraction * N) to train. All records of a text stay together.
inline SplitPair split_by_text(const Dataset& dataset, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ConfigError("train_fraction must lie in (0, 1)");
  std::vector<std::string> texts = dataset.text_ids();
  if (texts.size() < 2) throw DataError("split needs at least 2 unique texts");
  SplitMix64 rng(seed);
  rng.shuffle(std::span<std::string>(texts));
  const auto n = static_cast<double>(texts.size());
  const auto n_train = static_cast<std::size_t>(std::ceil(train_fraction * n - 1e-9));
  if (n_train == 0 || n_train >= texts.size())
    throw ConfigError("train_fraction " + io::format_double(train_fraction) + " leaves one side empty");
  std::unordered_set<std::string> train_texts(texts.begin(), texts.begin() + static_cast<long>(n_train));

  std::vector<AnnotationRecord> train, test;
  for (const auto& r : dataset.records()) (train_texts.contains(r.text_id) ? train : test).push_back(r);
  Dataset train_ds(std::move(train));
  Dataset test_ds(std::move(test));
  if (!dataset.profiles().empty()) {
    ProfileMap tp, sp;
    for (const auto& id : train_ds.annotator_ids()) tp.emplace(id, dataset.profiles().at(id));
    for (const auto& id : test_ds.annotator_ids()) sp.emplace(id, dataset.profiles().at(id));
    train_ds = train_ds.with_profiles(std::move(tp));
    test_ds = test_ds.with_profiles(std::move(sp));
  }
  return {std::move(train_ds), std::move(test_ds), seed, train_fraction};
}

/// Per-text majority label; an exact tie resolves to 1.
inline std::map<std::string, int> majority_vote(const Dataset& dataset) {
  std::map<std::string, std::pair<std::size_t, std::size_t>> votes;  // (neg, pos)
  for (const auto& r : dataset.records()) {
    if (r.label < 0) throw DataError("majority_vote needs binarized labels");
    auto& v = votes[r.text_id];
    (r.label == 1 ? v.second : v.first) += 1;
  }
  std::map<std::string, int> out;
  for (const auto& [text, v] : votes) out.emplace(text, v.second >= v.first ? 1 : 0);
  return out;
}

/// Re-emits records with the same column conventions they were loaded with.
inline std::string annotations_to_csv(const Dataset& dataset, const ColumnMapping& mapping = {}) {
  std::string out;
  io::append_csv_row(out, {mapping.text, mapping.annotator, mapping.score});
  for (const auto& r : dataset.records())
    io::append_csv_row(out, {r.text_id, r.annotator_id, std::to_string(r.raw_score)});
  return out;
}

inline nlohmann::ordered_json stats_to_json(const DatasetStats& s) {
  return {{"records", s.records},
          {"unique_texts", s.unique_texts},
          {"unique_annotators", s.unique_annotators},
          {"positives", s.positives},
          {"negatives", s.negatives}};
}

}  // namespace persp
