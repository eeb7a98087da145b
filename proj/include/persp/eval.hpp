#pragma once

// Scoring against individual annotator labels: confusion metrics, ROC,
// multi-run aggregation and demographic group breakdowns.

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "persp/corpus.hpp"
#include "persp/error.hpp"
#include "persp/features.hpp"
#include "persp/io.hpp"

namespace persp {

inline constexpr double kDecisionThreshold = 0.5;

struct MetricsReport {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double auc = 0.0;
  bool has_auc = false;
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::size_t n = 0;
  bool precision_undefined = false;  // tp + fp == 0
  bool recall_undefined = false;     // tp + fn == 0

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j{{"precision", precision}, {"recall", recall}, {"f1", f1}};
    j["auc"] = has_auc ? nlohmann::ordered_json(auc) : nlohmann::ordered_json(nullptr);
    j["tp"] = tp;
    j["fp"] = fp;
    j["tn"] = tn;
    j["fn"] = fn;
    j["n"] = n;
    if (precision_undefined) j["precision_undefined"] = true;
    if (recall_undefined) j["recall_undefined"] = true;
    return j;
  }
};

/// Metrics from exact confusion counts.
inline MetricsReport metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t tn, std::size_t fn) {
  MetricsReport m;
  m.tp = tp;
  m.fp = fp;
  m.tn = tn;
  m.fn = fn;
  m.n = tp + fp + tn + fn;
  m.precision_undefined = tp + fp == 0;
  m.recall_undefined = tp + fn == 0;
  m.precision = m.precision_undefined ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  m.recall = m.recall_undefined ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  m.f1 = (m.precision + m.recall) > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  return m;
}

/// Positive-class metrics; a probability >= threshold predicts positive.
inline MetricsReport confusion_metrics(std::span<const double> probs, std::span<const int> labels,
                                       double threshold = kDecisionThreshold) {
  if (probs.size() != labels.size()) throw ConfigError("probs and labels differ in length");
  if (probs.empty()) throw DataError("cannot evaluate an empty prediction set");
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const bool pred = probs[i] >= threshold;
    const bool pos = labels[i] == 1;
    if (pred && pos) ++tp;
    else if (pred) ++fp;
    else if (pos) ++fn;
    else ++tn;
  }
  return metrics_from_counts(tp, fp, tn, fn);
}

/// Mann-Whitney AUC: P(score+ > score-) + P(tie)/2, via ranks with ties averaged.
inline double roc_auc(std::span<const double> probs, std::span<const int> labels) {
  if (probs.size() != labels.size()) throw ConfigError("probs and labels differ in length");
  std::vector<std::size_t> order(probs.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return probs[a] < probs[b]; });
  double n_pos = 0.0, n_neg = 0.0, pos_rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && probs[order[j]] == probs[order[i]]) ++j;
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1) {
        n_pos += 1.0;
        pos_rank_sum += avg_rank;
      } else {
        n_neg += 1.0;
      }
    }
    i = j;
  }
  if (n_pos == 0.0 || n_neg == 0.0) throw NumericError("AUC is undefined with a single label class");
  return (pos_rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

struct RocPoint {
  double threshold;  // +inf for the (0,0) endpoint
  double fpr;
  double tpr;
};

/// One point per distinct score, thresholds descending, from (0,0) to (1,1).
inline std::vector<RocPoint> roc_curve(std::span<const double> probs, std::span<const int> labels) {
  if (probs.size() != labels.size()) throw ConfigError("probs and labels differ in length");
  std::vector<std::size_t> order(probs.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
  double n_pos = 0.0, n_neg = 0.0;
  for (int y : labels) (y == 1 ? n_pos : n_neg) += 1.0;
  if (n_pos == 0.0 || n_neg == 0.0) throw NumericError("ROC is undefined with a single label class");
  std::vector<RocPoint> pts{{std::numeric_limits<double>::infinity(), 0.0, 0.0}};
  double tp = 0.0, fp = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && probs[order[j]] == probs[order[i]]) {
      (labels[order[j]] == 1 ? tp : fp) += 1.0;
      ++j;
    }
    pts.push_back({probs[order[i]], fp / n_neg, tp / n_pos});
    i = j;
  }
  return pts;
}

inline double trapezoid_area(const std::vector<RocPoint>& curve) {
  double area = 0.0;
  for (std::size_t i = 1; i < curve.size(); ++i)
    area += (curve[i].fpr - curve[i - 1].fpr) * (curve[i].tpr + curve[i - 1].tpr) / 2.0;
  return area;
}

inline std::string roc_to_csv(const std::vector<RocPoint>& curve) {
  std::string out = "threshold,fpr,tpr\n";
  for (const auto& p : curve)
    io::append_csv_row(out, {std::isinf(p.threshold) ? "inf" : io::format_double(p.threshold),
                             io::format_double(p.fpr), io::format_double(p.tpr)});
  return out;
}

/// Full report: confusion metrics plus AUC when both classes are present.
inline MetricsReport evaluate(std::span<const double> probs, std::span<const int> labels) {
  MetricsReport m = confusion_metrics(probs, labels);
  const bool both = std::any_of(labels.begin(), labels.end(), [](int y) { return y == 1; }) &&
                    std::any_of(labels.begin(), labels.end(), [](int y) { return y != 1; });
  if (both) {
    m.auc = roc_auc(probs, labels);
    m.has_auc = true;
  }
  return m;
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

/// Mean and population standard deviation (divisor n).
inline MeanStd mean_std(std::span<const double> xs) {
  if (xs.empty()) return {};
  const double n = static_cast<double>(xs.size());
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= n;
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  return {mean, std::sqrt(var / n)};
}

struct AggregateReport {
  MeanStd precision, recall, f1, auc;
  std::size_t runs = 0;

  nlohmann::ordered_json to_json() const {
    auto ms = [](const MeanStd& m) { return nlohmann::ordered_json{{"mean", m.mean}, {"std", m.std}}; };
    return {{"runs", runs}, {"precision", ms(precision)}, {"recall", ms(recall)}, {"f1", ms(f1)}, {"auc", ms(auc)}};
  }
};

inline AggregateReport aggregate_runs(std::span<const MetricsReport> reports) {
  if (reports.empty()) throw ConfigError("aggregate_runs needs at least one report");
  std::vector<double> p, r, f, a;
  for (const auto& m : reports) {
    p.push_back(m.precision);
    r.push_back(m.recall);
    f.push_back(m.f1);
    if (m.has_auc) a.push_back(m.auc);
  }
  return {mean_std(p), mean_std(r), mean_std(f), mean_std(a), reports.size()};
}

struct CategoryMetrics {
  std::string category;
  MetricsReport metrics;
};

struct GroupReport {
  std::string attribute;
  std::vector<CategoryMetrics> categories;
  std::vector<std::string> omitted;  // schema categories with no test records
};

/// Per attribute and category, metrics over the records whose annotator
/// falls in that category.
inline std::vector<GroupReport> group_breakdown(std::span<const double> probs, std::span<const int> labels,
                                                std::span<const std::string> annotator_ids,
                                                const ProfileMap& profiles, const SocioSchema& schema) {
  if (probs.size() != labels.size() || labels.size() != annotator_ids.size())
    throw ConfigError("probs, labels and annotator ids differ in length");
  std::vector<GroupReport> out;
  for (const auto& attr : schema.attributes()) {
    std::map<std::string, std::pair<std::vector<double>, std::vector<int>>> slices;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      auto it = profiles.find(annotator_ids[i]);
      if (it == profiles.end()) throw DataError("annotator '" + annotator_ids[i] + "' has no profile");
      auto& s = slices[category_of(it->second, attr.name)];
      s.first.push_back(probs[i]);
      s.second.push_back(labels[i]);
    }
    GroupReport g{attr.name, {}, {}};
    for (const auto& cat : attr.categories) {
      auto it = slices.find(cat);
      if (it == slices.end()) {
        g.omitted.push_back(cat);
        continue;
      }
      g.categories.push_back({cat, evaluate(it->second.first, it->second.second)});
    }
    out.push_back(std::move(g));
  }
  return out;
}

inline std::string groups_to_csv(const std::vector<GroupReport>& groups) {
  std::string out = "attribute,category,n,precision,recall,f1,auc\n";
  for (const auto& g : groups)
    for (const auto& c : g.categories)
      io::append_csv_row(out, {g.attribute, c.category, std::to_string(c.metrics.n),
                               io::format_fixed(c.metrics.precision), io::format_fixed(c.metrics.recall),
                               io::format_fixed(c.metrics.f1),
                               c.metrics.has_auc ? io::format_fixed(c.metrics.auc) : std::string("NA")});
  return out;
}

inline nlohmann::ordered_json groups_to_json(const std::vector<GroupReport>& groups) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& g : groups) {
    nlohmann::ordered_json cats = nlohmann::ordered_json::array();
    for (const auto& c : g.categories) {
      auto j = c.metrics.to_json();
      j["category"] = c.category;
      cats.push_back(j);
    }
    arr.push_back({{"attribute", g.attribute}, {"categories", cats}, {"omitted_empty", g.omitted}});
  }
  return arr;
}

}  // namespace persp
