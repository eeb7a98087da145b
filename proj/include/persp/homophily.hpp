#pragma once

// Demographic homophily of annotator representations: the share of k nearest
// neighbours in the same category (observed), the same-category probability
// under random placement (chance), their ratio, and bootstrap dispersion.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <exception>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "persp/error.hpp"
#include "persp/eval.hpp"
#include "persp/features.hpp"
#include "persp/io.hpp"
#include "persp/rng.hpp"

namespace persp {

enum class Metric { cosine, euclidean };

inline Metric parse_metric(std::string_view s) {
  if (s == "cosine") return Metric::cosine;
  if (s == "euclidean") return Metric::euclidean;
  throw ConfigError("unknown distance metric '" + std::string(s) + "'");
}

/// Annotator vectors with per-attribute category codes.
class RepSpace {
 public:
  RepSpace(std::vector<std::string> annotator_ids, Eigen::MatrixXd vectors, std::vector<std::string> attributes,
           std::vector<std::vector<std::string>> categories)
      : ids_(std::move(annotator_ids)), vectors_(std::move(vectors)), attributes_(std::move(attributes)) {
    if (static_cast<Eigen::Index>(ids_.size()) != vectors_.rows())
      throw DataError("annotator ids and vectors differ in count");
    if (!vectors_.allFinite()) throw NumericError("representation vectors must be finite");
    if (categories.size() != attributes_.size()) throw DataError("one category column per attribute expected");
    for (const auto& col : categories) {
      if (col.size() != ids_.size()) throw DataError("category column length differs from annotator count");
      std::map<std::string, int> code_of;
      std::vector<int> codes;
      for (const auto& c : col) codes.push_back(code_of.try_emplace(c, static_cast<int>(code_of.size())).first->second);
      codes_.push_back(std::move(codes));
      category_counts_.push_back(code_of.size());
    }
    std::vector<std::size_t> order(ids_.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ids_[a] < ids_[b]; });
    id_rank_.resize(ids_.size());
    for (std::size_t r = 0; r < order.size(); ++r) id_rank_[order[r]] = r;
  }

  /// Rows from `reps`, categories from `profiles` (missing resolves to the
  /// missing category). Only annotators present in both are kept.
  static RepSpace from_tables(const EmbeddingTable& reps, const ProfileMap& profiles,
                              const std::vector<std::string>& attributes) {
    std::vector<std::string> ids;
    for (const auto& key : reps.keys())
      if (profiles.contains(key)) ids.push_back(key);
    Eigen::MatrixXd m(static_cast<Eigen::Index>(ids.size()), static_cast<Eigen::Index>(reps.dimension()));
    std::vector<std::vector<std::string>> cats(attributes.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const auto v = reps.at(ids[i]);
      m.row(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::RowVectorXd>(v.data(), m.cols());
      for (std::size_t a = 0; a < attributes.size(); ++a) cats[a].push_back(category_of(profiles.at(ids[i]), attributes[a]));
    }
    return RepSpace(std::move(ids), std::move(m), attributes, std::move(cats));
  }

  std::size_t size() const { return ids_.size(); }
  const std::vector<std::string>& annotator_ids() const { return ids_; }
  const Eigen::MatrixXd& vectors() const { return vectors_; }
  const std::vector<std::string>& attributes() const { return attributes_; }
  std::size_t id_rank(std::size_t i) const { return id_rank_[i]; }

  std::size_t attribute_index(std::string_view name) const {
    for (std::size_t a = 0; a < attributes_.size(); ++a)
      if (attributes_[a] == name) return a;
    throw ConfigError("attribute '" + std::string(name) + "' is not in the representation space");
  }

  const std::vector<int>& codes(std::size_t attr) const { return codes_.at(attr); }
  std::size_t category_count(std::size_t attr) const { return category_counts_.at(attr); }

  double distance(std::size_t i, std::size_t j, Metric metric) const {
    const auto a = vectors_.row(static_cast<Eigen::Index>(i));
    const auto b = vectors_.row(static_cast<Eigen::Index>(j));
    if (metric == Metric::euclidean) return (a - b).norm();
    const double na = a.norm(), nb = b.norm();
    if (na == 0.0 || nb == 0.0) return 1.0;
    return 1.0 - a.dot(b) / (na * nb);
  }

 private:
  std::vector<std::string> ids_;
  Eigen::MatrixXd vectors_;
  std::vector<std::string> attributes_;
  std::vector<std::vector<int>> codes_;
  std::vector<std::size_t> category_counts_;
  std::vector<std::size_t> id_rank_;
};

namespace detail {

/// k smallest of `candidates` by (distance, annotator id rank); `dist(j)`
/// gives the distance from the query.
template <typename Dist>
std::vector<std::size_t> select_nearest(std::vector<std::size_t> candidates, std::size_t k, const RepSpace& space,
                                        Dist&& dist) {
  std::vector<std::pair<double, std::size_t>> keyed;
  keyed.reserve(candidates.size());
  for (std::size_t j : candidates) keyed.emplace_back(dist(j), j);
  auto less = [&](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first < b.first;
    return space.id_rank(a.second) < space.id_rank(b.second);
  };
  std::partial_sort(keyed.begin(), keyed.begin() + static_cast<long>(k), keyed.end(), less);
  std::vector<std::size_t> out;
  out.reserve(k);
  for (std::size_t n = 0; n < k; ++n) out.push_back(keyed[n].second);
  return out;
}

}  // namespace detail

/// k nearest annotators to `i` (never `i` itself), ties by annotator id.
inline std::vector<std::size_t> knn(const RepSpace& space, std::size_t i, std::size_t k,
                                    Metric metric = Metric::cosine) {
  if (k == 0 || k >= space.size())
    throw ConfigError("k must satisfy 1 <= k < N (k=" + std::to_string(k) + ", N=" + std::to_string(space.size()) + ")");
  std::vector<std::size_t> candidates;
  for (std::size_t j = 0; j < space.size(); ++j)
    if (j != i) candidates.push_back(j);
  return detail::select_nearest(std::move(candidates), k, space, [&](std::size_t j) { return space.distance(i, j, metric); });
}

/// Full pairwise distance matrix, reused across bootstrap iterations.
class DistanceCache {
 public:
  DistanceCache(const RepSpace& space, Metric metric) : space_(&space) {
    const auto n = static_cast<Eigen::Index>(space.size());
    d_ = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index a = 0; a < n; ++a)
      for (Eigen::Index b = a + 1; b < n; ++b)
        d_(a, b) = d_(b, a) = space.distance(static_cast<std::size_t>(a), static_cast<std::size_t>(b), metric);
  }

  double operator()(std::size_t i, std::size_t j) const {
    return d_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }

  /// k nearest to `i` among `pool` (which may contain `i`; it is skipped).
  std::vector<std::size_t> nearest(std::size_t i, const std::vector<std::size_t>& pool, std::size_t k) const {
    std::vector<std::size_t> candidates;
    candidates.reserve(pool.size());
    for (std::size_t j : pool)
      if (j != i) candidates.push_back(j);
    if (k == 0 || k > candidates.size()) throw ConfigError("k exceeds the neighbour pool");
    return detail::select_nearest(std::move(candidates), k, *space_, [&](std::size_t j) { return (*this)(i, j); });
  }

 private:
  const RepSpace* space_;
  Eigen::MatrixXd d_;
};

namespace detail {

/// Observed probability over a weighted pool: each distinct member i with
/// weight w_i searches its neighbours among the distinct members.
inline double observed_weighted(const RepSpace& space, std::size_t attr, const DistanceCache& dist,
                                const std::vector<std::size_t>& members, const std::vector<double>& weights,
                                std::size_t k) {
  const auto& codes = space.codes(attr);
  double total = 0.0, weight_sum = 0.0;
  for (std::size_t m = 0; m < members.size(); ++m) {
    const std::size_t i = members[m];
    std::size_t same = 0;
    for (std::size_t j : dist.nearest(i, members, k))
      if (codes[j] == codes[i]) ++same;
    total += weights[m] * static_cast<double>(same) / static_cast<double>(k);
    weight_sum += weights[m];
  }
  return total / weight_sum;
}

inline double chance_weighted(const RepSpace& space, std::size_t attr, const std::vector<std::size_t>& members,
                              const std::vector<double>& weights) {
  const auto& codes = space.codes(attr);
  std::vector<double> mass(space.category_count(attr), 0.0);
  double total = 0.0;
  for (std::size_t m = 0; m < members.size(); ++m) {
    mass[static_cast<std::size_t>(codes[members[m]])] += weights[m];
    total += weights[m];
  }
  double squares = 0.0;
  for (double c : mass) squares += c * c;
  return squares / (total * total);
}

}  // namespace detail

/// Mean over annotators of the share of their k nearest neighbours that
/// share the annotator's category.
inline double observed_probability(const RepSpace& space, std::string_view attribute, std::size_t k = 50,
                                   Metric metric = Metric::cosine) {
  const std::size_t attr = space.attribute_index(attribute);
  if (k == 0 || k >= space.size()) throw ConfigError("k must satisfy 1 <= k < N");
  const auto& codes = space.codes(attr);
  double total = 0.0;
  for (std::size_t i = 0; i < space.size(); ++i) {
    std::size_t same = 0;
    for (std::size_t j : knn(space, i, k, metric))
      if (codes[j] == codes[i]) ++same;
    total += static_cast<double>(same) / static_cast<double>(k);
  }
  return total / static_cast<double>(space.size());
}

/// Sum of squared category frequencies.
inline double chance_probability(const RepSpace& space, std::string_view attribute) {
  const std::size_t attr = space.attribute_index(attribute);
  std::vector<std::size_t> members(space.size());
  std::iota(members.begin(), members.end(), 0);
  return detail::chance_weighted(space, attr, members, std::vector<double>(space.size(), 1.0));
}

inline double homophily_ratio(const RepSpace& space, std::string_view attribute, std::size_t k = 50,
                              Metric metric = Metric::cosine) {
  const double chance = chance_probability(space, attribute);
  if (!(chance > 0.0)) throw NumericError("chance probability is zero");
  return observed_probability(space, attribute, k, metric) / chance;
}

struct HomophilyRow {
  std::string attribute;
  MeanStd observed, chance, ratio;
  std::size_t k = 0;
  std::size_t iterations = 0;

  nlohmann::ordered_json to_json() const {
    auto ms = [](const MeanStd& m) { return nlohmann::ordered_json{{"mean", m.mean}, {"std", m.std}}; };
    return {{"attribute", attribute}, {"observed", ms(observed)}, {"chance", ms(chance)},
            {"ratio", ms(ratio)},     {"k", k},                   {"iterations", iterations}};
  }
};

struct BootstrapOptions {
  std::size_t k = 50;
  std::size_t iterations = 1000;
  std::uint64_t seed = 0;
  Metric metric = Metric::cosine;
  unsigned threads = 1;
};

/// Resamples N annotators with replacement per iteration. Distinct draws form
/// the neighbour pool; each draw's multiplicity weights its term in the
/// observed mean and in the category frequencies. Iteration t uses
/// derive_seed(seed, t), so threading does not change the result.
inline HomophilyRow bootstrap_homophily(const RepSpace& space, std::string_view attribute,
                                        const BootstrapOptions& opt, const DistanceCache* cache = nullptr) {
  const std::size_t attr = space.attribute_index(attribute);
  const std::size_t N = space.size();
  if (opt.k == 0 || N < opt.k + 1) throw ConfigError("bootstrap needs N >= k + 1");
  if (opt.iterations == 0) throw ConfigError("bootstrap needs at least one iteration");
  std::optional<DistanceCache> own;
  if (!cache) cache = &own.emplace(space, opt.metric);

  std::vector<double> obs(opt.iterations), chance(opt.iterations), ratio(opt.iterations);
  auto run = [&](std::size_t t) {
    SplitMix64 rng(derive_seed(opt.seed, t));
    std::vector<double> count(N, 0.0);
    for (std::size_t n = 0; n < N; ++n) count[rng.below(N)] += 1.0;
    std::vector<std::size_t> members;
    std::vector<double> weights;
    for (std::size_t i = 0; i < N; ++i)
      if (count[i] > 0.0) {
        members.push_back(i);
        weights.push_back(count[i]);
      }
    if (members.size() < opt.k + 1)
      throw ConfigError("bootstrap sample has " + std::to_string(members.size()) + " distinct annotators, k=" +
                        std::to_string(opt.k));
    obs[t] = detail::observed_weighted(space, attr, *cache, members, weights, opt.k);
    chance[t] = detail::chance_weighted(space, attr, members, weights);
    ratio[t] = obs[t] / chance[t];
  };
  const unsigned threads = std::max(1u, opt.threads);
  if (threads == 1) {
    for (std::size_t t = 0; t < opt.iterations; ++t) run(t);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    for (unsigned w = 0; w < threads; ++w)
      pool.emplace_back([&, w] {
        try {
          for (std::size_t t = w; t < opt.iterations; t += threads) run(t);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  return {std::string(attribute), mean_std(obs), mean_std(chance), mean_std(ratio), opt.k, opt.iterations};
}

inline std::vector<HomophilyRow> bootstrap_all(const RepSpace& space, const BootstrapOptions& opt) {
  DistanceCache cache(space, opt.metric);
  std::vector<HomophilyRow> rows;
  for (const auto& a : space.attributes()) rows.push_back(bootstrap_homophily(space, a, opt, &cache));
  return rows;
}

/// Attribute, Observed, Random, Ratio with +/- columns.
inline std::string homophily_to_csv(const std::vector<HomophilyRow>& rows) {
  std::string out = "attribute,observed,observed_std,random,random_std,ratio,ratio_std\n";
  for (const auto& r : rows)
    io::append_csv_row(out, {r.attribute, io::format_fixed(r.observed.mean), io::format_fixed(r.observed.std),
                             io::format_fixed(r.chance.mean), io::format_fixed(r.chance.std),
                             io::format_fixed(r.ratio.mean), io::format_fixed(r.ratio.std)});
  return out;
}

/// Reads `annotator_id,d0..` (or `key,d0..`) representation exports.
inline EmbeddingTable parse_reps_csv(std::string_view csv) {
  std::string text(csv);
  if (text.rfind("annotator_id,", 0) == 0) text = "key" + text.substr(12);
  return parse_embeddings_csv(text);
}

}  // namespace persp
