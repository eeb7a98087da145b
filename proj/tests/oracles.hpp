#pragma once

// Independent reference implementations used only by tests. Nothing here
// calls the library code it is compared against.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace oracle {

/// Contrastive loss by explicit double loops over pairs.
inline double contrastive_pairwise(const std::vector<std::vector<double>>& E, const std::vector<int>& labels,
                                   const std::vector<std::string>& texts, double tau, bool exclude_self = false) {
  const std::size_t B = E.size();
  auto sim = [&](std::size_t i, std::size_t j) {
    double s = 0.0;
    for (std::size_t d = 0; d < E[i].size(); ++d) s += E[i][d] * E[j][d];
    return s / tau;
  };
  double pos_sum = 0.0, neg_sum = 0.0, pos_n = 0.0, neg_n = 0.0;
  for (std::size_t i = 0; i < B; ++i) {
    double top = -INFINITY;
    for (std::size_t j = 0; j < B; ++j)
      if (!(exclude_self && i == j)) top = std::max(top, sim(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < B; ++j)
      if (!(exclude_self && i == j)) z += std::exp(sim(i, j) - top);
    for (std::size_t j = 0; j < B; ++j) {
      if (i == j || texts[i] != texts[j]) continue;
      const double log_p = sim(i, j) - top - std::log(z);
      if (labels[i] == labels[j]) {
        pos_sum += log_p;
        pos_n += 1.0;
      } else {
        neg_sum += std::exp(log_p);
        neg_n += 1.0;
      }
    }
  }
  return -pos_sum / std::max(pos_n, 1.0) + neg_sum / std::max(neg_n, 1.0);
}

/// Central difference of f at every coordinate of x.
inline std::vector<double> numeric_gradient(const std::function<double(const std::vector<double>&)>& f,
                                            std::vector<double> x, double h = 1e-6) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f(x);
    x[i] = keep - h;
    const double down = f(x);
    x[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// ||a - b|| / max(||a||, ||b||), 0 when both vanish.
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::sqrt(std::max(na, nb));
  return scale == 0.0 ? 0.0 : std::sqrt(diff) / scale;
}

/// AUC as the share of (positive, negative) pairs ordered correctly, ties half.
inline double auc_pairs(const std::vector<double>& scores, const std::vector<int>& labels) {
  double good = 0.0, total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      total += 1.0;
      if (scores[i] > scores[j]) good += 1.0;
      else if (scores[i] == scores[j]) good += 0.5;
    }
  }
  return good / total;
}

/// k nearest by full sort on (cosine distance, id).
inline std::vector<std::size_t> knn_bruteforce(const std::vector<std::vector<double>>& X,
                                               const std::vector<std::string>& ids, std::size_t i, std::size_t k) {
  auto cosdist = [&](std::size_t a, std::size_t b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t d = 0; d < X[a].size(); ++d) {
      dot += X[a][d] * X[b][d];
      na += X[a][d] * X[a][d];
      nb += X[b][d] * X[b][d];
    }
    return 1.0 - dot / (std::sqrt(na) * std::sqrt(nb));
  };
  std::vector<std::size_t> others;
  for (std::size_t j = 0; j < X.size(); ++j)
    if (j != i) others.push_back(j);
  std::sort(others.begin(), others.end(), [&](std::size_t a, std::size_t b) {
    const double da = cosdist(i, a), db = cosdist(i, b);
    if (da != db) return da < db;
    return ids[a] < ids[b];
  });
  others.resize(k);
  return others;
}

/// Mean homophily ratio of random placements, used to calibrate a null band.
inline double null_ratio(std::size_t n, std::size_t k, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal;
  std::vector<std::vector<double>> X(n, std::vector<double>(8));
  for (auto& row : X)
    for (auto& v : row) v = normal(gen);
  std::vector<int> attr(n);
  for (std::size_t i = 0; i < n; ++i) attr[i] = static_cast<int>(i % 2);
  std::vector<std::string> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = std::to_string(1000000 + i);
  double obs = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t same = 0;
    for (std::size_t j : knn_bruteforce(X, ids, i, k)) same += attr[j] == attr[i];
    obs += static_cast<double>(same) / static_cast<double>(k);
  }
  return (obs / static_cast<double>(n)) / 0.5;
}

}  // namespace oracle
