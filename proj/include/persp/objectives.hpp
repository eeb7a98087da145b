#pragma once

// Binary cross-entropy, the text-masked contrastive loss over socio
// representations, and their weighted combination.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "persp/batcher.hpp"
#include "persp/error.hpp"

namespace persp {

struct BceResult {
  double loss = 0.0;
  Eigen::VectorXd dL_dlogits;
};

inline constexpr double kProbClamp = 1e-12;

/// Mean binary cross-entropy. Gradient is w.r.t. the pre-sigmoid logits.
inline BceResult bce_loss(const Eigen::VectorXd& probs, std::span<const int> labels) {
  if (static_cast<std::size_t>(probs.size()) != labels.size()) throw ConfigError("probs and labels differ in length");
  const auto B = probs.size();
  BceResult r{0.0, Eigen::VectorXd::Zero(B)};
  if (B == 0) return r;
  for (Eigen::Index i = 0; i < B; ++i) {
    const double y = labels[static_cast<std::size_t>(i)];
    const double p = std::clamp(probs[i], kProbClamp, 1.0 - kProbClamp);
    r.loss -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
    r.dL_dlogits[i] = (probs[i] - y) / static_cast<double>(B);
  }
  r.loss /= static_cast<double>(B);
  return r;
}

struct ContrastiveOptions {
  double temperature = 0.1;
  bool exclude_self_from_softmax = false;
};

struct ContrastiveResult {
  double loss = 0.0;
  double positive = 0.0;
  double negative = 0.0;
  std::size_t pos_pairs = 0;
  std::size_t neg_pairs = 0;
  Eigen::MatrixXd dL_dE;
};

/// Row-wise softmax of S with max subtraction; the diagonal is dropped from
/// the denominator when `exclude_self` is set.
inline Eigen::MatrixXd row_softmax(const Eigen::MatrixXd& S, bool exclude_self = false) {
  Eigen::MatrixXd P(S.rows(), S.cols());
  for (Eigen::Index i = 0; i < S.rows(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < S.cols(); ++j)
      if (!(exclude_self && i == j)) mx = std::max(mx, S(i, j));
    double sum = 0.0;
    for (Eigen::Index j = 0; j < S.cols(); ++j) {
      P(i, j) = (exclude_self && i == j) ? 0.0 : std::exp(S(i, j) - mx);
      sum += P(i, j);
    }
    if (sum > 0.0) P.row(i) /= sum;
  }
  return P;
}

/// Masked contrastive loss over embedding rows E:
///   S = E E^T / tau, P = rowsoftmax(S)
///   L_pos = -sum(M_pos .* log P) / max(sum M_pos, 1)
///   L_neg =  sum(M_neg .* P)     / max(sum M_neg, 1)
/// Masks come from contrastive_masks(text_ids, labels). Returns dL/dE.
inline ContrastiveResult contrastive_loss(const Eigen::MatrixXd& E, std::span<const int> labels,
                                          std::span<const std::string> text_ids, const ContrastiveOptions& opt) {
  if (!(opt.temperature > 0.0)) throw ConfigError("temperature must be > 0");
  const Eigen::Index B = E.rows();
  if (static_cast<std::size_t>(B) != labels.size() || labels.size() != text_ids.size())
    throw ConfigError("embedding rows, labels and text ids differ in length");
  ContrastiveResult r;
  r.dL_dE = Eigen::MatrixXd::Zero(B, E.cols());
  const ContrastiveMasks masks = contrastive_masks(text_ids, labels);
  const double n_pos = masks.positive.sum();
  const double n_neg = masks.negative.sum();
  r.pos_pairs = static_cast<std::size_t>(n_pos);
  r.neg_pairs = static_cast<std::size_t>(n_neg);
  if (n_pos == 0.0 && n_neg == 0.0) return r;

  const Eigen::MatrixXd S = (E * E.transpose()) / opt.temperature;
  const Eigen::MatrixXd P = row_softmax(S, opt.exclude_self_from_softmax);
  const double pos_denom = std::max(n_pos, 1.0);
  const double neg_denom = std::max(n_neg, 1.0);

  // dL/dS, row by row. With r_i = sum_j M_pos[i,j] and q_i = sum_j M_neg[i,j] P[i,j]:
  //   pos: (-M_pos[i,k] + r_i P[i,k]) / pos_denom
  //   neg: (M_neg[i,k] P[i,k] - q_i P[i,k]) / neg_denom
  Eigen::VectorXd log_norm(B);
  for (Eigen::Index i = 0; i < B; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < B; ++j)
      if (!(opt.exclude_self_from_softmax && i == j)) mx = std::max(mx, S(i, j));
    double sum = 0.0;
    for (Eigen::Index j = 0; j < B; ++j)
      if (!(opt.exclude_self_from_softmax && i == j)) sum += std::exp(S(i, j) - mx);
    log_norm[i] = mx + std::log(sum);
  }
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(B, B);
  for (Eigen::Index i = 0; i < B; ++i) {
    const double row_pos = masks.positive.row(i).sum();
    const double row_neg_mass = masks.negative.row(i).dot(P.row(i));
    for (Eigen::Index j = 0; j < B; ++j) {
      if (masks.positive(i, j) != 0.0) r.positive -= S(i, j) - log_norm[i];
      if (masks.negative(i, j) != 0.0) r.negative += P(i, j);
      G(i, j) = (row_pos * P(i, j) - masks.positive(i, j)) / pos_denom +
                (masks.negative(i, j) * P(i, j) - row_neg_mass * P(i, j)) / neg_denom;
    }
  }
  r.positive /= pos_denom;
  r.negative /= neg_denom;
  r.loss = r.positive + r.negative;
  r.dL_dE = ((G + G.transpose()) * E) / opt.temperature;
  return r;
}

inline ContrastiveResult contrastive_loss(const Eigen::MatrixXd& E, const Batch& batch,
                                          const ContrastiveOptions& opt) {
  return contrastive_loss(E, batch.labels, batch.text_ids, opt);
}

struct LossReport {
  double total = 0.0;
  double classification = 0.0;
  double contrastive_pos = 0.0;
  double contrastive_neg = 0.0;
  std::size_t pos_pairs = 0;
  std::size_t neg_pairs = 0;
};

struct CombinedLoss {
  LossReport report;
  Eigen::VectorXd dL_dlogits;
  Eigen::MatrixXd dL_dE;  // already scaled by lambda; empty without a contrastive term
};

/// total = classification + lambda * (L_pos + L_neg).
inline CombinedLoss combined_loss(const BceResult& classification, const ContrastiveResult* contrastive,
                                  double lambda) {
  if (!(lambda >= 0.0)) throw ConfigError("contrastive weight must be >= 0");
  CombinedLoss out;
  out.report.classification = classification.loss;
  out.report.total = classification.loss;
  out.dL_dlogits = classification.dL_dlogits;
  if (contrastive) {
    out.report.contrastive_pos = contrastive->positive;
    out.report.contrastive_neg = contrastive->negative;
    out.report.pos_pairs = contrastive->pos_pairs;
    out.report.neg_pairs = contrastive->neg_pairs;
    out.report.total += lambda * contrastive->loss;
    out.dL_dE = lambda == 0.0 ? Eigen::MatrixXd::Zero(contrastive->dL_dE.rows(), contrastive->dL_dE.cols())
                              : Eigen::MatrixXd(lambda * contrastive->dL_dE);
  }
  if (!std::isfinite(out.report.total)) throw NumericError("loss is not finite");
  return out;
}

}  // namespace persp
