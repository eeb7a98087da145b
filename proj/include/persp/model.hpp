#pragma once

// The five classifier variants: parameters, forward pass, hand-derived
// backward pass, Adam updates and checkpoints.
//
// Wiring (rows are samples, W is out x in):
//   simple, multitask        x = text
//   socio_multihot/embedding x = [text | socio]
//   socio_contrastive        E = ReLU(P2 ReLU(P1 m + c1) + c2), x = [text | E]
//   trunk                    h1 = Drop(ReLU(W1 x + b1)), h2 = Drop(ReLU(W2 h1 + b2))
//   output                   logit = w . h2 + b (multitask: one (w, b) per annotator)
//
// The contrastive objective sees E with rows L2-normalized (configurable);
// the trunk always sees the raw E.

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "persp/batcher.hpp"
#include "persp/error.hpp"
#include "persp/features.hpp"
#include "persp/io.hpp"
#include "persp/rng.hpp"

namespace persp {

enum class Variant { simple, multitask, socio_multihot, socio_embedding, socio_contrastive };

inline constexpr std::array<Variant, 5> kAllVariants{Variant::simple, Variant::multitask, Variant::socio_multihot,
                                                     Variant::socio_embedding, Variant::socio_contrastive};

inline std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::simple: return "simple";
    case Variant::multitask: return "multitask";
    case Variant::socio_multihot: return "socio_multihot";
    case Variant::socio_embedding: return "socio_embedding";
    case Variant::socio_contrastive: return "socio_contrastive";
  }
  return "?";
}

inline Variant parse_variant(std::string_view name) {
  for (Variant v : kAllVariants)
    if (to_string(v) == name) return v;
  throw ConfigError("unknown variant '" + std::string(name) + "'");
}

inline SocioSource socio_source(Variant v) {
  switch (v) {
    case Variant::socio_multihot:
    case Variant::socio_contrastive: return SocioSource::multihot;
    case Variant::socio_embedding: return SocioSource::embedding;
    default: return SocioSource::none;
  }
}

struct ModelSpec {
  Variant variant = Variant::simple;
  std::size_t text_dim = 0;
  std::size_t socio_width = 0;  // multi-hot width or annotator embedding width
  std::array<std::size_t, 2> hidden_dims{512, 256};
  std::array<std::size_t, 2> projection_dims{64, 128};
  double dropout_rate = 0.2;
  double temperature = 0.1;
  double contrastive_weight = 1.0;
  std::size_t annotator_count = 0;  // multitask heads
  bool normalize_embeddings = true;
  bool exclude_self_from_softmax = false;

  bool uses_projection() const { return variant == Variant::socio_contrastive; }

  std::size_t fused_width() const {
    switch (variant) {
      case Variant::simple:
      case Variant::multitask: return text_dim;
      case Variant::socio_multihot:
      case Variant::socio_embedding: return text_dim + socio_width;
      case Variant::socio_contrastive: return text_dim + projection_dims[1];
    }
    return text_dim;
  }

  std::size_t output_units() const { return variant == Variant::multitask ? annotator_count : 1; }

  void validate() const {
    if (text_dim < 1) throw ConfigError("text_dim must be >= 1");
    if (hidden_dims[0] < 1 || hidden_dims[1] < 1) throw ConfigError("hidden dims must be >= 1");
    if (projection_dims[0] < 1 || projection_dims[1] < 1) throw ConfigError("projection dims must be >= 1");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout_rate must lie in [0, 1)");
    if (!(temperature > 0.0)) throw ConfigError("temperature must be > 0");
    if (!(contrastive_weight >= 0.0)) throw ConfigError("contrastive_weight must be >= 0");
    if ((variant == Variant::socio_multihot || variant == Variant::socio_embedding ||
         variant == Variant::socio_contrastive) &&
        socio_width < 1)
      throw ConfigError(std::string(to_string(variant)) + " needs socio_width >= 1");
    if (variant == Variant::multitask && annotator_count < 1) throw ConfigError("multitask needs annotators");
  }

  nlohmann::ordered_json to_json() const {
    return {{"variant", to_string(variant)},
            {"text_dim", text_dim},
            {"socio_width", socio_width},
            {"hidden_dims", hidden_dims},
            {"projection_dims", projection_dims},
            {"dropout_rate", dropout_rate},
            {"temperature", temperature},
            {"contrastive_weight", contrastive_weight},
            {"annotator_count", annotator_count},
            {"normalize_embeddings", normalize_embeddings},
            {"exclude_self_from_softmax", exclude_self_from_softmax}};
  }

  static ModelSpec from_json(const nlohmann::json& j) {
    ModelSpec s;
    s.variant = parse_variant(j.at("variant").get<std::string>());
    s.text_dim = j.at("text_dim").get<std::size_t>();
    s.socio_width = j.at("socio_width").get<std::size_t>();
    s.hidden_dims = j.at("hidden_dims").get<std::array<std::size_t, 2>>();
    s.projection_dims = j.at("projection_dims").get<std::array<std::size_t, 2>>();
    s.dropout_rate = j.at("dropout_rate").get<double>();
    s.temperature = j.at("temperature").get<double>();
    s.contrastive_weight = j.at("contrastive_weight").get<double>();
    s.annotator_count = j.at("annotator_count").get<std::size_t>();
    s.normalize_embeddings = j.at("normalize_embeddings").get<bool>();
    s.exclude_self_from_softmax = j.at("exclude_self_from_softmax").get<bool>();
    return s;
  }
};

struct Layer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out

  bool operator==(const Layer& o) const { return weight == o.weight && bias == o.bias; }
};

using Gradients = std::vector<Layer>;

struct ModelParams {
  std::vector<Layer> layers;
  std::vector<Layer> first_moment;
  std::vector<Layer> second_moment;
  std::uint64_t step = 0;
  std::vector<std::string> head_annotators;  // multitask only; row order of the output layer

  std::optional<std::size_t> head_index(const std::string& annotator) const {
    auto it = head_lookup.find(annotator);
    if (it == head_lookup.end()) return std::nullopt;
    return it->second;
  }

  void index_heads() {
    head_lookup.clear();
    for (std::size_t i = 0; i < head_annotators.size(); ++i) head_lookup.emplace(head_annotators[i], i);
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return n;
  }

  std::map<std::string, std::size_t> head_lookup;
};

/// Layer positions inside ModelParams::layers.
struct LayerIndex {
  std::size_t proj1, proj2, hidden1, hidden2, output;
};

inline LayerIndex layer_index(const ModelSpec& spec) {
  if (spec.uses_projection()) return {0, 1, 2, 3, 4};
  return {0, 0, 0, 1, 2};
}

inline std::vector<std::pair<std::size_t, std::size_t>> layer_shapes(const ModelSpec& spec) {
  std::vector<std::pair<std::size_t, std::size_t>> shapes;  // (out, in)
  if (spec.uses_projection()) {
    shapes.emplace_back(spec.projection_dims[0], spec.socio_width);
    shapes.emplace_back(spec.projection_dims[1], spec.projection_dims[0]);
  }
  shapes.emplace_back(spec.hidden_dims[0], spec.fused_width());
  shapes.emplace_back(spec.hidden_dims[1], spec.hidden_dims[0]);
  shapes.emplace_back(spec.output_units(), spec.hidden_dims[1]);
  return shapes;
}

inline std::vector<Layer> zeros_like(const std::vector<Layer>& layers) {
  std::vector<Layer> out;
  for (const auto& l : layers)
    out.push_back({Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()), Eigen::VectorXd::Zero(l.bias.size())});
  return out;
}

/// Glorot-uniform weights, zero biases and moments. Each multitask head is a
/// separate (hidden -> 1) layer for the purpose of the fan computation.
inline ModelParams init_params(const ModelSpec& spec, std::uint64_t seed,
                               std::vector<std::string> head_annotators = {}) {
  spec.validate();
  if (spec.variant == Variant::multitask && head_annotators.size() != spec.annotator_count)
    throw ConfigError("multitask needs one annotator id per head");
  SplitMix64 rng(derive_seed(seed, "init"));
  ModelParams p;
  const auto shapes = layer_shapes(spec);
  for (std::size_t li = 0; li < shapes.size(); ++li) {
    auto [out, in] = shapes[li];
    const bool heads = spec.variant == Variant::multitask && li + 1 == shapes.size();
    const double fan_out = heads ? 1.0 : static_cast<double>(out);
    const double bound = std::sqrt(6.0 / (static_cast<double>(in) + fan_out));
    Layer l{Eigen::MatrixXd(out, in), Eigen::VectorXd::Zero(static_cast<Eigen::Index>(out))};
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = rng.uniform(-bound, bound);
    p.layers.push_back(std::move(l));
  }
  p.first_moment = zeros_like(p.layers);
  p.second_moment = zeros_like(p.layers);
  p.head_annotators = std::move(head_annotators);
  p.index_heads();
  return p;
}

enum class Mode { train, eval };

/// Everything backward() needs, cached by a forward pass.
struct ForwardTrace {
  Mode mode = Mode::eval;
  Eigen::MatrixXd socio_in;         // multi-hot rows (projection variants)
  Eigen::MatrixXd proj1_pre, proj1;  // B x 64
  Eigen::MatrixXd proj2_pre;         // B x 128
  Eigen::MatrixXd embedding;         // E, B x 128
  Eigen::VectorXd embedding_norms;
  Eigen::MatrixXd contrastive_embedding;  // E as seen by the contrastive loss
  Eigen::MatrixXd input;                  // fused x
  Eigen::MatrixXd hidden1_pre, hidden1_mask, hidden1;
  Eigen::MatrixXd hidden2_pre, hidden2_mask, hidden2;
  Eigen::VectorXd logits;
  std::vector<long> heads;  // -1 selects the mean head
};

struct ForwardResult {
  Eigen::VectorXd probs;
  ForwardTrace trace;
};

inline constexpr double kNormFloor = 1e-12;

namespace detail {

inline Eigen::MatrixXd affine(const Eigen::MatrixXd& x, const Layer& l) {
  Eigen::MatrixXd z = x * l.weight.transpose();
  z.rowwise() += l.bias.transpose();
  return z;
}

inline Eigen::MatrixXd relu(const Eigen::MatrixXd& z) { return z.cwiseMax(0.0); }

inline Eigen::MatrixXd relu_grad(const Eigen::MatrixXd& z) {
  return (z.array() > 0.0).cast<double>().matrix();
}

/// Inverted dropout mask: 0 or 1/(1-p).
inline Eigen::MatrixXd dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, SplitMix64& rng) {
  Eigen::MatrixXd m(rows, cols);
  const double keep = 1.0 / (1.0 - p);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.uniform() < p ? 0.0 : keep;
  return m;
}

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace detail

/// Projection E = ReLU(P2 ReLU(P1 m + c1) + c2) for multi-hot rows `m`.
inline Eigen::MatrixXd project_socio(const ModelSpec& spec, const ModelParams& params, const Eigen::MatrixXd& m) {
  const LayerIndex li = layer_index(spec);
  return detail::relu(detail::affine(detail::relu(detail::affine(m, params.layers[li.proj1])), params.layers[li.proj2]));
}

/// Runs the variant's network on a batch. In train mode dropout masks are
/// drawn from SplitMix64(seed); eval mode is deterministic and ignores seed.
inline ForwardResult forward(const ModelSpec& spec, const ModelParams& params, const Batch& batch, Mode mode,
                             std::uint64_t seed = 0) {
  using detail::affine;
  using detail::relu;
  const LayerIndex li = layer_index(spec);
  const auto B = static_cast<Eigen::Index>(batch.size());
  if (batch.text.rows() != B || static_cast<std::size_t>(batch.text.cols()) != spec.text_dim)
    throw ConfigError("batch text width does not match the model");
  ForwardResult res;
  ForwardTrace& t = res.trace;
  t.mode = mode;

  switch (spec.variant) {
    case Variant::simple:
    case Variant::multitask:
      t.input = batch.text;
      break;
    case Variant::socio_multihot:
    case Variant::socio_embedding:
      if (static_cast<std::size_t>(batch.socio.cols()) != spec.socio_width || batch.socio.rows() != B)
        throw ConfigError("batch socio width does not match the model");
      t.input.resize(B, batch.text.cols() + batch.socio.cols());
      t.input << batch.text, batch.socio;
      break;
    case Variant::socio_contrastive: {
      if (static_cast<std::size_t>(batch.socio.cols()) != spec.socio_width || batch.socio.rows() != B)
        throw ConfigError("batch socio width does not match the model");
      t.socio_in = batch.socio;
      t.proj1_pre = affine(t.socio_in, params.layers[li.proj1]);
      t.proj1 = relu(t.proj1_pre);
      t.proj2_pre = affine(t.proj1, params.layers[li.proj2]);
      t.embedding = relu(t.proj2_pre);
      t.embedding_norms = t.embedding.rowwise().norm();
      if (spec.normalize_embeddings) {
        t.contrastive_embedding = t.embedding;
        for (Eigen::Index r = 0; r < B; ++r)
          t.contrastive_embedding.row(r) /= std::max(t.embedding_norms[r], kNormFloor);
      } else {
        t.contrastive_embedding = t.embedding;
      }
      t.input.resize(B, batch.text.cols() + t.embedding.cols());
      t.input << batch.text, t.embedding;
      break;
    }
  }

  SplitMix64 rng(seed);
  const bool drop = mode == Mode::train && spec.dropout_rate > 0.0;
  t.hidden1_pre = affine(t.input, params.layers[li.hidden1]);
  t.hidden1_mask = drop ? detail::dropout_mask(B, t.hidden1_pre.cols(), spec.dropout_rate, rng)
                        : Eigen::MatrixXd::Ones(B, t.hidden1_pre.cols());
  t.hidden1 = relu(t.hidden1_pre).cwiseProduct(t.hidden1_mask);
  t.hidden2_pre = affine(t.hidden1, params.layers[li.hidden2]);
  t.hidden2_mask = drop ? detail::dropout_mask(B, t.hidden2_pre.cols(), spec.dropout_rate, rng)
                        : Eigen::MatrixXd::Ones(B, t.hidden2_pre.cols());
  t.hidden2 = relu(t.hidden2_pre).cwiseProduct(t.hidden2_mask);

  const Layer& out = params.layers[li.output];
  t.logits.resize(B);
  if (spec.variant == Variant::multitask) {
    Eigen::RowVectorXd mean_w = out.weight.colwise().mean();
    const double mean_b = out.bias.mean();
    t.heads.resize(static_cast<std::size_t>(B));
    for (Eigen::Index r = 0; r < B; ++r) {
      auto h = params.head_index(batch.annotator_ids[static_cast<std::size_t>(r)]);
      if (!h && mode == Mode::train)
        throw DataError("annotator '" + batch.annotator_ids[static_cast<std::size_t>(r)] + "' has no head");
      t.heads[static_cast<std::size_t>(r)] = h ? static_cast<long>(*h) : -1;
      t.logits[r] = h ? out.weight.row(static_cast<Eigen::Index>(*h)).dot(t.hidden2.row(r)) +
                            out.bias[static_cast<Eigen::Index>(*h)]
                      : mean_w.dot(t.hidden2.row(r)) + mean_b;
    }
  } else {
    t.logits = t.hidden2 * out.weight.row(0).transpose();
    t.logits.array() += out.bias[0];
  }
  res.probs = t.logits.unaryExpr([](double z) { return detail::sigmoid(z); });
  return res;
}

/// Gradients of a scalar loss given its derivatives w.r.t. the logits and
/// (socio_contrastive only) w.r.t. the contrastive embedding rows.
inline Gradients backward(const ModelSpec& spec, const ModelParams& params, const ForwardTrace& t,
                          const Eigen::VectorXd& dL_dlogits, const Eigen::MatrixXd* dL_dE = nullptr) {
  const LayerIndex li = layer_index(spec);
  const Eigen::Index B = t.logits.size();
  if (dL_dlogits.size() != B) throw ConfigError("dL_dlogits length does not match the trace");
  if (dL_dE && (!spec.uses_projection() || dL_dE->rows() != B || dL_dE->cols() != t.embedding.cols()))
    throw ConfigError("dL_dE shape does not match the trace");
  Gradients g = zeros_like(params.layers);

  const Layer& out = params.layers[li.output];
  Eigen::MatrixXd d_h2(B, t.hidden2.cols());
  if (spec.variant == Variant::multitask) {
    const double inv_heads = 1.0 / static_cast<double>(out.weight.rows());
    for (Eigen::Index r = 0; r < B; ++r) {
      const long h = t.heads[static_cast<std::size_t>(r)];
      const double d = dL_dlogits[r];
      if (h >= 0) {
        g[li.output].weight.row(h) += d * t.hidden2.row(r);
        g[li.output].bias[h] += d;
        d_h2.row(r) = d * out.weight.row(h);
      } else {
        g[li.output].weight.rowwise() += (d * inv_heads) * t.hidden2.row(r);
        g[li.output].bias.array() += d * inv_heads;
        d_h2.row(r) = d * out.weight.colwise().mean();
      }
    }
  } else {
    g[li.output].weight.row(0) = dL_dlogits.transpose() * t.hidden2;
    g[li.output].bias[0] = dL_dlogits.sum();
    d_h2 = dL_dlogits * out.weight.row(0);
  }

  const Eigen::MatrixXd dz2 =
      d_h2.cwiseProduct(t.hidden2_mask).cwiseProduct(detail::relu_grad(t.hidden2_pre));
  g[li.hidden2].weight = dz2.transpose() * t.hidden1;
  g[li.hidden2].bias = dz2.colwise().sum().transpose();
  const Eigen::MatrixXd d_h1 = dz2 * params.layers[li.hidden2].weight;
  const Eigen::MatrixXd dz1 =
      d_h1.cwiseProduct(t.hidden1_mask).cwiseProduct(detail::relu_grad(t.hidden1_pre));
  g[li.hidden1].weight = dz1.transpose() * t.input;
  g[li.hidden1].bias = dz1.colwise().sum().transpose();

  if (!spec.uses_projection()) return g;

  const Eigen::Index width = t.embedding.cols();
  Eigen::MatrixXd dE = (dz1 * params.layers[li.hidden1].weight).rightCols(width);
  if (dL_dE) {
    if (spec.normalize_embeddings) {
      for (Eigen::Index r = 0; r < B; ++r) {
        const double n = t.embedding_norms[r];
        const Eigen::RowVectorXd gr = dL_dE->row(r);
        if (n > kNormFloor) {
          const Eigen::RowVectorXd u = t.contrastive_embedding.row(r);
          dE.row(r) += (gr - u * u.dot(gr)) / n;
        } else {
          dE.row(r) += gr / kNormFloor;
        }
      }
    } else {
      dE += *dL_dE;
    }
  }
  const Eigen::MatrixXd du2 = dE.cwiseProduct(detail::relu_grad(t.proj2_pre));
  g[li.proj2].weight = du2.transpose() * t.proj1;
  g[li.proj2].bias = du2.colwise().sum().transpose();
  const Eigen::MatrixXd du1 = (du2 * params.layers[li.proj2].weight).cwiseProduct(detail::relu_grad(t.proj1_pre));
  g[li.proj1].weight = du1.transpose() * t.socio_in;
  g[li.proj1].bias = du1.colwise().sum().transpose();
  return g;
}

struct AdamConfig {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

inline bool all_finite(const std::vector<Layer>& layers) {
  for (const auto& l : layers)
    if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
  return true;
}

/// Bias-corrected Adam. Refuses (throws) on any non-finite gradient.
inline void adam_step(ModelParams& params, const Gradients& grads, const AdamConfig& cfg = {}) {
  if (!(cfg.lr > 0.0)) throw ConfigError("learning rate must be > 0");
  if (grads.size() != params.layers.size()) throw ConfigError("gradient layer count mismatch");
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (grads[i].weight.rows() != params.layers[i].weight.rows() ||
        grads[i].weight.cols() != params.layers[i].weight.cols() ||
        grads[i].bias.size() != params.layers[i].bias.size())
      throw ConfigError("gradient shape mismatch at layer " + std::to_string(i));
    if (!grads[i].weight.allFinite() || !grads[i].bias.allFinite())
      throw NumericError("non-finite gradient at layer " + std::to_string(i) + ", update refused");
  }
  params.step += 1;
  const double t = static_cast<double>(params.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  auto update = [&](auto& p, auto& m, auto& v, const auto& g) {
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
    p.array() -= cfg.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.epsilon);
  };
  for (std::size_t i = 0; i < grads.size(); ++i) {
    update(params.layers[i].weight, params.first_moment[i].weight, params.second_moment[i].weight, grads[i].weight);
    update(params.layers[i].bias, params.first_moment[i].bias, params.second_moment[i].bias, grads[i].bias);
  }
  if (!all_finite(params.layers)) throw NumericError("parameters became non-finite at step " + std::to_string(params.step));
}

/// Eval-mode projection of every annotator's profile. Rows follow the
/// profile map's (sorted) order.
inline EmbeddingTable extract_socio_reps(const ModelSpec& spec, const ModelParams& params, const ProfileMap& profiles,
                                         const SocioSchema& schema) {
  if (spec.variant != Variant::socio_contrastive)
    throw ConfigError("socio representations need the socio_contrastive variant, got " +
                      std::string(to_string(spec.variant)));
  if (schema.total_width() != spec.socio_width) throw ConfigError("schema width does not match the model");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(profiles.size()), static_cast<Eigen::Index>(schema.total_width()));
  Eigen::Index r = 0;
  for (const auto& [id, p] : profiles) m.row(r++) = encode_multihot(p, schema).transpose();
  const Eigen::MatrixXd E = project_socio(spec, params, m);
  EmbeddingTable table(spec.projection_dims[1]);
  r = 0;
  for (const auto& [id, p] : profiles) {
    const Eigen::RowVectorXd row = E.row(r++);
    table.add(id, std::span<const double>(row.data(), static_cast<std::size_t>(row.size())));
  }
  return table;
}

/// Representation export: `annotator_id,d0..d{n-1}`.
inline std::string reps_to_csv(const EmbeddingTable& reps) {
  std::string csv = embeddings_to_csv(reps);
  return "annotator_id" + csv.substr(3);
}

// Checkpoints: a directory holding manifest.json and one row-major
// little-endian f64 file per tensor, named layer.{index}.{weight|bias}.bin.

namespace detail {
inline std::string tensor_bytes(const double* data, std::size_t n) {
  std::string out;
  out.reserve(n * 8);
  for (std::size_t i = 0; i < n; ++i) {
    const auto bits = std::bit_cast<std::uint64_t>(data[i]);
    for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xFF));
  }
  return out;
}

inline std::vector<double> tensor_values(std::string_view bytes) {
  if (bytes.size() % 8) throw DataError("tensor file size is not a multiple of 8");
  std::vector<double> out(bytes.size() / 8);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[i * 8 + b])) << (8 * b);
    out[i] = std::bit_cast<double>(bits);
  }
  return out;
}
}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& dir, const ModelSpec& spec, const ModelParams& params,
                            std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json manifest;
  manifest["spec"] = spec.to_json();
  manifest["seed"] = seed;
  manifest["step"] = params.step;
  manifest["head_annotators"] = params.head_annotators;
  nlohmann::ordered_json tensors = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    const auto& l = params.layers[i];
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> w = l.weight;
    const std::string wname = "layer." + std::to_string(i) + ".weight";
    const std::string bname = "layer." + std::to_string(i) + ".bias";
    io::write_file(dir / (wname + ".bin"), detail::tensor_bytes(w.data(), static_cast<std::size_t>(w.size())));
    io::write_file(dir / (bname + ".bin"), detail::tensor_bytes(l.bias.data(), static_cast<std::size_t>(l.bias.size())));
    tensors.push_back({{"name", wname}, {"shape", {l.weight.rows(), l.weight.cols()}}});
    tensors.push_back({{"name", bname}, {"shape", {l.bias.size()}}});
  }
  manifest["tensors"] = tensors;
  io::write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

struct Checkpoint {
  ModelSpec spec;
  ModelParams params;
  std::uint64_t seed = 0;
};

inline Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  if (!std::filesystem::exists(manifest_path)) throw DataError("no checkpoint manifest at '" + manifest_path.string() + "'");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(io::read_file(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("bad checkpoint manifest: " + std::string(e.what()));
  }
  Checkpoint ck;
  ck.spec = ModelSpec::from_json(manifest.at("spec"));
  ck.seed = manifest.at("seed").get<std::uint64_t>();
  ck.params.step = manifest.at("step").get<std::uint64_t>();
  ck.params.head_annotators = manifest.at("head_annotators").get<std::vector<std::string>>();
  ck.params.index_heads();
  const auto shapes = layer_shapes(ck.spec);
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const auto [rows, cols] = shapes[i];
    const auto w = detail::tensor_values(io::read_file(dir / ("layer." + std::to_string(i) + ".weight.bin")));
    const auto b = detail::tensor_values(io::read_file(dir / ("layer." + std::to_string(i) + ".bias.bin")));
    if (w.size() != rows * cols || b.size() != rows)
      throw DataError("tensor layer." + std::to_string(i) + " does not match the manifest spec");
    Layer l;
    l.weight = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        w.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    l.bias = Eigen::Map<const Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(rows));
    ck.params.layers.push_back(std::move(l));
  }
  ck.params.first_moment = zeros_like(ck.params.layers);
  ck.params.second_moment = zeros_like(ck.params.layers);
  return ck;
}

}  // namespace persp
