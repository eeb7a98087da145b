// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "fixtures.hpp"
#include "oracles.hpp"

using namespace persp;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

const fs::path kSourceDir = PERSP_SOURCE_DIR;
const fs::path kWorkDir = PERSP_WORK_DIR;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string sci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

Eigen::MatrixXd unit_rows(SplitMix64& rng, Eigen::Index B, Eigen::Index d) {
  Eigen::MatrixXd E(B, d);
  for (Eigen::Index i = 0; i < E.size(); ++i) E.data()[i] = rng.normal();
  for (Eigen::Index r = 0; r < B; ++r) E.row(r) /= E.row(r).norm();
  return E;
}

Outcome contrastive_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  SplitMix64 rng(2024);
  const double taus[] = {0.05, 0.1, 1.0};
  double worst = 0.0;
  std::size_t empty = 0, empty_bad = 0;
  const int cases = 1200;
  for (int c = 0; c < cases; ++c) {
    const auto B = static_cast<Eigen::Index>(1 + rng.below(16));
    const Eigen::MatrixXd E = unit_rows(rng, B, 1 + static_cast<Eigen::Index>(rng.below(8)));
    const std::size_t n_texts = 1 + rng.below(static_cast<std::uint64_t>(B));
    std::vector<int> y;
    std::vector<std::string> t;
    for (Eigen::Index i = 0; i < B; ++i) {
      y.push_back(static_cast<int>(rng.below(2)));
      t.push_back("t" + std::to_string(rng.below(n_texts)));
    }
    const double tau = taus[rng.below(3)];
    const auto r = contrastive_loss(E, y, t, {tau, false});
    worst = std::max(worst, std::abs(r.loss - oracle::contrastive_pairwise(fixture::rows_of(E), y, t, tau)));
    if (r.pos_pairs + r.neg_pairs == 0) {
      ++empty;
      if (r.loss != 0.0) ++empty_bad;
    }
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-12 && empty > 0 && empty_bad == 0 && secs < 10.0,
          std::to_string(cases) + " batches, max |diff| " + sci(worst) + ", " + std::to_string(empty) +
              " mask-empty batches all exactly 0: " + (empty_bad == 0 ? "yes" : "no") + ", " + fmt(secs, 2) + " s"};
}

Outcome hand_anchors() {
  Eigen::MatrixXd E(2, 2);
  E << 1, 0, 1, 0;
  const std::vector<std::string> t{"x", "x"};
  const double same = contrastive_loss(E, std::vector<int>{1, 1}, t, {1.0, false}).loss;
  const double diff = contrastive_loss(E, std::vector<int>{1, 0}, t, {1.0, false}).loss;
  return {std::abs(same - std::log(2.0)) <= 1e-9 && std::abs(diff - 0.5) <= 1e-9,
          "same-label " + fmt(same, 10) + ", different-label " + fmt(diff, 10)};
}

Outcome gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  std::size_t instances = 0;
  for (Variant v : kAllVariants)
    for (std::uint64_t seed = 1; seed <= 12; ++seed) {
      worst = std::max(worst, fixture::gradient_error(v, seed));
      ++instances;
    }
  const double secs = seconds_since(t0);
  return {worst <= 1e-4 && instances >= 50 && secs < 60.0,
          std::to_string(instances) + " instances over 5 variants, max relative error " + sci(worst) +
              ", " + fmt(secs, 2) + " s"};
}

Outcome batching() {
  SplitMix64 rng(99);
  std::size_t cases = 0, failures = 0;
  std::string first;
  auto fail = [&](const std::string& why) {
    if (first.empty()) first = why;
    ++failures;
  };
  for (int c = 0; c < 600; ++c, ++cases) {
    const Dataset d = fixture::random_dataset(rng, 1 + rng.below(40), 2 + rng.below(30), 1 + rng.below(40));
    const std::size_t B = 2 + rng.below(31);
    const BatchPlan plan = plan_epoch(d, B, rng.next());
    std::vector<int> seen(d.size(), 0);
    std::vector<std::size_t> stream;
    for (std::size_t b = 0; b < plan.batches.size(); ++b) {
      if (plan.batches[b].empty() || plan.batches[b].size() > B) fail("batch size out of range");
      if (b + 1 < plan.batches.size() && plan.batches[b].size() != B) fail("non-final batch under-full");
      for (auto i : plan.batches[b]) {
        ++seen[i];
        stream.push_back(i);
      }
    }
    for (int s : seen)
      if (s != 1) fail("records not partitioned");
    std::set<std::string> closed;
    for (std::size_t p = 0; p < stream.size(); ++p) {
      const auto& t = d.records()[stream[p]].text_id;
      if (closed.contains(t)) fail("text group not contiguous");
      if (p + 1 == stream.size() || d.records()[stream[p + 1]].text_id != t) closed.insert(t);
    }
    for (const auto& batch : plan.batches) {
      std::vector<std::string> texts;
      std::vector<int> labels;
      for (auto i : batch) {
        texts.push_back(d.records()[i].text_id);
        labels.push_back(d.records()[i].label);
      }
      const auto mt = text_match_mask(texts);
      const auto m = contrastive_masks(texts, labels);
      for (Eigen::Index i = 0; i < mt.rows(); ++i)
        for (Eigen::Index j = 0; j < mt.cols(); ++j) {
          const double off = i == j ? 0.0 : mt(i, j);
          if (m.positive(i, j) * m.negative(i, j) != 0.0) fail("masks overlap");
          if (m.positive(i, j) + m.negative(i, j) != off) fail("masks do not cover M_text - I");
        }
    }
  }
  return {failures == 0, std::to_string(cases) + " random plans, " + std::to_string(failures) + " violations" +
                             (first.empty() ? "" : " (first: " + first + ")")};
}

Outcome homophily_null() {
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t n = 400;
  SplitMix64 rng(5);
  Eigen::MatrixXd X(n, 8);
  for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = rng.uniform(-1.0, 1.0);
  std::vector<std::string> ids, cats;
  for (std::size_t i = 0; i < n; ++i) {
    ids.push_back("a" + std::to_string(1000 + i));
    cats.push_back(i % 2 ? "x" : "y");
  }
  const RepSpace space(ids, X, {"binary"}, {cats});
  BootstrapOptions opt{50, 1000, 11, Metric::cosine, std::max(1u, std::thread::hardware_concurrency())};
  const HomophilyRow row = bootstrap_homophily(space, "binary", opt);
  const double secs = seconds_since(t0);
  const double r = row.ratio.mean;
  return {r >= 0.9 && r <= 1.1 && std::abs(r - 1.0) <= 2.0 * row.ratio.std && secs < 60.0,
          "ratio " + fmt(r) + " +/- " + fmt(row.ratio.std) + ", " + fmt(secs, 2) + " s"};
}

Outcome homophily_signal() {
  const std::size_t n = 400;
  SplitMix64 rng(6);
  Eigen::MatrixXd X(n, 8);
  std::vector<std::string> ids, planted, other2, other3;
  for (std::size_t i = 0; i < n; ++i) {
    const bool a = rng.bernoulli(0.5);
    for (Eigen::Index d = 0; d < 8; ++d) X(static_cast<Eigen::Index>(i), d) = rng.normal();
    X(static_cast<Eigen::Index>(i), 0) += a ? 8.0 : -8.0;
    ids.push_back("a" + std::to_string(1000 + i));
    planted.push_back(a ? "p" : "q");
    other2.push_back(rng.bernoulli(0.5) ? "u" : "v");
    other3.push_back(std::to_string(rng.below(3)));
  }
  const RepSpace space(ids, X, {"planted", "other2", "other3"}, {planted, other2, other3});
  BootstrapOptions opt{50, 200, 12, Metric::cosine, std::max(1u, std::thread::hardware_concurrency())};
  const auto rows = bootstrap_all(space, opt);
  const double rp = rows[0].ratio.mean;
  const bool ordered = rp > rows[1].ratio.mean && rp > rows[2].ratio.mean;

  bool exact = true;
  for (std::size_t C = 2; C <= 7; ++C) {
    std::vector<std::string> id, cat;
    for (std::size_t i = 0; i < 420; ++i) {
      id.push_back(std::to_string(i));
      cat.push_back(std::to_string(i % C));
    }
    const RepSpace s(id, Eigen::MatrixXd::Ones(420, 2), {"c"}, {cat});
    exact = exact && chance_probability(s, "c") == 1.0 / static_cast<double>(C);
  }
  return {rp >= 1.5 && ordered && exact, "planted " + fmt(rp) + ", unplanted " + fmt(rows[1].ratio.mean) + " / " +
                                             fmt(rows[2].ratio.mean) + ", chance == 1/C for C=2..7: " +
                                             (exact ? "yes" : "no")};
}

/// Runs every pipeline command for a config copied into `work`.
PipelineConfig run_pipeline(const fs::path& config, const fs::path& work, bool dump_plan = false) {
  fs::remove_all(work);
  PipelineConfig cfg = load_config(config);
  cfg.output_dir = work;
  cfg.verbosity = 0;
  cfg.data = {};
  cfg.data.annotations = work / "synth/annotations.csv";
  cfg.data.profiles = work / "synth/profiles.csv";
  cfg.data.text_embeddings = work / "synth/text_embeddings.csv";
  cfg.data.socio_embeddings = work / "synth/socio_embeddings.csv";
  cfg.train.run.threads = cfg.homophily.bootstrap.threads = std::max(1u, std::thread::hardware_concurrency());
  Overrides ov;
  ov.dump_plan = dump_plan;
  Pipeline p(cfg, ov, nullptr);
  p.synth();
  p.prep();
  p.train();
  p.eval();
  p.homophily();
  p.report();
  return cfg;
}

std::map<std::string, double> f1_means(const fs::path& work) {
  const auto j = nlohmann::json::parse(io::read_file(work / "eval/metrics.json"));
  std::map<std::string, double> out;
  for (const auto& [name, v] : j.items()) out[name] = v["aggregate"]["f1"]["mean"].get<double>();
  return out;
}

/// Per-attribute homophily ratio averaged over the per-seed tables.
std::map<std::string, double> mean_ratios(const fs::path& work) {
  const auto j = nlohmann::json::parse(io::read_file(work / "homophily/homophily.json"));
  std::map<std::string, double> sum;
  std::size_t spaces = 0;
  for (const auto& [tag, v] : j.items()) {
    ++spaces;
    for (const auto& row : v["rows"]) sum[row["attribute"].get<std::string>()] += row["ratio"]["mean"].get<double>();
  }
  for (auto& [k, s] : sum) s /= static_cast<double>(spaces);
  return sum;
}

Outcome hypothesis() {
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path work = kWorkDir / "signal";
  const PipelineConfig cfg = run_pipeline(kSourceDir / "demo/configs/signal.json", work);
  const auto f1 = f1_means(work);
  const double secs = seconds_since(t0);
  const auto& s = *cfg.synth;
  double max_shift = 0.0;
  for (const auto& a : s.attributes)
    for (double x : a.shifts) max_shift = std::max(max_shift, std::abs(x));
  const bool protocol = s.text_count >= 200 && s.annotator_count >= 100 && max_shift >= 2.0 &&
                        cfg.train.run.seeds.size() == 6;
  const double sc = f1.at("socio_contrastive"), simple = f1.at("simple"), abl = f1.at(std::string(kAblationName));
  return {protocol && sc - simple >= 0.05 && sc > abl && secs < 600.0,
          "F1 socio_contrastive " + fmt(sc) + ", simple " + fmt(simple) + " (delta " + fmt(sc - simple) +
              "), ablation " + fmt(abl) + " (delta " + fmt(sc - abl) + "), " + fmt(secs, 1) + " s"};
}

Outcome metrics() {
  SplitMix64 rng(77);
  double worst_auc = 0.0, worst_area = 0.0;
  for (int c = 0; c < 1000; ++c) {
    const std::size_t n = 2 + rng.below(60);
    const double grid = static_cast<double>(1 + rng.below(20));
    std::vector<double> s;
    std::vector<int> y{0, 1};
    for (std::size_t i = 0; i < n; ++i) s.push_back(std::round(rng.uniform() * grid) / grid);
    for (std::size_t i = 2; i < n; ++i) y.push_back(static_cast<int>(rng.below(2)));
    const double auc = roc_auc(s, y);
    worst_auc = std::max(worst_auc, std::abs(auc - oracle::auc_pairs(s, y)));
    worst_area = std::max(worst_area, std::abs(trapezoid_area(roc_curve(s, y)) - auc));
  }
  const MetricsReport m = confusion_metrics(std::vector<double>{0.5, 0.5, 0.49, 0.51, 0.0, 1.0},
                                            std::vector<int>{1, 0, 1, 0, 0, 1});
  const bool boundary = m.tp == 2 && m.fp == 2 && m.fn == 1 && m.tn == 1 && m.precision == 0.5 &&
                        m.recall == 2.0 / 3.0 && std::abs(m.f1 - 4.0 / 7.0) < 1e-15;
  return {worst_auc <= 1e-9 && worst_area <= 1e-9 && boundary,
          "max |auc - pairs| " + sci(worst_auc) + ", max |area - auc| " + sci(worst_area) +
              ", boundary counts " + (boundary ? "ok" : "wrong")};
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) files[fs::relative(e.path(), root).generic_string()] = io::read_file(e.path());
  return files;
}

Outcome determinism() {
  const fs::path cfg_path = kWorkDir / "determinism.json";
  auto cfg = nlohmann::json::parse(io::read_file(kSourceDir / "demo/configs/signal.json"));
  cfg["train"]["seeds"] = {0, 1};
  cfg["homophily"]["iterations"] = 100;
  io::write_file(cfg_path, cfg.dump(2));
  run_pipeline(cfg_path, kWorkDir / "det_a", true);
  run_pipeline(cfg_path, kWorkDir / "det_b", true);
  const auto a = tree(kWorkDir / "det_a"), b = tree(kWorkDir / "det_b");
  std::size_t differing = a.size() == b.size() ? 0 : 1;
  std::string first;
  for (const auto& [name, bytes] : a) {
    auto it = b.find(name);
    if (it == b.end() || it->second != bytes) {
      if (first.empty()) first = name;
      ++differing;
    }
  }
  std::size_t plans = 0, checkpoints = 0;
  for (const auto& [name, bytes] : a) {
    plans += name.find("plan_epoch") != std::string::npos;
    checkpoints += name.find("checkpoint/") != std::string::npos;
  }
  const bool covered = a.contains("prep/train.csv") && a.contains("report/report.md") && plans > 0 && checkpoints > 0;
  return {differing == 0 && covered, std::to_string(a.size()) + " files compared (" + std::to_string(plans) +
                                         " plans, " + std::to_string(checkpoints) + " checkpoint files), " +
                                         std::to_string(differing) + " differ" +
                                         (first.empty() ? "" : " (first: " + first + ")")};
}

Outcome null_honesty() {
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path work = kWorkDir / "null";
  const PipelineConfig cfg = run_pipeline(kSourceDir / "demo/configs/null.json", work);
  bool zero_signal = true;
  for (const auto& a : cfg.synth->attributes)
    for (double x : a.shifts) zero_signal = zero_signal && x == 0.0;
  const auto ratios = mean_ratios(work);
  const auto f1 = f1_means(work);
  bool ratios_ok = !ratios.empty();
  std::string detail = "ratios";
  for (const auto& [attr, r] : ratios) {
    ratios_ok = ratios_ok && r >= 0.85 && r <= 1.15;
    detail += " " + attr + "=" + fmt(r, 3);
  }
  double worst_gain = -1.0;
  std::string worst_name;
  for (const auto& [name, v] : f1)
    if (name != "simple" && v - f1.at("simple") > worst_gain) {
      worst_gain = v - f1.at("simple");
      worst_name = name;
    }
  detail += "; largest F1 gain over simple " + fmt(worst_gain) + " (" + worst_name + "), " +
            fmt(seconds_since(t0), 1) + " s";
  return {zero_signal && ratios_ok && worst_gain <= 0.03, detail};
}

}  // namespace

int main() {
  fs::create_directories(kWorkDir);
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"1 contrastive loss matches pairwise oracle", contrastive_oracle},
      {"2 hand-computed anchors", hand_anchors},
      {"3 gradients match finite differences", gradients},
      {"4 batching invariants", batching},
      {"5 homophily null calibration", homophily_null},
      {"6 homophily signal detection", homophily_signal},
      {"7 contrastive beats simple and ablation on synth", hypothesis},
      {"8 metric correctness", metrics},
      {"9 determinism across pipeline runs", determinism},
      {"10 null-model honesty", null_honesty},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << "[" << name << "] " << o.detail << std::endl;
  }
  std::cout << (10 - failed) << "/10 criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
