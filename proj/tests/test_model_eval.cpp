#include <gtest/gtest.h>

#include <cmath>

#include "fixtures.hpp"
#include "oracles.hpp"

using namespace persp;

class GradientCheck : public ::testing::TestWithParam<Variant> {};

TEST_P(GradientCheck, BackpropMatchesCentralDifferences) {
  for (std::uint64_t seed : {1u, 2u, 3u}) EXPECT_LT(fixture::gradient_error(GetParam(), seed), 1e-4) << seed;
}

INSTANTIATE_TEST_SUITE_P(AllVariants, GradientCheck, ::testing::ValuesIn(kAllVariants),
                         [](const auto& info) { return std::string(to_string(info.param)); });

TEST(Model, ContrastivePathReachesProjectionLayers) {
  fixture::GradProblem g = fixture::grad_problem(Variant::socio_contrastive, 4);
  ASSERT_GT(contrastive_masks(g.batch).positive.sum() + contrastive_masks(g.batch).negative.sum(), 0.0);
  const auto with = loss_and_gradients(g.spec, g.params, g.batch, g.dropout_seed);
  g.spec.contrastive_weight = 0.0;
  const auto without = loss_and_gradients(g.spec, g.params, g.batch, g.dropout_seed);
  EXPECT_GT((with.grads[0].weight - without.grads[0].weight).norm(), 0.0);
  EXPECT_GT(without.loss.contrastive_pos + without.loss.contrastive_neg, 0.0);
  EXPECT_DOUBLE_EQ(without.loss.total, without.loss.classification);
}

TEST(Model, AblationArmDivergesOnlyAfterTheFirstStep) {
  const auto data = generate_all(fixture::small_population(11));
  const SplitPair split = split_by_text(data.dataset, 0.7, 0);
  const TrainingInputs in{&split, &data.corpus.embeddings, &data.population.schema, &data.population.profiles,
                          nullptr};
  RunConfig run;
  run.seeds = {0};
  run.epochs = 1;
  run.spec = fixture::tiny_spec(Variant::socio_contrastive);
  const RunEntry with = train_one(run, 0, in);
  run.spec.contrastive_weight = 0.0;
  const RunEntry without = train_one(run, 0, in);
  EXPECT_EQ(with.log[0].loss.classification, without.log[0].loss.classification);
  EXPECT_EQ(with.plans, without.plans);
  EXPECT_NE(with.log[1].loss.classification, without.log[1].loss.classification);
  EXPECT_GT(without.log[0].loss.contrastive_pos + without.log[0].loss.contrastive_neg, 0.0);
}

TEST(Model, EvalModeIsDeterministicAndDropoutFree) {
  fixture::GradProblem g = fixture::grad_problem(Variant::socio_multihot, 5);
  const auto a = forward(g.spec, g.params, g.batch, Mode::eval, 1);
  const auto b = forward(g.spec, g.params, g.batch, Mode::eval, 2);
  EXPECT_EQ(a.probs, b.probs);
  const auto c = forward(g.spec, g.params, g.batch, Mode::train, 1);
  const auto d = forward(g.spec, g.params, g.batch, Mode::train, 2);
  EXPECT_NE(c.probs, d.probs);
}

TEST(Model, MultitaskUnknownAnnotator) {
  fixture::GradProblem g = fixture::grad_problem(Variant::multitask, 6);
  g.batch.annotator_ids[0] = "nobody";
  EXPECT_THROW(forward(g.spec, g.params, g.batch, Mode::train, 0), DataError);
  const auto r = forward(g.spec, g.params, g.batch, Mode::eval, 0);
  EXPECT_LT(r.trace.heads[0], 0);
  EXPECT_TRUE(std::isfinite(r.probs[0]));
}

TEST(Model, IdenticalProfilesGiveIdenticalRepresentations) {
  fixture::GradProblem g = fixture::grad_problem(Variant::socio_contrastive, 7);
  ProfileMap twins{{"x", {"x", {{"gender", "m"}, {"age", "o"}}}}, {"y", {"y", {{"gender", "m"}, {"age", "o"}}}}};
  const EmbeddingTable reps = extract_socio_reps(g.spec, g.params, twins, g.data.population.schema);
  EXPECT_TRUE(std::ranges::equal(reps.at("x"), reps.at("y")));
  g.spec.variant = Variant::socio_multihot;
  EXPECT_THROW(extract_socio_reps(g.spec, g.params, twins, g.data.population.schema), ConfigError);
}

TEST(Model, AdamRejectsNonFiniteGradients) {
  fixture::GradProblem g = fixture::grad_problem(Variant::simple, 8);
  auto grads = zeros_like(g.params.layers);
  grads[0].weight(0, 0) = std::nan("");
  EXPECT_THROW(adam_step(g.params, grads), NumericError);
}

TEST(Model, CheckpointRoundTripIsExact) {
  fixture::GradProblem g = fixture::grad_problem(Variant::multitask, 9);
  const auto dir = fixture::scratch("ckpt");
  save_checkpoint(dir, g.spec, g.params, 9);
  const Checkpoint back = load_checkpoint(dir);
  EXPECT_EQ(back.seed, 9u);
  EXPECT_EQ(back.params.layers, g.params.layers);
  EXPECT_EQ(back.params.head_annotators, g.params.head_annotators);
  EXPECT_EQ(back.spec.to_json(), g.spec.to_json());
  EXPECT_THROW(load_checkpoint(dir / "missing"), DataError);
}

TEST(Eval, ThresholdBoundaryIsPositive) {
  const MetricsReport m = confusion_metrics(std::vector<double>{0.5, 0.4999, 0.5, 0.9},
                                            std::vector<int>{1, 1, 0, 1});
  EXPECT_EQ(m.tp, 2u);
  EXPECT_EQ(m.fn, 1u);
  EXPECT_EQ(m.fp, 1u);
  EXPECT_EQ(m.tn, 0u);
  EXPECT_DOUBLE_EQ(m.precision, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(m.recall, 2.0 / 3.0);
}

TEST(Eval, NoPredictedPositivesFlagsPrecision) {
  const MetricsReport m = confusion_metrics(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 0});
  EXPECT_TRUE(m.precision_undefined);
  EXPECT_EQ(m.f1, 0.0);
  EXPECT_THROW(confusion_metrics(std::vector<double>{}, std::vector<int>{}), DataError);
}

TEST(Eval, AucMatchesPairCounting) {
  SplitMix64 rng(10);
  for (int c = 0; c < 100; ++c) {
    std::vector<double> s;
    std::vector<int> y{0, 1};
    for (int i = 0; i < 30; ++i) s.push_back(std::round(rng.uniform() * 10.0) / 10.0);
    for (int i = 2; i < 30; ++i) y.push_back(static_cast<int>(rng.below(2)));
    EXPECT_NEAR(roc_auc(s, y), oracle::auc_pairs(s, y), 1e-12);
    EXPECT_NEAR(trapezoid_area(roc_curve(s, y)), roc_auc(s, y), 1e-12);
  }
}

TEST(Eval, AucEdgeCases) {
  EXPECT_DOUBLE_EQ(roc_auc(std::vector<double>{0.3, 0.3, 0.3}, std::vector<int>{1, 0, 1}), 0.5);
  EXPECT_DOUBLE_EQ(roc_auc(std::vector<double>{0.1, 0.9}, std::vector<int>{0, 1}), 1.0);
  EXPECT_THROW(roc_auc(std::vector<double>{0.1, 0.9}, std::vector<int>{1, 1}), NumericError);
  const auto curve = roc_curve(std::vector<double>{0.1, 0.9}, std::vector<int>{0, 1});
  EXPECT_TRUE(std::isinf(curve.front().threshold));
  EXPECT_EQ(curve.back().fpr, 1.0);
  EXPECT_EQ(curve.back().tpr, 1.0);
}

TEST(Eval, MeanStdIsPopulation) {
  const MeanStd m = mean_std(std::vector<double>{1.0, 3.0});
  EXPECT_DOUBLE_EQ(m.mean, 2.0);
  EXPECT_DOUBLE_EQ(m.std, 1.0);
}

TEST(Eval, GroupBreakdownSlicesByCategory) {
  const ProfileMap p = parse_profiles("annotator_id,gender\na,m\nb,w\nc,\n");
  const SocioSchema s = build_schema(p);
  const std::vector<std::string> ids{"a", "a", "b", "c"};
  const auto groups = group_breakdown(std::vector<double>{0.9, 0.1, 0.9, 0.2}, std::vector<int>{1, 0, 0, 1}, ids, p, s);
  ASSERT_EQ(groups.size(), 1u);
  ASSERT_EQ(groups[0].categories.size(), 3u);
  EXPECT_EQ(groups[0].categories[0].category, "m");
  EXPECT_DOUBLE_EQ(groups[0].categories[0].metrics.f1, 1.0);
  EXPECT_EQ(groups[0].categories[1].metrics.fp, 1u);
  EXPECT_EQ(groups[0].categories[2].category, kMissingCategory);
}
