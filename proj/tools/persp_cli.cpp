// persp: prep | train | eval | homophily | synth | report

#include <exception>
#include <iostream>

#include <CLI11.hpp>

#include "persp.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Perspective modeling with socio-demographic representations"};
  app.require_subcommand(1, 1);

  std::string config_path;
  persp::Overrides ov;
  std::uint64_t seed = 0;
  double lambda = 0.0;
  unsigned threads = 1;
  std::string variant, reps;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "pipeline config (JSON)")->required();
    sub->add_option("--seed", seed, "override the seed for this command");
  };

  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  auto* prep = app.add_subcommand("prep", "binarize, filter and split annotations");
  auto* train = app.add_subcommand("train", "train model variants over seeds");
  auto* eval = app.add_subcommand("eval", "evaluate checkpoints on the test split");
  auto* homophily = app.add_subcommand("homophily", "homophily of learned socio representations");
  auto* report = app.add_subcommand("report", "assemble report.md from earlier outputs");
  for (auto* sub : {synth, prep, train, eval, homophily, report}) add_common(sub);
  for (auto* sub : {train, eval}) sub->add_option("--variant", variant, "a single variant, or 'ablation'");
  train->add_option("--lambda", lambda, "contrastive weight");
  for (auto* sub : {train, homophily}) sub->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
  train->add_flag("--dump-plan", ov.dump_plan, "write each epoch's batch plan as JSON");
  homophily->add_option("--reps", reps, "analyse this representation CSV instead of checkpoints");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  for (auto* sub : app.get_subcommands()) {
    if (sub->count("--seed")) ov.seed = seed;
    if (sub->get_option_no_throw("--lambda") && sub->count("--lambda")) ov.lambda = lambda;
    if (sub->get_option_no_throw("--threads") && sub->count("--threads")) ov.threads = threads;
    if (sub->get_option_no_throw("--variant") && sub->count("--variant")) ov.variant = variant;
  }
  ov.reps = reps;

  try {
    persp::Pipeline pipe(persp::load_config(config_path), ov);
    if (*synth) pipe.synth();
    else if (*prep) pipe.prep();
    else if (*train) pipe.train();
    else if (*eval) pipe.eval();
    else if (*homophily) pipe.homophily();
    else if (*report) pipe.report();
  } catch (const persp::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
