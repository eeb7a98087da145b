// In-memory walk through the library: synthesize annotators with one
// attribute that moves their labels, train the contrastive variant and a
// text-only baseline for one seed, then check which attribute the learned
// annotator vectors cluster by.

#include <iostream>

#include "persp.hpp"

int main() {
  using namespace persp;

  PopulationSpec pop;
  pop.annotator_count = 80;
  pop.text_count = 200;
  pop.latent_mean = -1.0;
  pop.attributes = {{"gender", {"man", "woman"}, {0.5, 0.5}, {0.0, 2.0}},
                    {"age", {"young", "old"}, {0.5, 0.5}, {}}};
  const SynthBundle data = generate_all(pop);

  const SplitPair split = split_by_text(data.dataset, 0.7, 0);
  const TrainingInputs in{&split, &data.corpus.embeddings, &data.population.schema, &data.population.profiles,
                          &data.socio_embeddings};

  RunConfig run;
  run.seeds = {0};
  run.spec.hidden_dims = {64, 32};
  for (Variant v : {Variant::simple, Variant::socio_contrastive}) {
    run.spec.variant = v;
    const RunResult r = train_suite(run, in);
    std::cout << to_string(v) << ": F1 " << io::format_fixed(r.aggregate.f1.mean) << "\n";
    if (v != Variant::socio_contrastive) continue;

    const RunEntry& e = r.runs.front();
    const EmbeddingTable reps = extract_socio_reps(e.spec, e.params, data.population.profiles, data.population.schema);
    const RepSpace space = RepSpace::from_tables(reps, data.population.profiles, {"gender", "age"});
    for (const char* attr : {"gender", "age"})
      std::cout << "  homophily ratio (" << attr << "): "
                << io::format_fixed(homophily_ratio(space, attr, 10)) << "\n";
  }
}
