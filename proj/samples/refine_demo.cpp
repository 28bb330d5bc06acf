// Flip a fifth of the labels on a synthetic set and show how much of the
// damage one refinement pass undoes.

#include "ncplr/ncplr.hpp"

#include <iostream>
#include <random>

int main() {
    using namespace ncplr;
    SyntheticSpec spec;
    spec.num_ids = 12;
    spec.points_per_id = 15;
    spec.dim = 32;
    spec.intra_std = 0.1;
    spec.seed = 42;
    FeatureSet data = generate_synthetic(spec);

    auto truth = PseudoLabelSet::from_assignment(data.true_ids);
    PseudoLabelSet noisy = truth;
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<int> other(1, static_cast<int>(spec.num_ids) - 1);
    for (int& a : noisy.assignment) {
        if (rng() % 5 == 0) a = (a + other(rng)) % static_cast<int>(spec.num_ids);
    }

    AffinityGraph g = build_affinity_graph(data, 30);
    RefineConfig cfg;
    cfg.strategy = WeightStrategy::Average;
    auto refined = refine_all(noisy, PredictionBank::from_labels(truth), g, cfg);

    std::cout << "hard-label noise    " << noise_rate(noisy.assignment, truth, data.true_ids) << '\n';
    std::cout << "refined-label noise " << noise_rate(refined.targets, refined.rows, truth, data.true_ids) << '\n';
    return 0;
}
