#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace ncplr;

namespace {

RowMatrix rows2(std::initializer_list<std::pair<double, double>> r) {
    RowMatrix m(static_cast<Eigen::Index>(r.size()), 2);
    Eigen::Index i = 0;
    for (auto [a, b] : r) {
        m(i, 0) = a;
        m(i, 1) = b;
        ++i;
    }
    return m;
}

Vector vec(std::initializer_list<double> v) {
    Vector out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) out(i++) = x;
    return out;
}

}  // namespace

TEST(NeighborWeights, FartherNeighbourGetsMoreMass) {
    AffinityGraph g;
    g.jaccard.resize(3, 3);
    g.jaccard << 0, 0.1, 0.3,  //
        0.1, 0, 0.5,           //
        0.3, 0.5, 0;
    Vector w = neighbor_weights(g, {1, 2}, 0, WeightStrategy::DistanceSoftmax, 0.05);
    EXPECT_NEAR(w(0), 0.0180, 5e-5);
    EXPECT_NEAR(w(1), 0.9820, 5e-5);
    EXPECT_NEAR(w(0), 1.0 / (1.0 + std::exp(4.0)), 1e-15);
    EXPECT_EQ(neighbor_weights(g, {1, 2}, 0, WeightStrategy::Average, 0.05), vec({0.5, 0.5}));
}

TEST(NeighborWeights, StrategyNamesRoundTrip) {
    for (auto s : {WeightStrategy::Average, WeightStrategy::DistanceSoftmax}) EXPECT_EQ(parse_weight_strategy(to_string(s)), s);
    EXPECT_THROW(parse_weight_strategy("nearest"), ConfigError);
}

TEST(RefineLabel, AlphaOneIsHardLabel) {
    Vector y = vec({0, 1, 0});
    RowMatrix p = RowMatrix::Constant(2, 3, 1.0 / 3.0);
    EXPECT_EQ(refine_label(y, p, vec({0.5, 0.5}), 1.0), y);
}

TEST(RefineLabel, AlphaZeroIsEnsemble) {
    EXPECT_EQ(refine_label(vec({1, 0}), rows2({{0.3, 0.7}}), vec({1.0}), 0.0), vec({0.3, 0.7}));
}

TEST(RefineLabel, HandExample) {
    Vector r = refine_label(vec({1, 0}), rows2({{0.6, 0.4}, {0.2, 0.8}}), vec({0.5, 0.5}), 0.5);
    EXPECT_NEAR(r(0), 0.7, 1e-15);
    EXPECT_NEAR(r(1), 0.3, 1e-15);
}

TEST(RefineLabel, EmptyNeighbourhoodKeepsHardLabel) {
    EXPECT_EQ(refine_label(vec({0, 1}), RowMatrix(0, 2), Vector(0), 0.2), vec({0, 1}));
}

TEST(RefineLabel, BadInputs) {
    EXPECT_THROW(refine_label(vec({1, 0}), rows2({{0.5, 0.5}}), vec({1.0}), 1.2), ConfigError);
    EXPECT_THROW(refine_label(vec({1, 0, 0}), rows2({{0.5, 0.5}}), vec({1.0}), 0.2), UsageError);
    EXPECT_THROW(refine_label(vec({1, 0}), rows2({{0.5, 0.5}}), vec({0.5, 0.5}), 0.2), UsageError);
}

TEST(RefineLabel, AgreeingNeighboursLeaveLabelExact) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Vector y = vec({0, 0, 1, 0});
    RowMatrix p = y.transpose().replicate(5, 1);
    for (int t = 0; t < 50; ++t) {
        Vector w = oracle::random_simplex_rows(1, 5, rng).row(0).transpose();
        EXPECT_EQ(refine_label(y, p, w, u(rng)), y);
    }
}

TEST(RefineLabel, ArgmaxGuardAboveHalf) {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.5000001, 1.0);
    for (int t = 0; t < 2000; ++t) {
        const Index k = 2 + rng() % 6;
        Vector y = Vector::Zero(static_cast<Eigen::Index>(k));
        y(static_cast<Eigen::Index>(rng() % k)) = 1.0;
        RowMatrix p = oracle::random_simplex_rows(1 + rng() % 6, k, rng);
        Vector w = oracle::random_simplex_rows(1, static_cast<Index>(p.rows()), rng).row(0).transpose();
        ASSERT_EQ(argmax(refine_label(y, p, w, u(rng))), argmax(y));
    }
}

TEST(RefineAll, IsolatedInstancesKeepOneHot) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.05, 1.0);
    AffinityGraph g;
    g.jaccard = RowMatrix::Zero(12, 12);
    for (Eigen::Index i = 0; i < 12; ++i) {
        for (Eigen::Index j = i + 1; j < 12; ++j) g.jaccard(i, j) = g.jaccard(j, i) = u(rng);
    }
    auto pls = PseudoLabelSet::from_assignment({0, 0, 0, 1, 1, 1, -1, 2, 2, 2, 2, -1});
    auto bank = PredictionBank::from_labels(pls);
    bank.student = oracle::random_simplex_rows(pls.n(), pls.num_clusters, rng);
    RefineConfig cfg;
    cfg.rho = 1e-12;
    auto out = refine_all(pls, bank, g, cfg);
    ASSERT_EQ(out.rows.size(), 10u);
    for (Index r = 0; r < out.rows.size(); ++r) EXPECT_EQ(Vector(out.targets.row(static_cast<Eigen::Index>(r)).transpose()), one_hot(pls, out.rows[r]));
}

TEST(RefineAll, RowsStayOnSimplex) {
    std::mt19937_64 rng(4);
    auto fs = oracle::blob_features(60, 8, 4, 0.35, rng);
    auto g = build_affinity_graph(fs, 10);
    auto pls = dbscan(g, 0.6, 3);
    ASSERT_GT(pls.num_clusters, 0u);
    auto bank = PredictionBank::from_labels(pls);
    for (double rho : {0.2, 0.6, 1.0}) {
        for (auto s : {WeightStrategy::Average, WeightStrategy::DistanceSoftmax}) {
            auto out = refine_all(pls, bank, g, RefineConfig{0.3, rho, s, 0.05});
            for (Eigen::Index r = 0; r < out.targets.rows(); ++r) EXPECT_TRUE(on_simplex(out.targets.row(r).transpose()));
        }
    }
}

TEST(RefineAll, StaleBankRejected) {
    auto pls = PseudoLabelSet::from_assignment({0, 0, 1, 1});
    auto other = PseudoLabelSet::from_assignment({0, 0, 0, 0});
    AffinityGraph g;
    g.jaccard = RowMatrix::Zero(4, 4);
    EXPECT_THROW(refine_all(pls, PredictionBank::from_labels(other), g, RefineConfig{}), StalenessError);
}

TEST(RefineAll, SixPointStraightLineRecomputation) {
    // Graph and labels fixed by hand; the reference walks the definitions
    // with plain loops.
    AffinityGraph g;
    g.jaccard.resize(6, 6);
    g.jaccard << 0.00, 0.10, 0.15, 0.90, 0.95, 0.50,  //
        0.10, 0.00, 0.05, 0.80, 0.90, 0.60,           //
        0.15, 0.05, 0.00, 0.12, 0.85, 0.70,           //
        0.90, 0.80, 0.12, 0.00, 0.08, 0.18,           //
        0.95, 0.90, 0.85, 0.08, 0.00, 0.30,           //
        0.50, 0.60, 0.70, 0.18, 0.30, 0.00;
    auto pls = PseudoLabelSet::from_assignment({0, 0, 0, 1, 1, -1});
    auto bank = PredictionBank::from_labels(pls);
    bank.student = rows2({{0.9, 0.1}, {0.7, 0.3}, {0.4, 0.6}, {0.2, 0.8}, {0.3, 0.7}, {0.5, 0.5}});
    for (auto strategy : {WeightStrategy::Average, WeightStrategy::DistanceSoftmax}) {
        RefineConfig cfg{0.2, 0.2, strategy, 0.05};
        auto out = refine_all(pls, bank, g, cfg);
        ASSERT_EQ(out.rows, (std::vector<Index>{0, 1, 2, 3, 4}));
        for (Index i = 0; i < 5; ++i) {
            std::vector<Index> nb;
            for (Index j = 0; j < 5; ++j) {
                if (j != i && g(i, j) < 0.2) nb.push_back(j);
            }
            double y[2] = {0, 0};
            y[pls.assignment[i]] = 1.0;
            double w_sum = 0.0;
            std::vector<double> w;
            for (Index j : nb) {
                w.push_back(strategy == WeightStrategy::Average ? 1.0 : std::exp(g(i, j) / 0.05));
                w_sum += w.back();
            }
            for (int k = 0; k < 2; ++k) {
                double ens = 0.0;
                for (Index r = 0; r < nb.size(); ++r) ens += w[r] / w_sum * bank.student(static_cast<Eigen::Index>(nb[r]), k);
                double expected = nb.empty() ? y[k] : 0.2 * y[k] + 0.8 * ens;
                EXPECT_NEAR(out.targets(static_cast<Eigen::Index>(i), k), expected, 1e-12) << "i=" << i << " k=" << k;
            }
        }
    }
}

TEST(RefineAll, CorrectsFlippedLabelsOnCleanGraph) {
    SyntheticSpec spec;
    spec.num_ids = 10;
    spec.points_per_id = 15;
    spec.dim = 16;
    spec.intra_std = 0.08;
    spec.seed = 5;
    auto fs = generate_synthetic(spec);
    auto g = build_affinity_graph(fs, 15);
    std::mt19937_64 rng(9);
    std::vector<int> noisy = fs.true_ids;
    for (Index i = 0; i < noisy.size(); ++i) {
        if (rng() % 5 == 0) noisy[i] = static_cast<int>((noisy[i] + 1 + rng() % 9) % 10);
    }
    // Rows are grouped by identity, so relabelling the truth is the identity map.
    auto truth = PseudoLabelSet::from_assignment(fs.true_ids);
    ASSERT_EQ(truth.assignment, fs.true_ids);
    PseudoLabelSet pls = truth;
    pls.assignment = noisy;
    auto bank = PredictionBank::from_labels(truth);
    auto out = refine_all(pls, bank, g, RefineConfig{0.2, 0.2, WeightStrategy::Average, 0.05});
    const double hard = noise_rate(pls.assignment, truth, fs.true_ids);
    const double refined = noise_rate(out.targets, out.rows, truth, fs.true_ids);
    EXPECT_GT(hard, 0.1);
    EXPECT_LT(refined, hard);
}

TEST(Entropy, KnownValues) {
    EXPECT_EQ(entropy(Eigen::RowVector2d(1, 0)), 0.0);
    EXPECT_NEAR(entropy(Eigen::RowVector2d(0.5, 0.5)), std::log(2.0), 1e-15);
}
