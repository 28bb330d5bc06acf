#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace ncplr;

namespace {

FeatureSet labelled(RowMatrix f, std::vector<int> ids, std::vector<int> cams) {
    FeatureSet fs;
    fs.features = std::move(f);
    fs.true_ids = std::move(ids);
    fs.cam_ids = std::move(cams);
    return fs;
}

}  // namespace

TEST(Retrieval, PerfectSingleQuery) {
    RowMatrix q(1, 2), g(2, 2);
    q << 1, 0;
    g << 1, 0,  //
        0, 1;
    auto rep = cmc_map(labelled(q, {5}, {0}), labelled(g, {5, 6}, {1, 1}));
    EXPECT_EQ(rep.map, 1.0);
    EXPECT_EQ(rep.cmc[0], 1.0);
}

TEST(Retrieval, TrueMatchAtRankTwo) {
    RowMatrix q(1, 2), g(2, 2);
    q << 1, 0;
    g << 0.6, 0.8,  //
        1, 0;
    auto rep = cmc_map(labelled(q, {5}, {0}), labelled(g, {5, 6}, {1, 1}));
    EXPECT_DOUBLE_EQ(rep.map, 0.5);
    EXPECT_EQ(rep.cmc[0], 0.0);
    EXPECT_EQ(rep.cmc[1], 1.0);
}

TEST(Retrieval, SameCameraSameIdIsExcluded) {
    RowMatrix q(2, 2), g(2, 2);
    q << 1, 0,  //
        0, 1;
    g << 1, 0,  //
        0, 1;
    auto rep = cmc_map(labelled(q, {5, 6}, {0, 0}), labelled(g, {5, 6}, {0, 1}));
    EXPECT_EQ(rep.n_queries, 2u);
    EXPECT_EQ(rep.n_excluded_queries, 1u);
    EXPECT_EQ(rep.n_valid_queries, 1u);
    EXPECT_EQ(rep.map, 1.0);
}

TEST(Retrieval, MatchesDefinitionalOracle) {
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        std::mt19937_64 rng(seed);
        auto q = oracle::random_features(1 + seed % 20, 4, rng);
        auto g = oracle::random_features(5 + seed % 46, 4, rng);
        for (auto* fs : {&q, &g}) {
            fs->true_ids.resize(fs->n());
            fs->cam_ids.resize(fs->n());
            for (Index i = 0; i < fs->n(); ++i) {
                fs->true_ids[i] = static_cast<int>(rng() % 5);
                fs->cam_ids[i] = static_cast<int>(rng() % 2);
            }
        }
        auto rep = cmc_map(q, g);
        auto ref = oracle::retrieval(q, g);
        ASSERT_EQ(rep.n_valid_queries, ref.valid);
        EXPECT_NEAR(rep.map, ref.map, 1e-12) << "seed " << seed;
        for (Index r = 0; r < g.n(); ++r) EXPECT_NEAR(rep.cmc_curve[r], ref.cmc[r], 1e-12);
    }
}

TEST(Retrieval, CmcMonotoneAndBoundsMap) {
    std::mt19937_64 rng(3);
    auto fs = oracle::blob_features(80, 8, 8, 0.5, rng);
    for (Index i = 0; i < fs.n(); ++i) fs.cam_ids.push_back(static_cast<int>(i % 3));
    fs.true_ids.clear();
    for (Index i = 0; i < fs.n(); ++i) fs.true_ids.push_back(static_cast<int>(i % 8));
    auto [q, g] = query_gallery_split(fs);
    EXPECT_EQ(q.n(), 8u);
    auto rep = cmc_map(q, g);
    for (Index r = 1; r < rep.cmc_curve.size(); ++r) EXPECT_GE(rep.cmc_curve[r], rep.cmc_curve[r - 1]);
    EXPECT_LE(rep.map, rep.cmc_curve.back() + 1e-15);
}

TEST(ClusterQuality, PerfectAgreement) {
    auto pls = PseudoLabelSet::from_assignment({0, 0, 1, 1, 2});
    auto q = cluster_quality(pls, {7, 7, 3, 3, 9});
    ASSERT_TRUE(q);
    EXPECT_DOUBLE_EQ(q->ari, 1.0);
    EXPECT_DOUBLE_EQ(q->nmi, 1.0);
    EXPECT_DOUBLE_EQ(q->purity, 1.0);
}

TEST(ClusterQuality, OneBigClusterPurity) {
    std::vector<int> truth;
    for (int k = 0; k < 4; ++k) truth.insert(truth.end(), 5, k);
    auto q = cluster_quality(PseudoLabelSet::from_assignment(std::vector<int>(20, 0)), truth);
    ASSERT_TRUE(q);
    EXPECT_DOUBLE_EQ(q->purity, 0.25);
}

TEST(ClusterQuality, RandomAssignmentNearZeroAri) {
    std::mt19937_64 rng(12);
    std::vector<int> a(4000), b(4000);
    for (auto& v : a) v = static_cast<int>(rng() % 10);
    for (auto& v : b) v = static_cast<int>(rng() % 10);
    EXPECT_LT(std::abs(adjusted_rand_index(a, b)), 0.05);
}

TEST(ClusterQuality, AllOutliersIsAbsent) {
    EXPECT_FALSE(cluster_quality(PseudoLabelSet::from_assignment({-1, -1}), {0, 1}));
}

TEST(ClusterQuality, AriInvariantToRenaming) {
    std::mt19937_64 rng(13);
    std::vector<int> a(300), b(300);
    for (auto& v : a) v = static_cast<int>(rng() % 6);
    for (Index i = 0; i < b.size(); ++i) b[i] = rng() % 3 == 0 ? static_cast<int>(rng() % 6) : a[i];
    std::vector<int> perm{4, 0, 5, 2, 1, 3};
    std::vector<int> renamed(a.size());
    for (Index i = 0; i < a.size(); ++i) renamed[i] = perm[static_cast<Index>(a[i])];
    EXPECT_NEAR(adjusted_rand_index(a, b), adjusted_rand_index(renamed, b), 1e-14);
    EXPECT_NEAR(normalized_mutual_info(a, b), normalized_mutual_info(renamed, b), 1e-14);
}

TEST(NoiseRate, CountsFlips) {
    std::vector<int> truth{0, 0, 0, 0, 0, 1, 1, 1, 1, 1};
    auto pls = PseudoLabelSet::from_assignment(truth);
    EXPECT_EQ(noise_rate(truth, pls, truth), 0.0);
    std::vector<int> flipped = truth;
    flipped[0] = 1, flipped[1] = 1, flipped[7] = 0;
    EXPECT_DOUBLE_EQ(noise_rate(flipped, pls, truth), 0.3);
}

TEST(NoiseRate, SoftTargetsUseArgmax) {
    std::vector<int> truth{0, 0, 1, 1};
    auto pls = PseudoLabelSet::from_assignment(truth);
    RowMatrix t(4, 2);
    t << 0.6, 0.4,  //
        0.3, 0.7,   //
        0.2, 0.8,   //
        0.45, 0.55;
    EXPECT_DOUBLE_EQ(noise_rate(t, {0, 1, 2, 3}, pls, truth), 0.25);
    EXPECT_DOUBLE_EQ(noise_rate(t, {0, 1, 2, 3}, pls, truth), noise_rate(std::vector<int>{0, 1, 1, 1}, pls, truth));
}
