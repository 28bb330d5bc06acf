#pragma once

// k-reciprocal neighbour sets and the Jaccard affinity graph.

#include "ncplr/common.hpp"
#include "ncplr/data.hpp"

#include <numeric>
#include <ostream>
#include <vector>

namespace ncplr {

enum class BaseMetric { CosineDistance };

/// Per-instance kappa-nearest lists. lists[i][0] == i.
struct NeighborLists {
    std::vector<std::vector<Index>> lists;
    Index k = 0;
    BaseMetric base_metric = BaseMetric::CosineDistance;
};

/// Per-instance reciprocal sets, each sorted by index and containing the instance.
struct ReciprocalSets {
    std::vector<std::vector<Index>> sets;
};

/// Dense symmetric Jaccard distance matrix with zero diagonal.
struct AffinityGraph {
    RowMatrix jaccard;
    Index kappa = 0;

    Index n() const { return static_cast<Index>(jaccard.rows()); }
    double operator()(Index i, Index j) const {
        return jaccard(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
};

/// Per-instance inclusion flags.
using InlierMask = std::vector<bool>;

inline double cosine_distance(const FeatureSet& fs, Index i, Index j) {
    return 1.0 - fs.features.row(static_cast<Eigen::Index>(i)).dot(fs.features.row(static_cast<Eigen::Index>(j)));
}

inline NeighborLists compute_knn(const FeatureSet& fs, Index kappa) {
    const Index n = fs.n();
    if (kappa < 1) throw ConfigError("kappa must be >= 1");
    if (kappa > n) throw ConfigError("kappa (" + std::to_string(kappa) + ") exceeds N (" + std::to_string(n) + ")");

    NeighborLists nl;
    nl.k = kappa;
    nl.lists.resize(n);
    parallel_for(n, [&](Index i) {
        std::vector<std::pair<double, Index>> cand;
        cand.reserve(n - 1);
        for (Index j = 0; j < n; ++j) {
            if (j != i) cand.emplace_back(cosine_distance(fs, i, j), j);
        }
        const Index take = kappa - 1;
        std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(take), cand.end());
        auto& list = nl.lists[i];
        list.reserve(kappa);
        list.push_back(i);
        for (Index r = 0; r < take; ++r) list.push_back(cand[r].second);
    });
    return nl;
}

inline ReciprocalSets reciprocal_sets(const NeighborLists& nl) {
    const Index n = nl.lists.size();
    // member[i] marks ℕ(i); built once so membership tests are O(1).
    std::vector<std::vector<bool>> member(n, std::vector<bool>(n, false));
    for (Index i = 0; i < n; ++i) {
        if (nl.lists[i].empty() || nl.lists[i].front() != i) {
            throw UsageError("neighbour list " + std::to_string(i) + " does not start with its own index");
        }
        for (Index j : nl.lists[i]) {
            if (j >= n) throw UsageError("neighbour index out of range");
            member[i][j] = true;
        }
    }
    ReciprocalSets rs;
    rs.sets.resize(n);
    for (Index i = 0; i < n; ++i) {
        for (Index j : nl.lists[i]) {
            if (member[j][i]) rs.sets[i].push_back(j);
        }
        std::sort(rs.sets[i].begin(), rs.sets[i].end());
    }
    return rs;
}

inline double jaccard_from_counts(Index intersection, Index size_a, Index size_b) {
    const Index uni = size_a + size_b - intersection;
    return 1.0 - static_cast<double>(intersection) / static_cast<double>(uni);
}

inline double jaccard_distance(const ReciprocalSets& rs, Index i, Index j) {
    if (i >= rs.sets.size() || j >= rs.sets.size()) throw UsageError("jaccard_distance index out of range");
    const auto& a = rs.sets[i];
    const auto& b = rs.sets[j];
    Index inter = 0;
    for (auto ia = a.begin(), ib = b.begin(); ia != a.end() && ib != b.end();) {
        if (*ia < *ib) {
            ++ia;
        } else if (*ib < *ia) {
            ++ib;
        } else {
            ++inter, ++ia, ++ib;
        }
    }
    if (a.empty() && b.empty()) return 0.0;
    return jaccard_from_counts(inter, a.size(), b.size());
}

/// Full N×N Jaccard matrix. Intersections are accumulated through an
/// inverted index (instance -> sets containing it), so pairs that share no
/// member are never visited and stay at distance 1.
inline AffinityGraph build_affinity_graph(const ReciprocalSets& rs, Index kappa) {
    const Index n = rs.sets.size();
    std::vector<std::vector<Index>> containing(n);
    for (Index i = 0; i < n; ++i) {
        for (Index m : rs.sets[i]) containing[m].push_back(i);
    }
    AffinityGraph g;
    g.kappa = kappa;
    g.jaccard = RowMatrix::Ones(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    parallel_for(n, [&](Index i) {
        std::vector<Index> inter(n, 0);
        for (Index m : rs.sets[i]) {
            for (Index j : containing[m]) ++inter[j];
        }
        for (Index j = 0; j < n; ++j) {
            if (inter[j] > 0) {
                g.jaccard(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                    jaccard_from_counts(inter[j], rs.sets[i].size(), rs.sets[j].size());
            }
        }
    });
    return g;
}

inline AffinityGraph build_affinity_graph(const FeatureSet& fs, Index kappa) {
    return build_affinity_graph(reciprocal_sets(compute_knn(fs, kappa)), kappa);
}

/// Inliers j != i with G[i,j] < rho, ascending by distance then index.
inline std::vector<Index> neighborhood(const AffinityGraph& g, Index i, double rho, const InlierMask& mask) {
    if (!(rho > 0.0 && rho <= 1.0)) throw ConfigError("rho must lie in (0, 1]");
    if (mask.size() != g.n()) throw UsageError("mask length differs from graph size");
    if (i >= g.n() || !mask[i]) throw UsageError("anchor " + std::to_string(i) + " is not an inlier");
    std::vector<Index> out;
    for (Index j = 0; j < g.n(); ++j) {
        if (j != i && mask[j] && g(i, j) < rho) out.push_back(j);
    }
    std::stable_sort(out.begin(), out.end(), [&](Index a, Index b) { return g(i, a) < g(i, b); });
    return out;
}

/// Neighbourhoods for every inlier; outliers get an empty list.
inline std::vector<std::vector<Index>> all_neighborhoods(const AffinityGraph& g, double rho, const InlierMask& mask) {
    std::vector<std::vector<Index>> out(g.n());
    parallel_for(g.n(), [&](Index i) {
        if (mask[i]) out[i] = neighborhood(g, i, rho, mask);
    });
    return out;
}

/// CSV dump `i,j,d_jaccard` of the upper triangle entries below 1.
inline void write_graph_csv(const AffinityGraph& g, std::ostream& out) {
    out << "i,j,d_jaccard\n";
    for (Index i = 0; i < g.n(); ++i) {
        for (Index j = i + 1; j < g.n(); ++j) {
            if (g(i, j) < 1.0) out << i << ',' << j << ',' << format_double(g(i, j)) << '\n';
        }
    }
}

}  // namespace ncplr
