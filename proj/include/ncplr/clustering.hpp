#pragma once

// DBSCAN over the Jaccard graph -> pseudo labels, and memory-bank init.

#include "ncplr/common.hpp"
#include "ncplr/data.hpp"
#include "ncplr/graph.hpp"
#include "ncplr/losses.hpp"

#include <deque>
#include <map>
#include <ostream>
#include <vector>

namespace ncplr {

struct PseudoLabelSet {
    std::vector<int> assignment;  // cluster id or -1
    Index num_clusters = 0;
    std::vector<Index> inliers;   // ascending

    Index n() const { return assignment.size(); }
    Index n_clustered() const { return inliers.size(); }
    bool is_inlier(Index i) const { return assignment[i] >= 0; }

    InlierMask mask() const {
        InlierMask m(assignment.size());
        for (Index i = 0; i < assignment.size(); ++i) m[i] = assignment[i] >= 0;
        return m;
    }

    std::vector<std::vector<Index>> members() const {
        std::vector<std::vector<Index>> out(num_clusters);
        for (Index i : inliers) out[static_cast<Index>(assignment[i])].push_back(i);
        return out;
    }

    /// Builds the set from raw ids, relabelling them contiguously in order of
    /// first appearance. Negative ids become outliers.
    static PseudoLabelSet from_assignment(std::vector<int> raw) {
        PseudoLabelSet pls;
        std::map<int, int> relabel;
        for (int& v : raw) {
            if (v < 0) {
                v = -1;
                continue;
            }
            auto [it, inserted] = relabel.emplace(v, static_cast<int>(relabel.size()));
            v = it->second;
        }
        pls.assignment = std::move(raw);
        pls.num_clusters = relabel.size();
        for (Index i = 0; i < pls.assignment.size(); ++i) {
            if (pls.assignment[i] >= 0) pls.inliers.push_back(i);
        }
        return pls;
    }
};

/// DBSCAN with `G[i,j] <= eps` as the region predicate. Core points have at
/// least `min_samples` neighbours counting themselves. Clusters are numbered
/// by their lowest core index; a border point joins the first (lowest-id)
/// cluster that reaches it.
inline PseudoLabelSet dbscan(const AffinityGraph& g, double eps, Index min_samples) {
    if (!(eps > 0.0 && eps <= 1.0)) throw ConfigError("eps must lie in (0, 1]");
    if (min_samples < 1) throw ConfigError("min_samples must be >= 1");
    const Index n = g.n();

    std::vector<std::vector<Index>> region(n);
    parallel_for(n, [&](Index i) {
        for (Index j = 0; j < n; ++j) {
            if (g(i, j) <= eps) region[i].push_back(j);
        }
    });
    std::vector<bool> core(n);
    for (Index i = 0; i < n; ++i) core[i] = region[i].size() >= min_samples;

    PseudoLabelSet pls;
    pls.assignment.assign(n, -1);
    int next_id = 0;
    for (Index seed = 0; seed < n; ++seed) {
        if (!core[seed] || pls.assignment[seed] >= 0) continue;
        const int id = next_id++;
        std::deque<Index> frontier{seed};
        pls.assignment[seed] = id;
        while (!frontier.empty()) {
            Index p = frontier.front();
            frontier.pop_front();
            for (Index q : region[p]) {
                if (pls.assignment[q] >= 0) continue;
                pls.assignment[q] = id;
                if (core[q]) frontier.push_back(q);
            }
        }
    }
    pls.num_clusters = static_cast<Index>(next_id);
    for (Index i = 0; i < n; ++i) {
        if (pls.assignment[i] >= 0) pls.inliers.push_back(i);
    }
    return pls;
}

inline Vector one_hot(const PseudoLabelSet& pls, Index i) {
    if (i >= pls.n() || pls.assignment[i] < 0) throw UsageError("one_hot: instance " + std::to_string(i) + " is an outlier");
    Vector v = Vector::Zero(static_cast<Eigen::Index>(pls.num_clusters));
    v(pls.assignment[i]) = 1.0;
    return v;
}

/// Centroid per cluster: mean of member rows, re-normalized.
inline MemoryBank init_memory_bank(const RowMatrix& embeddings, const PseudoLabelSet& pls, double gamma = 0.9,
                                   double tau = 0.05) {
    if (static_cast<Index>(embeddings.rows()) != pls.n()) throw UsageError("init_memory_bank: row count differs from labels");
    MemoryBank bank;
    bank.gamma = gamma;
    bank.tau = tau;
    bank.centroids = RowMatrix::Zero(static_cast<Eigen::Index>(pls.num_clusters), embeddings.cols());
    std::vector<Index> counts(pls.num_clusters, 0);
    for (Index i : pls.inliers) {
        bank.centroids.row(pls.assignment[i]) += embeddings.row(static_cast<Eigen::Index>(i));
        ++counts[static_cast<Index>(pls.assignment[i])];
    }
    for (Index k = 0; k < pls.num_clusters; ++k) {
        if (counts[k] == 0) throw UsageError("init_memory_bank: cluster " + std::to_string(k) + " is empty");
        bank.centroids.row(static_cast<Eigen::Index>(k)) /= static_cast<double>(counts[k]);
    }
    normalize_rows(bank.centroids);
    return bank;
}

inline MemoryBank init_memory_bank(const FeatureSet& fs, const PseudoLabelSet& pls, double gamma = 0.9, double tau = 0.05) {
    return init_memory_bank(fs.features, pls, gamma, tau);
}

/// CSV dump `index,cluster_id`.
inline void write_clusters_csv(const PseudoLabelSet& pls, std::ostream& out) {
    out << "index,cluster_id\n";
    for (Index i = 0; i < pls.n(); ++i) out << i << ',' << pls.assignment[i] << '\n';
}

}  // namespace ncplr
