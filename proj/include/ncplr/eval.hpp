#pragma once

// Retrieval (mAP / CMC) and clustering-quality metrics.

#include "ncplr/clustering.hpp"
#include "ncplr/common.hpp"
#include "ncplr/data.hpp"

#include <map>
#include <optional>
#include <vector>

namespace ncplr {

inline constexpr std::array<Index, 3> kCmcRanks{1, 5, 10};

struct RetrievalReport {
    double map = 0.0;
    std::vector<double> cmc;       // at kCmcRanks
    std::vector<double> cmc_curve; // ranks 1..gallery size
    Index n_queries = 0;
    Index n_valid_queries = 0;
    Index n_excluded_queries = 0;
};

struct ClusterQuality {
    double ari = 0.0;
    double nmi = 0.0;
    double purity = 0.0;
};

/// Retrieval by descending cosine similarity with gallery-index tie-break.
/// Gallery items sharing both identity and camera with the query are removed;
/// queries left without a true match are excluded and counted.
inline RetrievalReport cmc_map(const FeatureSet& query, const FeatureSet& gallery) {
    if (!query.has_truth() || !gallery.has_truth()) throw UsageError("cmc_map: identities required for query and gallery");
    if (query.dim() != gallery.dim()) throw UsageError("cmc_map: query and gallery dimensions differ");
    const Index nq = query.n();
    const Index ng = gallery.n();
    RetrievalReport rep;
    rep.n_queries = nq;
    rep.cmc_curve.assign(ng, 0.0);

    std::vector<double> ap(nq, 0.0);
    std::vector<long> first_hit(nq, -1);  // 0-based rank of first true match
    std::vector<bool> valid(nq, false);
    parallel_for(nq, [&](Index q) {
        const int qid = query.true_ids[q];
        const int qcam = query.cam(q);
        std::vector<std::pair<double, Index>> ranked;
        ranked.reserve(ng);
        for (Index g = 0; g < ng; ++g) {
            if (gallery.true_ids[g] == qid && gallery.cam(g) == qcam) continue;
            double sim = query.features.row(static_cast<Eigen::Index>(q)).dot(gallery.features.row(static_cast<Eigen::Index>(g)));
            ranked.emplace_back(-sim, g);
        }
        std::sort(ranked.begin(), ranked.end());
        Index hits = 0;
        double precision_sum = 0.0;
        for (Index r = 0; r < ranked.size(); ++r) {
            if (gallery.true_ids[ranked[r].second] != qid) continue;
            if (hits == 0) first_hit[q] = static_cast<long>(r);
            ++hits;
            precision_sum += static_cast<double>(hits) / static_cast<double>(r + 1);
        }
        if (hits > 0) {
            valid[q] = true;
            ap[q] = precision_sum / static_cast<double>(hits);
        }
    });

    for (Index q = 0; q < nq; ++q) {
        if (!valid[q]) {
            ++rep.n_excluded_queries;
            continue;
        }
        ++rep.n_valid_queries;
        rep.map += ap[q];
        for (Index r = static_cast<Index>(first_hit[q]); r < ng; ++r) rep.cmc_curve[r] += 1.0;
    }
    if (rep.n_valid_queries > 0) {
        const double denom = static_cast<double>(rep.n_valid_queries);
        rep.map /= denom;
        for (double& c : rep.cmc_curve) c /= denom;
    }
    for (Index r : kCmcRanks) {
        if (ng == 0) {
            rep.cmc.push_back(0.0);
        } else {
            rep.cmc.push_back(rep.cmc_curve[std::min(r, ng) - 1]);
        }
    }
    return rep;
}

/// Splits a labelled set for retrieval: the first instance of every identity
/// becomes a query, everything else the gallery.
inline std::pair<FeatureSet, FeatureSet> query_gallery_split(const FeatureSet& fs) {
    if (!fs.has_truth()) throw UsageError("query_gallery_split: identities required");
    std::vector<Index> q;
    std::vector<Index> g;
    std::map<int, bool> seen;
    for (Index i = 0; i < fs.n(); ++i) {
        if (seen.emplace(fs.true_ids[i], true).second) {
            q.push_back(i);
        } else {
            g.push_back(i);
        }
    }
    return {fs.select(q), fs.select(g)};
}

namespace detail {

struct Contingency {
    std::vector<std::vector<double>> table;  // clusters × classes
    std::vector<double> row_sums;
    std::vector<double> col_sums;
    double total = 0.0;
};

inline Contingency contingency(const std::vector<int>& a, const std::vector<int>& b) {
    std::map<int, Index> ra;
    std::map<int, Index> rb;
    for (int v : a) ra.emplace(v, ra.size());
    for (int v : b) rb.emplace(v, rb.size());
    Contingency c;
    c.table.assign(ra.size(), std::vector<double>(rb.size(), 0.0));
    c.row_sums.assign(ra.size(), 0.0);
    c.col_sums.assign(rb.size(), 0.0);
    for (Index i = 0; i < a.size(); ++i) {
        Index r = ra[a[i]];
        Index s = rb[b[i]];
        c.table[r][s] += 1.0;
        c.row_sums[r] += 1.0;
        c.col_sums[s] += 1.0;
    }
    c.total = static_cast<double>(a.size());
    return c;
}

inline double comb2(double x) { return x * (x - 1.0) / 2.0; }

}  // namespace detail

/// Adjusted Rand index of two labelings of equal length.
inline double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.size() != b.size()) throw UsageError("adjusted_rand_index: length mismatch");
    auto c = detail::contingency(a, b);
    double sum_cells = 0.0;
    for (const auto& row : c.table) {
        for (double v : row) sum_cells += detail::comb2(v);
    }
    double sum_rows = 0.0;
    double sum_cols = 0.0;
    for (double v : c.row_sums) sum_rows += detail::comb2(v);
    for (double v : c.col_sums) sum_cols += detail::comb2(v);
    const double total_pairs = detail::comb2(c.total);
    const double expected = total_pairs > 0.0 ? sum_rows * sum_cols / total_pairs : 0.0;
    const double max_index = 0.5 * (sum_rows + sum_cols);
    // Degenerate partitions (all singletons or one block on both sides).
    if (max_index == expected) return 1.0;
    return (sum_cells - expected) / (max_index - expected);
}

/// NMI with arithmetic-mean normalization.
inline double normalized_mutual_info(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.size() != b.size()) throw UsageError("normalized_mutual_info: length mismatch");
    auto c = detail::contingency(a, b);
    if (c.total == 0.0) return 0.0;
    auto h = [&](const std::vector<double>& sums) {
        double out = 0.0;
        for (double v : sums) {
            if (v > 0.0) out -= (v / c.total) * std::log(v / c.total);
        }
        return out;
    };
    const double ha = h(c.row_sums);
    const double hb = h(c.col_sums);
    if (ha == 0.0 && hb == 0.0) return 1.0;
    double mi = 0.0;
    for (Index r = 0; r < c.table.size(); ++r) {
        for (Index s = 0; s < c.table[r].size(); ++s) {
            const double v = c.table[r][s];
            if (v > 0.0) mi += (v / c.total) * std::log(v * c.total / (c.row_sums[r] * c.col_sums[s]));
        }
    }
    return std::clamp(mi / (0.5 * (ha + hb)), 0.0, 1.0);
}

/// ARI / NMI / purity over inliers; nullopt when there are none.
inline std::optional<ClusterQuality> cluster_quality(const PseudoLabelSet& pls, const std::vector<int>& truth) {
    if (truth.size() != pls.n()) throw UsageError("cluster_quality: truth length differs from assignment");
    if (pls.inliers.empty()) return std::nullopt;
    std::vector<int> pred;
    std::vector<int> gt;
    for (Index i : pls.inliers) {
        pred.push_back(pls.assignment[i]);
        gt.push_back(truth[i]);
    }
    ClusterQuality q;
    q.ari = adjusted_rand_index(pred, gt);
    q.nmi = normalized_mutual_info(pred, gt);
    auto c = detail::contingency(pred, gt);
    double majority = 0.0;
    for (const auto& row : c.table) majority += *std::max_element(row.begin(), row.end());
    q.purity = majority / c.total;
    return q;
}

/// Majority truth id of every cluster (ties to the smallest id).
inline std::vector<int> majority_mapping(const PseudoLabelSet& pls, const std::vector<int>& truth) {
    std::vector<std::map<int, Index>> votes(pls.num_clusters);
    for (Index i : pls.inliers) ++votes[static_cast<Index>(pls.assignment[i])][truth[i]];
    std::vector<int> mapping(pls.num_clusters, -1);
    for (Index k = 0; k < pls.num_clusters; ++k) {
        Index best = 0;
        for (const auto& [id, count] : votes[k]) {
            if (count > best) {
                best = count;
                mapping[k] = id;
            }
        }
    }
    return mapping;
}

/// Fraction of inliers whose label, mapped through the clusters' majority
/// identity, disagrees with the truth. `labels[i]` is a cluster id per instance.
inline double noise_rate(const std::vector<int>& labels, const PseudoLabelSet& pls, const std::vector<int>& truth) {
    if (labels.size() != pls.n() || truth.size() != pls.n()) throw UsageError("noise_rate: length mismatch");
    if (pls.inliers.empty()) return 0.0;
    const auto mapping = majority_mapping(pls, truth);
    Index wrong = 0;
    for (Index i : pls.inliers) {
        const int l = labels[i];
        if (l < 0 || static_cast<Index>(l) >= mapping.size() || mapping[static_cast<Index>(l)] != truth[i]) ++wrong;
    }
    return static_cast<double>(wrong) / static_cast<double>(pls.inliers.size());
}

/// Same, for soft targets (row r belongs to instance rows[r]); uses argmax.
inline double noise_rate(const RowMatrix& targets, const std::vector<Index>& rows, const PseudoLabelSet& pls,
                         const std::vector<int>& truth) {
    if (static_cast<Index>(targets.rows()) != rows.size()) throw UsageError("noise_rate: target rows differ from row index");
    std::vector<int> labels(pls.n(), -1);
    for (Index r = 0; r < rows.size(); ++r) labels[rows[r]] = static_cast<int>(argmax(targets.row(static_cast<Eigen::Index>(r))));
    return noise_rate(labels, pls, truth);
}

}  // namespace ncplr
