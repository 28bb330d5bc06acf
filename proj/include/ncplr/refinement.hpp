#pragma once

// Neighbour-consistency label refinement: ŷ = α y + (1−α) Σ_j w_ij p_j.

#include "ncplr/clustering.hpp"
#include "ncplr/common.hpp"
#include "ncplr/graph.hpp"

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

namespace ncplr {

enum class WeightStrategy { Average, DistanceSoftmax };

inline const char* to_string(WeightStrategy s) {
    return s == WeightStrategy::Average ? "average" : "distance-softmax";
}

inline WeightStrategy parse_weight_strategy(const std::string& s) {
    if (s == "average") return WeightStrategy::Average;
    if (s == "distance-softmax") return WeightStrategy::DistanceSoftmax;
    throw ConfigError("unknown weighting strategy '" + s + "'");
}

struct RefineConfig {
    double alpha = 0.2;
    double rho = 0.2;
    WeightStrategy strategy = WeightStrategy::DistanceSoftmax;
    double tau_d = 0.05;
};

/// Soft targets, one row per inlier (row r belongs to instance `rows[r]`).
struct RefinedLabelMatrix {
    RowMatrix targets;
    std::vector<Index> rows;
    double alpha = 0.2;
    double rho = 0.2;
    WeightStrategy strategy = WeightStrategy::DistanceSoftmax;
    double tau_d = 0.05;
};

/// Latest per-instance classifier outputs for the current epoch's K.
struct PredictionBank {
    RowMatrix student;
    RowMatrix teacher;
    std::vector<std::int64_t> freshness;  // step of last write, -1 = initial one-hot

    Index n() const { return static_cast<Index>(student.rows()); }
    Index num_classes() const { return static_cast<Index>(student.cols()); }

    /// Inliers start at their one-hot label; outlier rows are uniform and never read.
    static PredictionBank from_labels(const PseudoLabelSet& pls) {
        PredictionBank bank;
        const auto n = static_cast<Eigen::Index>(pls.n());
        const auto k = static_cast<Eigen::Index>(pls.num_clusters);
        bank.student = RowMatrix::Constant(n, k, k > 0 ? 1.0 / static_cast<double>(k) : 0.0);
        for (Index i : pls.inliers) bank.student.row(static_cast<Eigen::Index>(i)) = one_hot(pls, i).transpose();
        bank.teacher = bank.student;
        bank.freshness.assign(pls.n(), -1);
        return bank;
    }

    void write(Index i, const Eigen::Ref<const Eigen::RowVectorXd>& student_row,
               const Eigen::Ref<const Eigen::RowVectorXd>& teacher_row, std::int64_t step) {
        student.row(static_cast<Eigen::Index>(i)) = student_row;
        teacher.row(static_cast<Eigen::Index>(i)) = teacher_row;
        freshness[i] = step;
    }
};

/// Weights over `nbrs`: uniform, or softmax(d_J(anchor, j) / τ_d) which puts
/// more mass on the farther neighbours inside the radius.
inline Vector neighbor_weights(const AffinityGraph& g, const std::vector<Index>& nbrs, Index anchor, WeightStrategy strategy,
                               double tau_d) {
    if (nbrs.empty()) throw UsageError("neighbor_weights: empty neighbourhood");
    const auto m = static_cast<Eigen::Index>(nbrs.size());
    if (strategy == WeightStrategy::Average) return Vector::Constant(m, 1.0 / static_cast<double>(m));
    if (!(tau_d > 0.0)) throw ConfigError("tau_d must be positive");
    Vector scaled(m);
    for (Eigen::Index r = 0; r < m; ++r) scaled(r) = g(anchor, nbrs[static_cast<Index>(r)]) / tau_d;
    return softmax(scaled);
}

/// Convex blend of a hard label and a weighted ensemble of neighbour rows.
/// An empty ensemble returns the hard label unchanged.
inline Vector refine_label(const Vector& y, const RowMatrix& nbr_preds, const Vector& weights, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
    if (nbr_preds.rows() == 0) return y;
    if (nbr_preds.cols() != y.size()) throw UsageError("refine_label: prediction length differs from label length");
    if (weights.size() != nbr_preds.rows()) throw UsageError("refine_label: weight count differs from neighbour count");
    const Eigen::Index m = nbr_preds.rows();
    Vector out(y.size());
    for (Eigen::Index k = 0; k < y.size(); ++k) {
        // A weighted mean of equal values is that value; summing would drift
        // by an ulp whenever the weights do not add to exactly one.
        bool constant = true;
        double ens = 0.0;
        for (Eigen::Index j = 0; j < m; ++j) {
            constant = constant && nbr_preds(j, k) == nbr_preds(0, k);
            ens += weights(j) * nbr_preds(j, k);
        }
        if (constant) ens = nbr_preds(0, k);
        out(k) = ens == y(k) ? y(k) : alpha * y(k) + (1.0 - alpha) * ens;
    }
    return out;
}

/// Refined target for one inlier, given its precomputed neighbourhood.
inline Vector refine_instance(const PseudoLabelSet& pls, const RowMatrix& preds, const AffinityGraph& g,
                              const std::vector<Index>& nbrs, Index anchor, const RefineConfig& cfg) {
    Vector y = one_hot(pls, anchor);
    if (nbrs.empty()) return y;
    RowMatrix gathered(static_cast<Eigen::Index>(nbrs.size()), preds.cols());
    for (Index r = 0; r < nbrs.size(); ++r) gathered.row(static_cast<Eigen::Index>(r)) = preds.row(static_cast<Eigen::Index>(nbrs[r]));
    return refine_label(y, gathered, neighbor_weights(g, nbrs, anchor, cfg.strategy, cfg.tau_d), cfg.alpha);
}

inline void check_bank(const PseudoLabelSet& pls, const PredictionBank& bank) {
    if (bank.num_classes() != pls.num_clusters) {
        throw StalenessError("prediction bank has " + std::to_string(bank.num_classes()) + " classes, labels have " +
                             std::to_string(pls.num_clusters));
    }
    if (bank.n() != pls.n()) throw StalenessError("prediction bank row count differs from label count");
}

/// Refines every inlier against the student side of the bank.
inline RefinedLabelMatrix refine_all(const PseudoLabelSet& pls, const PredictionBank& bank, const AffinityGraph& g,
                                     const RefineConfig& cfg) {
    check_bank(pls, bank);
    if (g.n() != pls.n()) throw UsageError("refine_all: graph size differs from label count");
    const InlierMask mask = pls.mask();
    RefinedLabelMatrix out;
    out.alpha = cfg.alpha;
    out.rho = cfg.rho;
    out.strategy = cfg.strategy;
    out.tau_d = cfg.tau_d;
    out.rows = pls.inliers;
    out.targets.resize(static_cast<Eigen::Index>(pls.n_clustered()), static_cast<Eigen::Index>(pls.num_clusters));
    parallel_for(pls.n_clustered(), [&](Index r) {
        const Index i = pls.inliers[r];
        auto nbrs = neighborhood(g, i, cfg.rho, mask);
        out.targets.row(static_cast<Eigen::Index>(r)) = refine_instance(pls, bank.student, g, nbrs, i, cfg).transpose();
    });
    return out;
}

inline double entropy(const Eigen::Ref<const Eigen::RowVectorXd>& p) {
    double h = 0.0;
    for (Eigen::Index k = 0; k < p.size(); ++k) {
        if (p(k) > 0.0) h -= p(k) * std::log(p(k));
    }
    return h;
}

/// CSV dump `index,hard_label,refined_argmax,refined_entropy`, inliers only.
inline void write_refined_csv(const PseudoLabelSet& pls, const RefinedLabelMatrix& refined, std::ostream& out) {
    out << "index,hard_label,refined_argmax,refined_entropy\n";
    for (Index r = 0; r < refined.rows.size(); ++r) {
        const Index i = refined.rows[r];
        auto row = refined.targets.row(static_cast<Eigen::Index>(r));
        out << i << ',' << pls.assignment[i] << ',' << argmax(row) << ',' << format_double(entropy(row)) << '\n';
    }
}

}  // namespace ncplr
