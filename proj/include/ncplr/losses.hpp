#pragma once

// Training objectives with analytic gradients: soft-target cross-entropy,
// memory-bank InfoNCE, neighbour-consistency KL and their weighted sum.

#include "ncplr/common.hpp"

#include <map>
#include <span>
#include <vector>

namespace ncplr {

inline constexpr double kLogClamp = 1e-12;

/// Cluster centroids used as InfoNCE positives/negatives.
struct MemoryBank {
    RowMatrix centroids;  // K×d, unit rows
    double gamma = 0.9;
    double tau = 0.05;

    Index size() const { return static_cast<Index>(centroids.rows()); }
};

struct LossConfig {
    double lambda1 = 1.0;
    double lambda2 = 1.0;
    double tau = 0.05;
    double tau_d = 0.05;
};

/// Which input tensor a gradient refers to.
enum class GradRole {
    Logits,      // pre-softmax classifier outputs (student)
    Embeddings,  // unit-norm embeddings
};

struct LossValue {
    double value = 0.0;
    std::map<GradRole, RowMatrix> grads;

    const RowMatrix& grad(GradRole role) const {
        auto it = grads.find(role);
        if (it == grads.end()) throw UsageError("loss carries no gradient for the requested role");
        return it->second;
    }
};

namespace detail {

template <typename Derived>
void require_simplex_rows(const Eigen::MatrixBase<Derived>& m, const char* what) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        if (!on_simplex(m.row(i))) throw UsageError(std::string(what) + " row " + std::to_string(i) + " is not on the simplex");
    }
}

/// Backpropagates d/dp through a row-wise softmax: dz = p ⊙ (g − <p, g>).
inline RowMatrix softmax_backward(const RowMatrix& probs, const RowMatrix& grad_probs) {
    RowMatrix out(probs.rows(), probs.cols());
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
        double inner = probs.row(i).dot(grad_probs.row(i));
        out.row(i) = probs.row(i).cwiseProduct((grad_probs.row(i).array() - inner).matrix());
    }
    return out;
}

}  // namespace detail

/// −(1/B) Σ_i Σ_k t_ik log p_ik; gradient is with respect to the logits that
/// produced `preds` through a softmax.
inline LossValue cross_entropy(const RowMatrix& preds, const RowMatrix& targets) {
    if (preds.rows() != targets.rows() || preds.cols() != targets.cols()) {
        throw UsageError("cross_entropy: prediction and target shapes differ");
    }
    detail::require_simplex_rows(preds, "prediction");
    detail::require_simplex_rows(targets, "target");
    const double batch = static_cast<double>(preds.rows());
    LossValue out;
    if (preds.rows() == 0) return out;
    double total = 0.0;
    for (Eigen::Index i = 0; i < preds.rows(); ++i) {
        for (Eigen::Index k = 0; k < preds.cols(); ++k) {
            if (targets(i, k) != 0.0) total -= targets(i, k) * std::log(std::max(preds(i, k), kLogClamp));
        }
    }
    out.value = total / batch;
    out.grads[GradRole::Logits] = (preds - targets) / batch;
    return out;
}

/// Memory-bank InfoNCE over unit embeddings. The bank is a constant here.
inline LossValue info_nce(const RowMatrix& embeddings, std::span<const int> labels, const MemoryBank& bank) {
    if (static_cast<Index>(embeddings.rows()) != labels.size()) throw UsageError("info_nce: label count differs from batch");
    if (embeddings.rows() > 0 && embeddings.cols() != bank.centroids.cols()) {
        throw UsageError("info_nce: embedding and centroid dimensions differ");
    }
    if (!(bank.tau > 0.0)) throw ConfigError("tau must be positive");
    const Index k_count = bank.size();
    for (int y : labels) {
        if (y < 0 || static_cast<Index>(y) >= k_count) {
            throw StalenessError("info_nce: label " + std::to_string(y) + " outside bank of size " + std::to_string(k_count));
        }
    }
    LossValue out;
    const auto batch = embeddings.rows();
    RowMatrix grad = RowMatrix::Zero(batch, embeddings.cols());
    if (batch == 0) {
        out.grads[GradRole::Embeddings] = grad;
        return out;
    }
    const double inv_tau = 1.0 / bank.tau;
    double total = 0.0;
    for (Eigen::Index i = 0; i < batch; ++i) {
        Vector logits = bank.centroids * embeddings.row(i).transpose() * inv_tau;
        const Index top = argmax(logits);
        const double m = logits(static_cast<Eigen::Index>(top));
        // log Σ exp(z) = m + log1p(Σ_{k≠top} exp(z_k − m)) keeps tiny losses accurate.
        double rest = 0.0;
        for (Eigen::Index k = 0; k < logits.size(); ++k) {
            if (static_cast<Index>(k) != top) rest += std::exp(logits(k) - m);
        }
        const int y = labels[static_cast<Index>(i)];
        total += (m - logits(y)) + std::log1p(rest);

        Vector probs = softmax(logits);
        probs(y) -= 1.0;
        grad.row(i) = (bank.centroids.transpose() * probs).transpose() * inv_tau;
    }
    out.value = total / static_cast<double>(batch);
    out.grads[GradRole::Embeddings] = grad / static_cast<double>(batch);
    return out;
}

/// Gradient of a loss with respect to pre-normalization vectors u, given the
/// gradient with respect to f = u/|u|.
inline RowMatrix l2_normalize_backward(const RowMatrix& pre, const RowMatrix& grad_unit) {
    RowMatrix out(pre.rows(), pre.cols());
    for (Eigen::Index i = 0; i < pre.rows(); ++i) {
        double norm = pre.row(i).norm();
        Eigen::RowVectorXd f = pre.row(i) / norm;
        out.row(i) = (grad_unit.row(i) - f * f.dot(grad_unit.row(i))) / norm;
    }
    return out;
}

/// c_y ← γ c_y + (1−γ) f, then re-normalized to unit length.
inline void memory_update(MemoryBank& bank, const Eigen::Ref<const Eigen::RowVectorXd>& f, int label) {
    if (label < 0 || static_cast<Index>(label) >= bank.size()) {
        throw UsageError("memory_update: label " + std::to_string(label) + " out of range");
    }
    if (f.size() != bank.centroids.cols()) throw UsageError("memory_update: feature dimension differs");
    auto row = bank.centroids.row(label);
    Eigen::RowVectorXd next = bank.gamma * row + (1.0 - bank.gamma) * f;
    double norm = next.norm();
    if (!(norm > 0.0)) throw NormalizationError("memory_update: centroid collapsed to zero");
    row = next / norm;
}

/// Neighbour-consistency KL.
///
/// `anchors` holds one distribution per anchor (teacher side, no gradient).
/// `neighbors[a]` indexes rows of `student` whose uniform mean is compared
/// against anchor a. Anchors with no neighbours contribute nothing and are
/// left out of the averaging denominator. The gradient is reported against
/// the student logits, one row per `student` row.
inline LossValue ncr_loss(const RowMatrix& anchors, const RowMatrix& student,
                          const std::vector<std::vector<Index>>& neighbors) {
    if (static_cast<Index>(anchors.rows()) != neighbors.size()) throw UsageError("ncr_loss: one neighbour list per anchor required");
    if (anchors.rows() > 0 && student.rows() > 0 && anchors.cols() != student.cols()) {
        throw UsageError("ncr_loss: anchor and student class counts differ");
    }
    detail::require_simplex_rows(anchors, "teacher");
    detail::require_simplex_rows(student, "student");

    LossValue out;
    RowMatrix grad_probs = RowMatrix::Zero(student.rows(), student.cols());
    Index effective = 0;
    double total = 0.0;
    for (Eigen::Index a = 0; a < anchors.rows(); ++a) {
        const auto& nbrs = neighbors[static_cast<Index>(a)];
        if (nbrs.empty()) continue;
        ++effective;
        Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(student.cols());
        for (Index j : nbrs) {
            if (j >= static_cast<Index>(student.rows())) throw UsageError("ncr_loss: neighbour index out of range");
            mean += student.row(static_cast<Eigen::Index>(j));
        }
        const double inv_count = 1.0 / static_cast<double>(nbrs.size());
        mean *= inv_count;

        double kl = 0.0;
        Eigen::RowVectorXd d_mean = Eigen::RowVectorXd::Zero(student.cols());
        for (Eigen::Index k = 0; k < student.cols(); ++k) {
            const double p = anchors(a, k);
            if (p <= 0.0) continue;
            const double q = std::max(mean(k), kLogClamp);
            kl += p * (std::log(std::max(p, kLogClamp)) - std::log(q));
            d_mean(k) = -p / q;
        }
        total += std::max(0.0, kl);
        for (Index j : nbrs) grad_probs.row(static_cast<Eigen::Index>(j)) += d_mean * inv_count;
    }
    if (effective > 0) {
        out.value = total / static_cast<double>(effective);
        grad_probs /= static_cast<double>(effective);
    }
    out.grads[GradRole::Logits] = detail::softmax_backward(student, grad_probs);
    return out;
}

/// ℒ = ℒ_cc + λ₁ ℒ_ce + λ₂ ℒ_NCR, values and gradients alike.
inline LossValue total_loss(const LossValue& cc, const LossValue& ce, const LossValue& ncr, const LossConfig& cfg) {
    LossValue out;
    out.value = cc.value + cfg.lambda1 * ce.value + cfg.lambda2 * ncr.value;
    auto accumulate = [&](const LossValue& part, double weight) {
        for (const auto& [role, g] : part.grads) {
            auto it = out.grads.find(role);
            if (it == out.grads.end()) {
                out.grads.emplace(role, weight * g);
            } else {
                if (it->second.rows() != g.rows() || it->second.cols() != g.cols()) {
                    throw UsageError("total_loss: gradient shapes differ for a shared role");
                }
                it->second += weight * g;
            }
        }
    };
    accumulate(cc, 1.0);
    accumulate(ce, cfg.lambda1);
    accumulate(ncr, cfg.lambda2);
    return out;
}

}  // namespace ncplr
