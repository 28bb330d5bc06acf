#pragma once

// Epoch-alternating training loop: extract -> graph -> DBSCAN -> refine ->
// optimize ℒ_cc + λ₁ ℒ̂_ce + λ₂ ℒ_NCR under a mean-teacher pair.

#include "ncplr/clustering.hpp"
#include "ncplr/common.hpp"
#include "ncplr/data.hpp"
#include "ncplr/encoder.hpp"
#include "ncplr/eval.hpp"
#include "ncplr/graph.hpp"
#include "ncplr/losses.hpp"
#include "ncplr/refinement.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <iostream>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

namespace ncplr {

enum class NcrMode { Off, OneStream, TwoStream };
enum class EncoderInit { Identity, Random };

inline const char* to_string(EncoderInit i) { return i == EncoderInit::Identity ? "identity" : "random"; }

inline EncoderInit parse_encoder_init(const std::string& s) {
    if (s == "identity") return EncoderInit::Identity;
    if (s == "random") return EncoderInit::Random;
    throw ConfigError("unknown encoder init '" + s + "'");
}

inline const char* to_string(NcrMode m) {
    switch (m) {
        case NcrMode::Off: return "off";
        case NcrMode::OneStream: return "one_stream";
        case NcrMode::TwoStream: return "two_stream";
    }
    return "off";
}

inline NcrMode parse_ncr_mode(const std::string& s) {
    if (s == "off") return NcrMode::Off;
    if (s == "one_stream") return NcrMode::OneStream;
    if (s == "two_stream") return NcrMode::TwoStream;
    throw ConfigError("unknown ncr_mode '" + s + "'");
}

struct TrainConfig {
    Index epochs = 10;
    Index steps_per_epoch = 20;
    Index P = 8;       // clusters per batch
    Index K_inst = 4;  // instances per cluster
    double learning_rate = 0.05;
    Index lr_decay_every = 0;  // 0: scale 20-of-60 to the epoch count
    double eps_dbscan = 0.4;
    Index min_samples = 4;
    Index kappa = 30;
    double rho = 0.2;
    double alpha = 0.2;
    double lambda1 = 1.0;
    double lambda2 = 1.0;
    double ramp_fraction = 50.0 / 60.0;  // share of epochs over which λ₂ and EMA ramp
    double ema_start = 0.9;
    double ema_final = 0.99;
    double gamma = 0.9;
    double tau = 0.05;
    double tau_d = 0.05;
    double aug_std = 0.05;
    Index hidden_dim = 0;  // 0: twice the input dimension
    Index embed_dim = 0;  // 0: same as input dimension
    EncoderInit init = EncoderInit::Identity;
    std::uint64_t seed = 0;
    bool use_refined_ce = true;
    bool use_distance_weight = true;
    NcrMode ncr_mode = NcrMode::TwoStream;

    Index batch_size() const { return P * K_inst; }

    void validate() const {
        auto positive = [](double v, const char* name) {
            if (!(v > 0.0)) throw ConfigError(std::string(name) + " must be positive");
        };
        if (P < 1 || K_inst < 1) throw ConfigError("P and K_inst must be >= 1");
        if (steps_per_epoch < 1) throw ConfigError("steps_per_epoch must be >= 1");
        positive(learning_rate, "learning_rate");
        positive(tau, "tau");
        positive(tau_d, "tau_d");
        if (!(eps_dbscan > 0.0 && eps_dbscan <= 1.0)) throw ConfigError("eps_dbscan must lie in (0, 1]");
        if (!(rho > 0.0 && rho <= 1.0)) throw ConfigError("rho must lie in (0, 1]");
        if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
        if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in [0, 1]");
        if (!(ema_start >= 0.0 && ema_start <= 1.0 && ema_final >= 0.0 && ema_final <= 1.0)) {
            throw ConfigError("EMA momenta must lie in [0, 1]");
        }
        if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0)) throw ConfigError("loss weights must be non-negative");
        if (!(aug_std >= 0.0)) throw ConfigError("aug_std must be non-negative");
        if (!(ramp_fraction >= 0.0)) throw ConfigError("ramp_fraction must be non-negative");
        if (min_samples < 1 || kappa < 1) throw ConfigError("min_samples and kappa must be >= 1");
    }

    /// Linear 0 -> 1 ramp over the warm-up share of the run.
    double ramp(Index epoch) const {
        const double warm = ramp_fraction * static_cast<double>(epochs);
        if (warm <= 0.0) return 1.0;
        return std::min(1.0, static_cast<double>(epoch) / warm);
    }
    double lambda2_at(Index epoch) const { return lambda2 * ramp(epoch); }
    double ema_at(Index epoch) const { return ema_start + (ema_final - ema_start) * ramp(epoch); }
    double lr_at(Index epoch) const {
        Index every = lr_decay_every;
        if (every == 0) every = std::max<Index>(1, static_cast<Index>(std::lround(static_cast<double>(epochs) * 20.0 / 60.0)));
        return learning_rate * std::pow(0.1, static_cast<double>(epoch / every));
    }
    RefineConfig refine_config() const {
        return {alpha, rho, use_distance_weight ? WeightStrategy::DistanceSoftmax : WeightStrategy::Average, tau_d};
    }
};

struct EpochReport {
    Index epoch = 0;
    Index num_clusters = 0;
    Index n_clustered = 0;
    double loss_cc = 0.0;
    double loss_ce = 0.0;
    double loss_ncr = 0.0;
    std::optional<double> ari;
    std::optional<double> nmi;
    std::optional<double> noise_rate;
    bool skipped = false;
};

/// P distinct clusters drawn uniformly, K_inst members each; members are
/// drawn without replacement when the cluster is large enough, with
/// replacement otherwise.
inline std::vector<Index> pk_sample(const PseudoLabelSet& pls, Index P, Index K_inst, std::mt19937_64& rng) {
    if (P > pls.num_clusters) {
        throw ConfigError("P (" + std::to_string(P) + ") exceeds cluster count (" + std::to_string(pls.num_clusters) + ")");
    }
    const auto members = pls.members();
    std::vector<Index> ids(pls.num_clusters);
    std::iota(ids.begin(), ids.end(), Index{0});
    // Partial Fisher-Yates for the P chosen ids.
    for (Index r = 0; r < P; ++r) {
        std::uniform_int_distribution<Index> pick(r, ids.size() - 1);
        std::swap(ids[r], ids[pick(rng)]);
    }
    std::vector<Index> batch;
    batch.reserve(P * K_inst);
    for (Index r = 0; r < P; ++r) {
        std::vector<Index> pool = members[ids[r]];
        if (pool.size() >= K_inst) {
            for (Index s = 0; s < K_inst; ++s) {
                std::uniform_int_distribution<Index> pick(s, pool.size() - 1);
                std::swap(pool[s], pool[pick(rng)]);
                batch.push_back(pool[s]);
            }
        } else {
            std::uniform_int_distribution<Index> pick(0, pool.size() - 1);
            for (Index s = 0; s < K_inst; ++s) batch.push_back(pool[pick(rng)]);
        }
    }
    return batch;
}

/// Everything carried across epochs, plus the last epoch's artifacts.
struct TrainState {
    FeatureSet data;
    TeacherStudentPair pair;
    std::mt19937_64 rng;
    Index epoch = 0;
    std::int64_t step = 0;

    FeatureSet epoch_features;  // features the last graph/clustering used
    PseudoLabelSet labels;
    PredictionBank predictions;
    std::optional<AffinityGraph> graph;
    // Optional probe invoked after each step's losses (tests use it).
    std::function<void(const TrainState&, const LossValue& cc, const LossValue& ce, const LossValue& ncr)> on_step;
};

inline TrainState init_state(const TrainConfig& cfg, const FeatureSet& data) {
    cfg.validate();
    validate(data);
    TrainState st;
    st.data = data;
    st.rng.seed(cfg.seed);
    const Index embed = cfg.embed_dim == 0 ? data.dim() : cfg.embed_dim;
    const Index hidden = cfg.hidden_dim == 0 ? 2 * data.dim() : cfg.hidden_dim;
    if (cfg.init == EncoderInit::Identity) {
        if (embed != data.dim()) throw ConfigError("identity init needs embed_dim equal to the input dimension");
        st.pair.student = EncoderModel::identity(data.dim(), hidden, st.rng);
    } else {
        st.pair.student = EncoderModel::random(data.dim(), hidden, embed, st.rng);
    }
    st.pair.teacher = st.pair.student;
    st.pair.ema_momentum = cfg.ema_at(0);
    return st;
}

namespace detail {

inline RowMatrix gather_rows(const RowMatrix& m, const std::vector<Index>& rows) {
    RowMatrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
    for (Index r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = m.row(static_cast<Eigen::Index>(rows[r]));
    return out;
}

inline RowMatrix perturb(const RowMatrix& x, double std_dev, std::mt19937_64& rng) {
    RowMatrix out = x;
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
        for (Eigen::Index k = 0; k < out.cols(); ++k) {
            double z = gauss(rng);
            out(i, k) += std_dev * z;
        }
    }
    return out;
}

}  // namespace detail

/// One clustering stage followed by `steps_per_epoch` optimization steps.
inline EpochReport run_epoch(TrainState& st, const TrainConfig& cfg) {
    EpochReport rep;
    rep.epoch = st.epoch;
    const Index epoch = st.epoch++;

    // Clustering stage, on features from the model as it stood after the previous epoch.
    st.epoch_features = embed_features(st.pair.student, st.data);
    const Index kappa = std::min(cfg.kappa, st.data.n());
    st.graph = build_affinity_graph(st.epoch_features, kappa);
    const AffinityGraph& graph = *st.graph;
    st.labels = dbscan(graph, cfg.eps_dbscan, cfg.min_samples);
    const PseudoLabelSet& pls = st.labels;
    rep.num_clusters = pls.num_clusters;
    rep.n_clustered = pls.n_clustered();
    if (st.data.has_truth()) {
        if (auto q = cluster_quality(pls, st.data.true_ids)) {
            rep.ari = q->ari;
            rep.nmi = q->nmi;
            rep.noise_rate = noise_rate(pls.assignment, pls, st.data.true_ids);
        }
    }
    if (pls.num_clusters == 0) {
        std::cerr << "warning: epoch " << epoch << " produced no clusters; skipping training stage\n";
        st.predictions = PredictionBank::from_labels(pls);
        rep.skipped = true;
        return rep;
    }

    MemoryBank bank = init_memory_bank(st.epoch_features, pls, cfg.gamma, cfg.tau);
    st.predictions = PredictionBank::from_labels(pls);
    st.pair.student.reset_head(bank.centroids, cfg.tau);
    st.pair.teacher.reset_head(bank.centroids, cfg.tau);
    const auto neighborhoods = all_neighborhoods(graph, cfg.rho, pls.mask());
    const RefineConfig rcfg = cfg.refine_config();
    const LossConfig lcfg{cfg.lambda1, cfg.lambda2_at(epoch), cfg.tau, cfg.tau_d};
    const double lr = cfg.lr_at(epoch);
    st.pair.ema_momentum = cfg.ema_at(epoch);
    const Index P = std::min(cfg.P, pls.num_clusters);

    for (Index s = 0; s < cfg.steps_per_epoch; ++s, ++st.step) {
        const auto batch = pk_sample(pls, P, cfg.K_inst, st.rng);
        const auto B = static_cast<Eigen::Index>(batch.size());
        const RowMatrix x = detail::gather_rows(st.data.features, batch);
        const RowMatrix view1 = detail::perturb(x, cfg.aug_std, st.rng);
        const RowMatrix view2 = detail::perturb(x, cfg.aug_std, st.rng);

        const ForwardResult sf = forward(st.pair.student, view1);
        const ForwardResult tf = forward(st.pair.teacher, view2);
        for (Eigen::Index b = 0; b < B; ++b) st.predictions.write(batch[static_cast<Index>(b)], sf.preds.row(b), tf.preds.row(b), st.step);

        std::vector<int> labels(batch.size());
        for (Index b = 0; b < batch.size(); ++b) labels[b] = pls.assignment[batch[b]];

        LossValue cc = info_nce(sf.embeddings, labels, bank);

        LossValue ce;
        if (cfg.lambda1 > 0.0) {
            RowMatrix targets(B, static_cast<Eigen::Index>(pls.num_clusters));
            for (Eigen::Index b = 0; b < B; ++b) {
                const Index i = batch[static_cast<Index>(b)];
                targets.row(b) = cfg.use_refined_ce
                                     ? refine_instance(pls, st.predictions.student, graph, neighborhoods[i], i, rcfg).transpose()
                                     : one_hot(pls, i).transpose();
            }
            ce = cross_entropy(sf.preds, targets);
        }

        LossValue ncr;
        if (cfg.ncr_mode != NcrMode::Off) {
            // Student rows: live batch rows first, then bank rows for
            // neighbours outside the batch (constants).
            std::unordered_map<Index, Index> position;
            for (Index b = 0; b < batch.size(); ++b) position.emplace(batch[b], b);
            std::vector<std::vector<Index>> nbr_rows(batch.size());
            std::vector<Index> extra;
            std::unordered_map<Index, Index> extra_pos;
            for (Index b = 0; b < batch.size(); ++b) {
                for (Index j : neighborhoods[batch[b]]) {
                    if (auto it = position.find(j); it != position.end()) {
                        nbr_rows[b].push_back(it->second);
                    } else {
                        auto [e, inserted] = extra_pos.emplace(j, batch.size() + extra.size());
                        if (inserted) extra.push_back(j);
                        nbr_rows[b].push_back(e->second);
                    }
                }
            }
            RowMatrix student(B + static_cast<Eigen::Index>(extra.size()), sf.preds.cols());
            student.topRows(B) = sf.preds;
            for (Index e = 0; e < extra.size(); ++e) {
                student.row(B + static_cast<Eigen::Index>(e)) = st.predictions.student.row(static_cast<Eigen::Index>(extra[e]));
            }
            const RowMatrix& anchors = cfg.ncr_mode == NcrMode::TwoStream ? tf.preds : sf.preds;
            ncr = ncr_loss(anchors, student, nbr_rows);
            RowMatrix live = ncr.grads[GradRole::Logits].topRows(B);
            ncr.grads[GradRole::Logits] = live;
        }

        if (st.on_step) st.on_step(st, cc, ce, ncr);
        if (!std::isfinite(cc.value) || !std::isfinite(ce.value) || !std::isfinite(ncr.value)) {
            throw NumericError("non-finite loss at step " + std::to_string(st.step));
        }
        rep.loss_cc += cc.value;
        rep.loss_ce += ce.value;
        rep.loss_ncr += ncr.value;

        const LossValue total = total_loss(cc, ce, ncr, lcfg);
        const RowMatrix zero_logits = RowMatrix::Zero(B, sf.preds.cols());
        auto it = total.grads.find(GradRole::Logits);
        const RowMatrix& g_logits = it == total.grads.end() ? zero_logits : it->second;
        const EncoderGrads grads = backward(st.pair.student, sf, g_logits, total.grad(GradRole::Embeddings));
        apply_gradients(st.pair.student, grads, lr);

        for (Eigen::Index b = 0; b < B; ++b) memory_update(bank, sf.embeddings.row(b), labels[static_cast<Index>(b)]);
        ema_update(st.pair);
    }
    const double steps = static_cast<double>(cfg.steps_per_epoch);
    rep.loss_cc /= steps;
    rep.loss_ce /= steps;
    rep.loss_ncr /= steps;
    return rep;
}

struct TrainResult {
    TeacherStudentPair pair;
    std::vector<EpochReport> history;
    TrainState state;
};

inline TrainResult train(const TrainConfig& cfg, const FeatureSet& data) {
    TrainResult out;
    out.state = init_state(cfg, data);
    for (Index e = 0; e < cfg.epochs; ++e) out.history.push_back(run_epoch(out.state, cfg));
    out.pair = out.state.pair;
    return out;
}

inline void write_history_csv(const std::vector<EpochReport>& history, std::ostream& out) {
    auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string("nan"); };
    out << "epoch,K,n_clustered,loss_cc,loss_ce,loss_ncr,ari,nmi,noise_rate\n";
    for (const auto& r : history) {
        out << r.epoch << ',' << r.num_clusters << ',' << r.n_clustered << ',' << format_double(r.loss_cc) << ','
            << format_double(r.loss_ce) << ',' << format_double(r.loss_ncr) << ',' << opt(r.ari) << ',' << opt(r.nmi) << ','
            << opt(r.noise_rate) << '\n';
    }
}

}  // namespace ncplr
