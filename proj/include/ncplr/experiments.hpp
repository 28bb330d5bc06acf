#pragma once

// Ablation variants, hyper-parameter sweeps and the synthetic evaluation
// protocol shared by the CLI and the acceptance runner.

#include "ncplr/eval.hpp"
#include "ncplr/trainer.hpp"

#include <string>
#include <vector>

namespace ncplr {

struct Variant {
    std::string name;
    TrainConfig config;
};

/// The six loss configurations, from contrastive-only up to the full method.
inline std::vector<Variant> ablation_variants(const TrainConfig& base) {
    std::vector<Variant> out;
    auto add = [&](const char* name, double l1, double l2, bool refined, bool weight, NcrMode mode) {
        TrainConfig c = base;
        c.lambda1 = l1;
        c.lambda2 = l2;
        c.use_refined_ce = refined;
        c.use_distance_weight = weight;
        c.ncr_mode = mode;
        out.push_back({name, c});
    };
    const double l1 = base.lambda1;
    const double l2 = base.lambda2;
    add("Lcc", 0.0, 0.0, false, false, NcrMode::Off);
    add("Lcc+Lce", l1, 0.0, false, false, NcrMode::Off);
    add("Lcc+Lce_hat_wo_weight", l1, 0.0, true, false, NcrMode::Off);
    add("Lcc+Lce_hat_weight", l1, 0.0, true, true, NcrMode::Off);
    add("Lcc+Lce_hat_w+Lncr_s", l1, l2, true, true, NcrMode::OneStream);
    add("NCPLR", l1, l2, true, true, NcrMode::TwoStream);
    return out;
}

inline const std::vector<std::string>& sweep_params() {
    static const std::vector<std::string> names{"alpha", "lambda1", "lambda2", "rho"};
    return names;
}

inline void set_sweep_param(TrainConfig& c, const std::string& name, double v) {
    if (name == "alpha") c.alpha = v;
    else if (name == "lambda1") c.lambda1 = v;
    else if (name == "lambda2") c.lambda2 = v;
    else if (name == "rho") c.rho = v;
    else throw ConfigError("cannot sweep '" + name + "' (alpha, lambda1, lambda2, rho)");
}

struct RunSummary {
    std::optional<double> ari;
    std::optional<double> nmi;
    double map = 0.0;
    double rank1 = 0.0;
};

/// Final-epoch clustering scores plus retrieval with the student's
/// embeddings (first instance of each identity as query).
inline RunSummary summarize(const TrainResult& res, const FeatureSet& data) {
    RunSummary s;
    if (!res.history.empty()) {
        s.ari = res.history.back().ari;
        s.nmi = res.history.back().nmi;
    }
    if (data.has_truth()) {
        auto [q, g] = query_gallery_split(embed_features(res.pair.student, data));
        auto rep = cmc_map(q, g);
        s.map = rep.map;
        s.rank1 = rep.cmc.front();
    }
    return s;
}

}  // namespace ncplr
