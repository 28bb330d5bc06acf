#pragma once

// Flat JSON form of TrainConfig and the run manifest.

#include "ncplr/trainer.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <string>

namespace ncplr {

inline constexpr const char* kToolVersion = "0.1.0";

inline nlohmann::ordered_json to_json(const TrainConfig& c) {
    nlohmann::ordered_json j;
    j["epochs"] = c.epochs;
    j["steps_per_epoch"] = c.steps_per_epoch;
    j["P"] = c.P;
    j["K_inst"] = c.K_inst;
    j["learning_rate"] = c.learning_rate;
    j["lr_decay_every"] = c.lr_decay_every;
    j["eps_dbscan"] = c.eps_dbscan;
    j["min_samples"] = c.min_samples;
    j["kappa"] = c.kappa;
    j["rho"] = c.rho;
    j["alpha"] = c.alpha;
    j["lambda1"] = c.lambda1;
    j["lambda2"] = c.lambda2;
    j["ramp_fraction"] = c.ramp_fraction;
    j["ema_start"] = c.ema_start;
    j["ema_final"] = c.ema_final;
    j["gamma"] = c.gamma;
    j["tau"] = c.tau;
    j["tau_d"] = c.tau_d;
    j["aug_std"] = c.aug_std;
    j["hidden_dim"] = c.hidden_dim;
    j["embed_dim"] = c.embed_dim;
    j["init"] = to_string(c.init);
    j["seed"] = c.seed;
    j["use_refined_ce"] = c.use_refined_ce;
    j["use_distance_weight"] = c.use_distance_weight;
    j["ncr_mode"] = to_string(c.ncr_mode);
    return j;
}

/// Overlays keys present in `j` onto `c`. Unknown keys are rejected. A
/// manifest (object with a "config" member) is accepted as well.
inline void apply_json(TrainConfig& c, const nlohmann::json& in) {
    const nlohmann::json& j = in.contains("config") && in["config"].is_object() ? in["config"] : in;
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    try {
        for (const auto& [key, v] : j.items()) {
            if (key == "epochs") c.epochs = v.get<Index>();
            else if (key == "steps_per_epoch") c.steps_per_epoch = v.get<Index>();
            else if (key == "P") c.P = v.get<Index>();
            else if (key == "K_inst") c.K_inst = v.get<Index>();
            else if (key == "learning_rate") c.learning_rate = v.get<double>();
            else if (key == "lr_decay_every") c.lr_decay_every = v.get<Index>();
            else if (key == "eps_dbscan") c.eps_dbscan = v.get<double>();
            else if (key == "min_samples") c.min_samples = v.get<Index>();
            else if (key == "kappa") c.kappa = v.get<Index>();
            else if (key == "rho") c.rho = v.get<double>();
            else if (key == "alpha") c.alpha = v.get<double>();
            else if (key == "lambda1") c.lambda1 = v.get<double>();
            else if (key == "lambda2") c.lambda2 = v.get<double>();
            else if (key == "ramp_fraction") c.ramp_fraction = v.get<double>();
            else if (key == "ema_start") c.ema_start = v.get<double>();
            else if (key == "ema_final") c.ema_final = v.get<double>();
            else if (key == "gamma") c.gamma = v.get<double>();
            else if (key == "tau") c.tau = v.get<double>();
            else if (key == "tau_d") c.tau_d = v.get<double>();
            else if (key == "aug_std") c.aug_std = v.get<double>();
            else if (key == "hidden_dim") c.hidden_dim = v.get<Index>();
            else if (key == "embed_dim") c.embed_dim = v.get<Index>();
            else if (key == "init") c.init = parse_encoder_init(v.get<std::string>());
            else if (key == "seed") c.seed = v.get<std::uint64_t>();
            else if (key == "use_refined_ce") c.use_refined_ce = v.get<bool>();
            else if (key == "use_distance_weight") c.use_distance_weight = v.get<bool>();
            else if (key == "ncr_mode") c.ncr_mode = parse_ncr_mode(v.get<std::string>());
            else throw ConfigError("unknown config key '" + key + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config value has the wrong type: ") + e.what());
    }
}

inline TrainConfig load_config(const std::filesystem::path& path, TrainConfig base = {}) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    apply_json(base, j);
    return base;
}

/// Fully resolved description of a run, written next to its outputs.
struct RunManifest {
    std::string command;
    TrainConfig config;
    std::uint64_t seed = 0;
    nlohmann::ordered_json paths = nlohmann::ordered_json::object();
    nlohmann::ordered_json extra = nlohmann::ordered_json::object();

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["tool"] = "ncplr";
        j["version"] = kToolVersion;
        j["command"] = command;
        j["seed"] = seed;
        j["config"] = ncplr::to_json(config);
        j["variant"] = {{"use_refined_ce", config.use_refined_ce},
                        {"use_distance_weight", config.use_distance_weight},
                        {"ncr_mode", to_string(config.ncr_mode)}};
        j["paths"] = paths;
        if (!extra.empty()) j["extra"] = extra;
        return j;
    }

    void write(const std::filesystem::path& path) const {
        std::ofstream out(path);
        if (!out) throw IoError("cannot write manifest " + path.string());
        out << to_json().dump(2) << '\n';
    }
};

}  // namespace ncplr
