#pragma once

// Subcommand wiring for the ncplr executable. Kept in a header so the tests
// can drive dispatch() in-process.

#include "ncplr/ncplr.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace ncplr::cli {

namespace stdfs = std::filesystem;
using nlohmann::ordered_json;

inline void ensure_dir(const stdfs::path& dir) {
    std::error_code ec;
    stdfs::create_directories(dir, ec);
    if (ec || !stdfs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
}

inline std::ofstream open_out(const stdfs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    return out;
}

inline std::vector<std::vector<std::string>> read_csv(const stdfs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        rows.push_back(std::move(cells));
    }
    if (rows.empty()) throw FormatError(path.string() + ": empty file");
    return rows;
}

template <typename T>
T parse_number(const std::string& s, const stdfs::path& where) {
    try {
        std::size_t used = 0;
        T v;
        if constexpr (std::is_floating_point_v<T>) v = static_cast<T>(std::stod(s, &used));
        else v = static_cast<T>(std::stoll(s, &used));
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw FormatError(where.string() + ": bad number '" + s + "'");
    }
}

/// `index,cluster_id` as written by `cluster` and `train`.
inline PseudoLabelSet read_clusters(const stdfs::path& path, Index n) {
    auto rows = read_csv(path);
    std::vector<int> raw(n, -1);
    std::vector<bool> seen(n, false);
    for (Index r = 1; r < rows.size(); ++r) {
        if (rows[r].size() != 2) throw FormatError(path.string() + ": line " + std::to_string(r + 1) + " needs 2 columns");
        auto i = parse_number<long long>(rows[r][0], path);
        if (i < 0 || static_cast<Index>(i) >= n) throw FormatError(path.string() + ": index out of range");
        raw[static_cast<Index>(i)] = parse_number<int>(rows[r][1], path);
        seen[static_cast<Index>(i)] = true;
    }
    if (std::find(seen.begin(), seen.end(), false) != seen.end()) throw FormatError(path.string() + ": missing instances");
    return PseudoLabelSet::from_assignment(raw);
}

/// `index,p_0,...,p_{K-1}`; rows not listed keep the one-hot initialization.
inline PredictionBank read_bank(const stdfs::path& path, const PseudoLabelSet& pls) {
    auto rows = read_csv(path);
    auto bank = PredictionBank::from_labels(pls);
    const Index k = rows[0].size() - 1;
    if (k != pls.num_clusters) {
        throw StalenessError(path.string() + ": bank has " + std::to_string(k) + " classes, clusters have " +
                             std::to_string(pls.num_clusters));
    }
    for (Index r = 1; r < rows.size(); ++r) {
        if (rows[r].size() != k + 1) throw FormatError(path.string() + ": line " + std::to_string(r + 1) + " has wrong width");
        auto i = parse_number<long long>(rows[r][0], path);
        if (i < 0 || static_cast<Index>(i) >= pls.n()) throw FormatError(path.string() + ": index out of range");
        Eigen::RowVectorXd p(static_cast<Eigen::Index>(k));
        for (Index c = 0; c < k; ++c) p(static_cast<Eigen::Index>(c)) = parse_number<double>(rows[r][c + 1], path);
        if (!on_simplex(p.transpose())) throw FormatError(path.string() + ": row " + std::to_string(i) + " is not a distribution");
        bank.write(static_cast<Index>(i), p, p, 0);
    }
    return bank;
}

inline void write_bank_csv(const PredictionBank& bank, const PseudoLabelSet& pls, std::ostream& out) {
    out << "index";
    for (Index k = 0; k < bank.num_classes(); ++k) out << ",p_" << k;
    out << '\n';
    for (Index i : pls.inliers) {
        out << i;
        for (Index k = 0; k < bank.num_classes(); ++k) out << ',' << format_double(bank.student(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)));
        out << '\n';
    }
}

/// Training flags bound to a scratch config; only flags given on the command
/// line are copied over the (defaults <- config file) result.
class TrainFlags {
public:
    void attach(CLI::App& app) {
        app.add_option("--config", config_path_, "JSON config (flat TrainConfig keys, or a manifest)")->check(CLI::ExistingFile);
        add(app, "--epochs", &TrainConfig::epochs, "training epochs");
        add(app, "--steps-per-epoch", &TrainConfig::steps_per_epoch, "optimization steps per epoch");
        add(app, "--P", &TrainConfig::P, "clusters per batch");
        add(app, "--K-inst", &TrainConfig::K_inst, "instances per cluster in a batch");
        add(app, "--learning-rate", &TrainConfig::learning_rate, "initial step size");
        add(app, "--lr-decay-every", &TrainConfig::lr_decay_every, "epochs between x0.1 decays (0: a third of the run)");
        add(app, "--eps-dbscan", &TrainConfig::eps_dbscan, "DBSCAN radius on Jaccard distance");
        add(app, "--min-samples", &TrainConfig::min_samples, "DBSCAN core threshold (self included)");
        add(app, "--kappa", &TrainConfig::kappa, "neighbour list length for the reciprocal graph");
        add(app, "--rho", &TrainConfig::rho, "refinement neighbourhood radius");
        add(app, "--alpha", &TrainConfig::alpha, "weight of the hard label in the refined target");
        add(app, "--lambda1", &TrainConfig::lambda1, "cross-entropy weight");
        add(app, "--lambda2", &TrainConfig::lambda2, "neighbour consistency weight (after ramp)");
        add(app, "--ramp-fraction", &TrainConfig::ramp_fraction, "share of epochs over which lambda2 and EMA ramp");
        add(app, "--ema-start", &TrainConfig::ema_start, "teacher momentum at epoch 0");
        add(app, "--ema-final", &TrainConfig::ema_final, "teacher momentum after the ramp");
        add(app, "--gamma", &TrainConfig::gamma, "memory bank momentum (weight on the old centroid)");
        add(app, "--tau", &TrainConfig::tau, "InfoNCE temperature");
        add(app, "--tau-d", &TrainConfig::tau_d, "distance-softmax temperature");
        add(app, "--aug-std", &TrainConfig::aug_std, "std of the Gaussian view perturbation");
        add(app, "--hidden-dim", &TrainConfig::hidden_dim, "encoder hidden width (0: twice the input width)");
        add(app, "--embed-dim", &TrainConfig::embed_dim, "embedding width (0: input width)");
        add(app, "--seed", &TrainConfig::seed, "RNG seed");
        add(app, "--use-refined-ce", &TrainConfig::use_refined_ce, "train on refined instead of hard labels");
        add(app, "--use-distance-weight", &TrainConfig::use_distance_weight, "distance-softmax neighbour weights");
        auto* o = app.add_option("--ncr-mode", ncr_mode_, "off, one_stream or two_stream")
                      ->check(CLI::IsMember({"off", "one_stream", "two_stream"}))
                      ->capture_default_str();
        setters_.push_back({o, [this](TrainConfig& c) { c.ncr_mode = parse_ncr_mode(ncr_mode_); }});
        auto* i = app.add_option("--init", init_, "encoder start: identity or random")
                      ->check(CLI::IsMember({"identity", "random"}))
                      ->capture_default_str();
        setters_.push_back({i, [this](TrainConfig& c) { c.init = parse_encoder_init(init_); }});
    }

    TrainConfig resolve() const {
        TrainConfig c;
        if (!config_path_.empty()) c = load_config(config_path_, c);
        for (const auto& [opt, set] : setters_) {
            if (opt->count() > 0) set(c);
        }
        c.validate();
        return c;
    }

    const std::string& config_path() const { return config_path_; }

private:
    template <typename T>
    void add(CLI::App& app, const std::string& flag, T TrainConfig::*member, const std::string& desc) {
        auto* o = app.add_option(flag, scratch_.*member, desc)->capture_default_str();
        setters_.push_back({o, [this, member](TrainConfig& c) { c.*member = scratch_.*member; }});
    }

    TrainConfig scratch_;
    std::string ncr_mode_ = to_string(TrainConfig{}.ncr_mode);
    std::string init_ = to_string(TrainConfig{}.init);
    std::string config_path_;
    std::vector<std::pair<CLI::Option*, std::function<void(TrainConfig&)>>> setters_;
};

inline ordered_json retrieval_json(const RetrievalReport& r) {
    ordered_json j;
    j["map"] = r.map;
    for (Index i = 0; i < kCmcRanks.size(); ++i) j["rank" + std::to_string(kCmcRanks[i])] = r.cmc[i];
    j["n_queries"] = r.n_queries;
    j["n_valid_queries"] = r.n_valid_queries;
    j["n_excluded_queries"] = r.n_excluded_queries;
    return j;
}

inline ordered_json opt_json(const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json(nullptr); }

/// Trains one configuration into `dir`: model files, history, clusters,
/// prediction bank, final-epoch features and manifest.
inline void check_against_data(const TrainConfig& cfg, const FeatureSet& data) {
    Index expected = data.n() / std::max<Index>(1, cfg.min_samples);
    if (data.has_truth()) expected = std::set<int>(data.true_ids.begin(), data.true_ids.end()).size();
    if (cfg.P > expected) {
        throw ConfigError("P (" + std::to_string(cfg.P) + ") exceeds the " + std::to_string(expected) +
                          " clusters the data can support");
    }
}

inline TrainResult train_into(const TrainConfig& cfg, const FeatureSet& data, const stdfs::path& dir, RunManifest manifest) {
    check_against_data(cfg, data);
    ensure_dir(dir);
    auto res = train(cfg, data);
    {
        auto out = open_out(dir / "history.csv");
        write_history_csv(res.history, out);
    }
    save_model(res.pair.student, dir / "model.ncpm");
    save_model(res.pair.teacher, dir / "teacher.ncpm");
    if (!res.history.empty()) {
        save_features(res.state.epoch_features, dir / "epoch_features.ncpl");
        auto c = open_out(dir / "clusters.csv");
        write_clusters_csv(res.state.labels, c);
        auto b = open_out(dir / "prediction_bank.csv");
        write_bank_csv(res.state.predictions, res.state.labels, b);
    }
    manifest.config = cfg;
    manifest.seed = cfg.seed;
    manifest.paths["output"] = dir.string();
    manifest.write(dir / "manifest.json");
    return res;
}

inline int dispatch(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Neighbour-consistency pseudo-label refinement toolkit", "ncplr"};
    app.set_version_flag("--version", kToolVersion);
    app.require_subcommand(1);
    std::function<void()> action;

    // synth
    auto* synth = app.add_subcommand("synth", "generate a labelled synthetic feature set");
    SyntheticSpec spec;
    std::string synth_out;
    synth->add_option("--ids", spec.num_ids, "number of identities")->capture_default_str();
    synth->add_option("--per-id", spec.points_per_id, "points per identity")->capture_default_str();
    synth->add_option("--dim", spec.dim, "feature dimension")->capture_default_str();
    synth->add_option("--std", spec.intra_std, "within-identity noise std")->capture_default_str();
    synth->add_option("--cams", spec.num_cams, "number of cameras")->capture_default_str();
    synth->add_option("--seed", spec.seed, "RNG seed")->capture_default_str();
    synth->add_option("-o,--out", synth_out, "output .ncpl path")->required();
    synth->callback([&] {
        action = [&] {
            auto fs = generate_synthetic(spec);
            save_features(fs, synth_out);
            RunManifest m;
            m.command = "synth";
            m.seed = spec.seed;
            m.paths["output"] = synth_out;
            m.extra = {{"ids", spec.num_ids}, {"per_id", spec.points_per_id}, {"dim", spec.dim},
                       {"std", spec.intra_std}, {"cams", spec.num_cams}};
            m.write(synth_out + ".manifest.json");
            out << "wrote " << fs.n() << " x " << fs.dim() << " to " << synth_out << '\n';
        };
    });

    // graph
    auto* graph = app.add_subcommand("graph", "build the reciprocal Jaccard graph and dump its edges");
    std::string data_path;
    std::string out_dir;
    Index kappa = TrainConfig{}.kappa;
    graph->add_option("--data", data_path, "input .ncpl")->required()->check(CLI::ExistingFile);
    graph->add_option("--kappa", kappa, "neighbour list length")->capture_default_str();
    graph->add_option("-o,--out", out_dir, "output directory")->required();
    graph->callback([&] {
        action = [&] {
            auto fs = load_features(data_path);
            auto g = build_affinity_graph(fs, kappa);
            ensure_dir(out_dir);
            auto f = open_out(stdfs::path(out_dir) / "graph.csv");
            write_graph_csv(g, f);
            RunManifest m;
            m.command = "graph";
            m.paths = {{"data", data_path}, {"output", out_dir}};
            m.extra = {{"kappa", kappa}, {"n", fs.n()}};
            m.write(stdfs::path(out_dir) / "manifest.json");
            out << "graph over " << fs.n() << " instances written to " << out_dir << '\n';
        };
    });

    // cluster
    auto* cluster = app.add_subcommand("cluster", "DBSCAN pseudo labels on the Jaccard graph");
    double eps = TrainConfig{}.eps_dbscan;
    Index min_samples = TrainConfig{}.min_samples;
    cluster->add_option("--data", data_path, "input .ncpl")->required()->check(CLI::ExistingFile);
    cluster->add_option("--kappa", kappa, "neighbour list length")->capture_default_str();
    cluster->add_option("--eps", eps, "DBSCAN radius")->capture_default_str();
    cluster->add_option("--min-samples", min_samples, "core threshold (self included)")->capture_default_str();
    cluster->add_option("-o,--out", out_dir, "output directory")->required();
    cluster->callback([&] {
        action = [&] {
            auto fs = load_features(data_path);
            auto pls = dbscan(build_affinity_graph(fs, std::min(kappa, fs.n())), eps, min_samples);
            ensure_dir(out_dir);
            auto f = open_out(stdfs::path(out_dir) / "clusters.csv");
            write_clusters_csv(pls, f);
            RunManifest m;
            m.command = "cluster";
            m.paths = {{"data", data_path}, {"output", out_dir}};
            m.extra = {{"kappa", kappa}, {"eps", eps}, {"min_samples", min_samples},
                       {"num_clusters", pls.num_clusters}, {"n_clustered", pls.n_clustered()}};
            if (fs.has_truth()) {
                if (auto q = cluster_quality(pls, fs.true_ids)) m.extra["ari"] = q->ari, m.extra["nmi"] = q->nmi;
            }
            m.write(stdfs::path(out_dir) / "manifest.json");
            out << pls.num_clusters << " clusters, " << pls.n_clustered() << " of " << pls.n() << " instances clustered\n";
        };
    });

    // refine
    auto* refine = app.add_subcommand("refine", "one-shot label refinement from saved clusters and predictions");
    std::string clusters_path;
    std::string bank_path;
    RefineConfig rcfg;
    std::string strategy = to_string(rcfg.strategy);
    bool dump_refined = false;
    refine->add_option("--data", data_path, "input .ncpl (graph features)")->required()->check(CLI::ExistingFile);
    refine->add_option("--clusters", clusters_path, "clusters.csv")->required()->check(CLI::ExistingFile);
    refine->add_option("--bank", bank_path, "prediction bank CSV (index,p_0,...); one-hot labels if omitted")
        ->check(CLI::ExistingFile);
    refine->add_option("--kappa", kappa, "neighbour list length")->capture_default_str();
    refine->add_option("--alpha", rcfg.alpha, "hard-label weight")->capture_default_str();
    refine->add_option("--rho", rcfg.rho, "neighbourhood radius")->capture_default_str();
    refine->add_option("--strategy", strategy, "average or distance-softmax")
        ->check(CLI::IsMember({"average", "distance-softmax"}))
        ->capture_default_str();
    refine->add_option("--tau-d", rcfg.tau_d, "distance-softmax temperature")->capture_default_str();
    refine->add_flag("--dump-refined", dump_refined, "also write refined.csv (hard label, argmax, entropy)");
    refine->add_option("-o,--out", out_dir, "output directory")->required();
    refine->callback([&] {
        action = [&] {
            rcfg.strategy = parse_weight_strategy(strategy);
            if (!(rcfg.rho > 0.0 && rcfg.rho <= 1.0)) throw ConfigError("rho must lie in (0, 1]");
            auto fs = load_features(data_path);
            auto pls = read_clusters(clusters_path, fs.n());
            auto bank = bank_path.empty() ? PredictionBank::from_labels(pls) : read_bank(bank_path, pls);
            auto g = build_affinity_graph(fs, std::min(kappa, fs.n()));
            auto refined = refine_all(pls, bank, g, rcfg);
            ensure_dir(out_dir);
            {
                auto f = open_out(stdfs::path(out_dir) / "refined_targets.csv");
                f << "index";
                for (Index k = 0; k < pls.num_clusters; ++k) f << ",q_" << k;
                f << '\n';
                for (Index r = 0; r < refined.rows.size(); ++r) {
                    f << refined.rows[r];
                    for (Eigen::Index k = 0; k < refined.targets.cols(); ++k) f << ',' << format_double(refined.targets(static_cast<Eigen::Index>(r), k));
                    f << '\n';
                }
            }
            if (dump_refined) {
                auto f = open_out(stdfs::path(out_dir) / "refined.csv");
                write_refined_csv(pls, refined, f);
            }
            RunManifest m;
            m.command = "refine";
            m.paths = {{"data", data_path}, {"clusters", clusters_path}, {"bank", bank_path}, {"output", out_dir}};
            m.extra = {{"kappa", kappa}, {"alpha", rcfg.alpha}, {"rho", rcfg.rho}, {"strategy", strategy}, {"tau_d", rcfg.tau_d}};
            if (fs.has_truth()) {
                m.extra["noise_rate_hard"] = noise_rate(pls.assignment, pls, fs.true_ids);
                m.extra["noise_rate_refined"] = noise_rate(refined.targets, refined.rows, pls, fs.true_ids);
            }
            m.write(stdfs::path(out_dir) / "manifest.json");
            out << "refined " << refined.rows.size() << " instances\n";
        };
    });

    // train
    auto* train_cmd = app.add_subcommand("train", "full training loop");
    TrainFlags train_flags;
    train_flags.attach(*train_cmd);
    train_cmd->add_option("--data", data_path, "input .ncpl")->required()->check(CLI::ExistingFile);
    train_cmd->add_option("-o,--out", out_dir, "output directory")->required();
    train_cmd->callback([&] {
        action = [&] {
            auto cfg = train_flags.resolve();
            auto fs = load_features(data_path);
            RunManifest m;
            m.command = "train";
            m.paths["data"] = data_path;
            if (!train_flags.config_path().empty()) m.paths["config"] = train_flags.config_path();
            auto res = train_into(cfg, fs, out_dir, m);
            if (!res.history.empty()) {
                const auto& last = res.history.back();
                out << "epoch " << last.epoch << ": K=" << last.num_clusters << " clustered=" << last.n_clustered;
                if (last.ari) out << " ari=" << format_double(*last.ari);
                out << '\n';
            }
        };
    });

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "retrieval and clustering metrics");
    std::string model_path;
    eval_cmd->add_option("--data", data_path, "labelled .ncpl")->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--model", model_path, "model.ncpm used to embed the data (raw features if omitted)")
        ->check(CLI::ExistingFile);
    eval_cmd->add_option("--clusters", clusters_path, "clusters.csv to score against the truth")->check(CLI::ExistingFile);
    eval_cmd->add_option("-o,--out", out_dir, "output directory")->required();
    eval_cmd->callback([&] {
        action = [&] {
            auto fs = load_features(data_path);
            if (!fs.has_truth()) throw UsageError("eval needs identities in " + data_path + ".meta.csv");
            FeatureSet feats = model_path.empty() ? fs : embed_features(load_model(model_path), fs);
            auto [q, g] = query_gallery_split(feats);
            auto rep = cmc_map(q, g);
            ordered_json j = retrieval_json(rep);
            j["protocol"] = {{"query", "first instance per identity"},
                             {"exclude_same_id_same_camera", true},
                             {"tie_break", "gallery index"},
                             {"features", model_path.empty() ? "raw" : "model"}};
            if (!clusters_path.empty()) {
                auto pls = read_clusters(clusters_path, fs.n());
                auto cq = cluster_quality(pls, fs.true_ids);
                j["cluster_quality_available"] = cq.has_value();
                j["ari"] = cq ? ordered_json(cq->ari) : ordered_json(nullptr);
                j["nmi"] = cq ? ordered_json(cq->nmi) : ordered_json(nullptr);
                j["purity"] = cq ? ordered_json(cq->purity) : ordered_json(nullptr);
                j["noise_rate"] = noise_rate(pls.assignment, pls, fs.true_ids);
            }
            ensure_dir(out_dir);
            open_out(stdfs::path(out_dir) / "eval.json") << j.dump(2) << '\n';
            RunManifest m;
            m.command = "eval";
            m.paths = {{"data", data_path}, {"model", model_path}, {"clusters", clusters_path}, {"output", out_dir}};
            m.write(stdfs::path(out_dir) / "manifest.json");
            out << "mAP " << format_double(rep.map) << " rank1 " << format_double(rep.cmc[0]) << '\n';
        };
    });

    // sweep
    auto* sweep = app.add_subcommand("sweep", "train once per value of one hyper-parameter");
    TrainFlags sweep_flags;
    sweep_flags.attach(*sweep);
    std::string param;
    std::vector<double> values;
    sweep->add_option("--data", data_path, "labelled .ncpl")->required()->check(CLI::ExistingFile);
    sweep->add_option("--param", param, "alpha, lambda1, lambda2 or rho")->required()->check(CLI::IsMember(sweep_params()));
    sweep->add_option("--values", values, "comma-separated values")->required()->delimiter(',');
    sweep->add_option("-o,--out", out_dir, "output directory")->required();
    sweep->callback([&] {
        action = [&] {
            const TrainConfig base = sweep_flags.resolve();
            auto fs = load_features(data_path);
            if (!fs.has_truth()) throw UsageError("sweep needs identities for its metrics");
            ensure_dir(out_dir);
            auto csv = open_out(stdfs::path(out_dir) / "sweep.csv");
            csv << param << ",map,rank1,ari\n";
            for (double v : values) {
                TrainConfig c = base;
                set_sweep_param(c, param, v);
                c.validate();
                auto s = summarize(train(c, fs), fs);
                csv << format_double(v) << ',' << format_double(s.map) << ',' << format_double(s.rank1) << ','
                    << (s.ari ? format_double(*s.ari) : std::string("nan")) << '\n';
            }
            RunManifest m;
            m.command = "sweep";
            m.config = base;
            m.seed = base.seed;
            m.paths = {{"data", data_path}, {"output", out_dir}};
            m.extra = {{"param", param}, {"values", values}};
            m.write(stdfs::path(out_dir) / "manifest.json");
            out << values.size() << " sweep cells written\n";
        };
    });

    // ablate
    auto* ablate = app.add_subcommand("ablate", "train the six loss variants on one seed");
    TrainFlags ablate_flags;
    ablate_flags.attach(*ablate);
    ablate->add_option("--data", data_path, "labelled .ncpl")->required()->check(CLI::ExistingFile);
    ablate->add_option("-o,--out", out_dir, "output directory")->required();
    ablate->callback([&] {
        action = [&] {
            const TrainConfig base = ablate_flags.resolve();
            auto fs = load_features(data_path);
            ensure_dir(out_dir);
            auto summary = open_out(stdfs::path(out_dir) / "summary.csv");
            summary << "variant,ari,nmi,map,rank1\n";
            for (const auto& v : ablation_variants(base)) {
                RunManifest m;
                m.command = "ablate";
                m.paths["data"] = data_path;
                m.extra["variant"] = v.name;
                auto res = train_into(v.config, fs, stdfs::path(out_dir) / v.name, m);
                auto s = summarize(res, fs);
                auto opt = [](const std::optional<double>& x) { return x ? format_double(*x) : std::string("nan"); };
                summary << v.name << ',' << opt(s.ari) << ',' << opt(s.nmi) << ',' << format_double(s.map) << ','
                        << format_double(s.rank1) << '\n';
                out << v.name << ": ari " << opt(s.ari) << " mAP " << format_double(s.map) << '\n';
            }
            RunManifest m;
            m.command = "ablate";
            m.config = base;
            m.seed = base.seed;
            m.paths = {{"data", data_path}, {"output", out_dir}};
            m.write(stdfs::path(out_dir) / "manifest.json");
        };
    });

    std::vector<const char*> argv{"ncplr"};
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err);
    }
    try {
        if (action) action();
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 3;
    }
    return 0;
}

}  // namespace ncplr::cli
