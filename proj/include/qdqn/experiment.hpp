#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "qdqn/trainer.hpp"
#include "qdqn/version.hpp"

namespace qdqn {

// One experiment as launched from the command line or a config file. All
// hyperparameter defaults are the training setup's standard values; the
// serialized snapshot written next to the results makes a run re-runnable.
struct RunConfig {
    std::string env = "v0";          // v0 | v1 | v2 | v3
    std::string model = "quantum";   // quantum | classical
    std::string per = "on";          // on (prioritized) | off (uniform)
    std::string replay = "on";       // on | off (no memory, online segments)
    std::string loss = "matrix";     // matrix | td
    int workers = 4;
    long long episodes = 50000;
    std::uint64_t seed = 1;
    std::string out = "runs/latest";

    double lr = 1e-3;
    double rms_alpha = 0.99;
    double rms_eps = 1e-8;
    double gamma = 0.9;
    int segment_len = 5;             // S
    int batch_size = 4;              // B
    long long target_sync = 2000;    // C
    double per_alpha = 0.6;
    double per_beta = 0.4;
    std::size_t replay_capacity = 10000;
    double epsilon_init = 1.0;
    double epsilon_decay = 0.9999;
    double epsilon_min = 0.001;
    int n_qubits = 8;
    int n_layers = 2;
    std::string entangler = "ring";  // ring | chain
    int rolling_window = 5000;
    long long progress_every = 0;
};

inline void to_json(nlohmann::json& j, const RunConfig& c) {
    j = nlohmann::json{{"env", c.env},
                       {"model", c.model},
                       {"per", c.per},
                       {"replay", c.replay},
                       {"loss", c.loss},
                       {"workers", c.workers},
                       {"episodes", c.episodes},
                       {"seed", c.seed},
                       {"out", c.out},
                       {"lr", c.lr},
                       {"rms_alpha", c.rms_alpha},
                       {"rms_eps", c.rms_eps},
                       {"gamma", c.gamma},
                       {"segment_len", c.segment_len},
                       {"batch_size", c.batch_size},
                       {"target_sync", c.target_sync},
                       {"per_alpha", c.per_alpha},
                       {"per_beta", c.per_beta},
                       {"replay_capacity", c.replay_capacity},
                       {"epsilon_init", c.epsilon_init},
                       {"epsilon_decay", c.epsilon_decay},
                       {"epsilon_min", c.epsilon_min},
                       {"n_qubits", c.n_qubits},
                       {"n_layers", c.n_layers},
                       {"entangler", c.entangler},
                       {"rolling_window", c.rolling_window},
                       {"progress_every", c.progress_every},
                       {"version", kVersion}};
}

inline void from_json(const nlohmann::json& j, RunConfig& c) {
    RunConfig defaults;
    c.env = j.value("env", defaults.env);
    c.model = j.value("model", defaults.model);
    c.per = j.value("per", defaults.per);
    c.replay = j.value("replay", defaults.replay);
    c.loss = j.value("loss", defaults.loss);
    c.workers = j.value("workers", defaults.workers);
    c.episodes = j.value("episodes", defaults.episodes);
    c.seed = j.value("seed", defaults.seed);
    c.out = j.value("out", defaults.out);
    c.lr = j.value("lr", defaults.lr);
    c.rms_alpha = j.value("rms_alpha", defaults.rms_alpha);
    c.rms_eps = j.value("rms_eps", defaults.rms_eps);
    c.gamma = j.value("gamma", defaults.gamma);
    c.segment_len = j.value("segment_len", defaults.segment_len);
    c.batch_size = j.value("batch_size", defaults.batch_size);
    c.target_sync = j.value("target_sync", defaults.target_sync);
    c.per_alpha = j.value("per_alpha", defaults.per_alpha);
    c.per_beta = j.value("per_beta", defaults.per_beta);
    c.replay_capacity = j.value("replay_capacity", defaults.replay_capacity);
    c.epsilon_init = j.value("epsilon_init", defaults.epsilon_init);
    c.epsilon_decay = j.value("epsilon_decay", defaults.epsilon_decay);
    c.epsilon_min = j.value("epsilon_min", defaults.epsilon_min);
    c.n_qubits = j.value("n_qubits", defaults.n_qubits);
    c.n_layers = j.value("n_layers", defaults.n_layers);
    c.entangler = j.value("entangler", defaults.entangler);
    c.rolling_window = j.value("rolling_window", defaults.rolling_window);
    c.progress_every = j.value("progress_every", defaults.progress_every);
}

inline TrainerConfig to_trainer_config(const RunConfig& c) {
    TrainerConfig t;
    t.env.variant = parse_variant(c.env);
    if (c.model == "quantum") {
        t.model.variant = ModelVariant::Quantum;
    } else if (c.model == "classical") {
        t.model.variant = ModelVariant::Classical;
    } else {
        throw std::invalid_argument("model must be quantum or classical: " + c.model);
    }
    t.model.n_qubits = c.n_qubits;
    t.model.n_layers = c.n_layers;
    if (c.entangler == "ring") {
        t.model.entangler = Entangler::Ring;
    } else if (c.entangler == "chain") {
        t.model.entangler = Entangler::Chain;
    } else {
        throw std::invalid_argument("entangler must be ring or chain: " + c.entangler);
    }
    t.max_episodes = c.episodes;
    t.workers = c.workers;
    t.segment_len = c.segment_len;
    t.batch_size = c.batch_size;
    t.gamma = c.gamma;
    t.target_sync_interval = c.target_sync;
    t.replay_capacity = c.replay_capacity;
    t.per_alpha = c.per_alpha;
    t.per_beta = c.per_beta;
    if (c.replay == "off") {
        t.replay = ReplayMode::Off;
    } else if (c.replay == "on") {
        t.replay = c.per == "on" ? ReplayMode::Prioritized : ReplayMode::Uniform;
    } else {
        throw std::invalid_argument("replay must be on or off: " + c.replay);
    }
    if (c.per != "on" && c.per != "off") {
        throw std::invalid_argument("per must be on or off: " + c.per);
    }
    if (c.loss == "matrix") {
        t.loss = LossMode::Matrix;
    } else if (c.loss == "td") {
        t.loss = LossMode::Td;
    } else {
        throw std::invalid_argument("loss must be matrix or td: " + c.loss);
    }
    t.epsilon_init = c.epsilon_init;
    t.epsilon_decay = c.epsilon_decay;
    t.epsilon_min = c.epsilon_min;
    t.optimizer.lr = c.lr;
    t.optimizer.alpha = c.rms_alpha;
    t.optimizer.eps = c.rms_eps;
    t.seed = c.seed;
    t.progress_every = c.progress_every;
    return t;
}

// Trailing-window mean and population standard deviation per episode index.
// A window larger than the available prefix uses the whole prefix.
inline std::vector<std::pair<double, double>> rolling_stats(std::span<const double> scores,
                                                            int window) {
    if (window < 1) throw std::invalid_argument("rolling_stats: window must be >= 1");
    std::vector<std::pair<double, double>> out;
    out.reserve(scores.size());
    double sum = 0.0, sum_sq = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        sum += scores[i];
        sum_sq += scores[i] * scores[i];
        if (i >= static_cast<std::size_t>(window)) {
            const double old = scores[i - window];
            sum -= old;
            sum_sq -= old * old;
        }
        const double n = static_cast<double>(std::min<std::size_t>(i + 1, window));
        const double mean = sum / n;
        const double var = std::max(0.0, sum_sq / n - mean * mean);
        out.emplace_back(mean, std::sqrt(var));
    }
    return out;
}

// The comparison set run per environment variant: the full method, its
// no-PER and td-loss ablations, and the classical baseline with and without
// PER. Cells share the base env settings; seeds are offset per cell.
inline std::vector<std::pair<std::string, RunConfig>> ablation_grid(const RunConfig& base) {
    struct Cell {
        const char* name;
        const char* model;
        const char* per;
        const char* loss;
    };
    const Cell cells[] = {
        {"quantum_per_matrix", "quantum", "on", "matrix"},
        {"quantum_noper_matrix", "quantum", "off", "matrix"},
        {"quantum_per_td", "quantum", "on", "td"},
        {"classical_per", "classical", "on", "matrix"},
        {"classical_noper", "classical", "off", "matrix"},
    };
    std::vector<std::pair<std::string, RunConfig>> grid;
    std::uint64_t offset = 0;
    for (const Cell& cell : cells) {
        RunConfig c = base;
        c.model = cell.model;
        c.per = cell.per;
        c.loss = cell.loss;
        c.seed = base.seed + offset;
        const std::string name = base.env + "_" + cell.name;
        c.out = (std::filesystem::path(base.out) / name).string();
        grid.emplace_back(name, std::move(c));
        ++offset;
    }
    return grid;
}

namespace detail {

inline std::string format_double(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

}  // namespace detail

inline void write_episodes_csv(const std::string& path,
                               std::span<const EpisodeRecord> episodes) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << "global_episode,worker_id,score,epsilon_at_end,wall_clock_ms\n";
    for (const EpisodeRecord& e : episodes) {
        f << e.global_episode << ',' << e.worker_id << ',' << detail::format_double(e.score)
          << ',' << detail::format_double(e.epsilon_at_end) << ','
          << detail::format_double(e.wall_clock_ms) << '\n';
    }
}

inline void write_rolling_csv(const std::string& path, std::span<const double> scores,
                              int window) {
    const auto stats = rolling_stats(scores, window);
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << "episode,mean,std\n";
    for (std::size_t i = 0; i < stats.size(); ++i) {
        f << (i + 1) << ',' << detail::format_double(stats[i].first) << ','
          << detail::format_double(stats[i].second) << '\n';
    }
}

// Parameter-count line with the shape derivation, e.g.
//   106 = 8x4+8 (pre) + 2x8x3 (quantum) + 2x8+2 (post)
inline std::string param_count_derivation(const ModelConfig& cfg) {
    const ModelParams p(cfg);
    std::ostringstream os;
    os << p.param_count() << " = " << cfg.n_qubits << "x" << cfg.obs_dim << "+" << cfg.n_qubits
       << " (pre)";
    if (cfg.variant == ModelVariant::Quantum) {
        os << " + " << cfg.n_layers << "x" << cfg.n_qubits << "x3 (quantum)";
    } else {
        os << " + " << cfg.n_qubits << "x" << cfg.n_qubits << "+" << cfg.n_qubits << " (mid)";
    }
    os << " + " << cfg.n_actions << "x" << cfg.n_qubits << "+" << cfg.n_actions << " (post)";
    return os.str();
}

struct RunPaths {
    std::string episodes_csv;
    std::string rolling_csv;
    std::string summary_txt;
    std::string checkpoint_bin;
    std::string config_json;
};

inline RunPaths run_paths(const std::string& out_dir) {
    const std::filesystem::path dir(out_dir);
    return RunPaths{(dir / "episodes.csv").string(), (dir / "rolling.csv").string(),
                    (dir / "summary.txt").string(), (dir / "checkpoint.bin").string(),
                    (dir / "config.json").string()};
}

inline void write_outputs(const RunConfig& cfg, const TrainingReport& report) {
    std::filesystem::create_directories(cfg.out);
    const RunPaths paths = run_paths(cfg.out);

    {
        nlohmann::json j = cfg;
        std::ofstream f(paths.config_json, std::ios::trunc);
        if (!f) throw std::runtime_error("cannot write " + paths.config_json);
        f << j.dump(2) << '\n';
    }

    write_episodes_csv(paths.episodes_csv, report.episodes);

    std::vector<double> scores;
    scores.reserve(report.episodes.size());
    for (const EpisodeRecord& e : report.episodes) scores.push_back(e.score);
    write_rolling_csv(paths.rolling_csv, scores, cfg.rolling_window);

    save_checkpoint(paths.checkpoint_bin, report.final_params, cfg.seed);

    ModelConfig quantum_cfg = report.final_params.config();
    quantum_cfg.variant = ModelVariant::Quantum;
    ModelConfig classical_cfg = quantum_cfg;
    classical_cfg.variant = ModelVariant::Classical;

    std::ofstream f(paths.summary_txt, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + paths.summary_txt);
    f << kVersion << "\n";
    f << "env: " << cfg.env << "  model: " << cfg.model << "  per: " << cfg.per
      << "  replay: " << cfg.replay << "  loss: " << cfg.loss << "  workers: " << cfg.workers
      << "  seed: " << cfg.seed << "\n";
    f << "episodes: " << report.completed_episodes << "\n";
    f << "global steps: " << report.total_steps << "\n";
    f << "target syncs: " << report.sync_multiples.size() << "\n";
    f << "wall clock: " << std::fixed << std::setprecision(1) << report.wall_ms / 1000.0
      << " s\n";
    f.unsetf(std::ios::fixed);
    f << "param_count: " << report.final_params.param_count() << "\n";
    f << "param_count quantum variant: " << param_count_derivation(quantum_cfg) << "\n";
    f << "param_count classical variant: " << param_count_derivation(classical_cfg) << "\n";
    f << "quantum parameters in quantum variant: " << ModelParams(quantum_cfg).quantum_param_count()
      << "\n";
    if (!scores.empty()) {
        const auto stats = rolling_stats(scores, cfg.rolling_window);
        f << "final rolling mean (window " << cfg.rolling_window << "): "
          << stats.back().first << "  std: " << stats.back().second << "\n";
    }
    if (!report.error.empty()) f << "ABORTED: " << report.error << "\n";
}

// Runs one experiment and writes episodes.csv, rolling.csv, summary.txt,
// checkpoint.bin and config.json under cfg.out.
inline TrainingReport run_experiment(const RunConfig& cfg, const TraceSink& sink = {}) {
    const TrainerConfig trainer_cfg = to_trainer_config(cfg);
    TrainingReport report = run_training(trainer_cfg, sink);
    write_outputs(cfg, report);
    return report;
}

}  // namespace qdqn
