#pragma once

#include <cstdio>
#include <exception>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include <CLI11.hpp>

#include "qdqn/experiment.hpp"

namespace qdqn {

namespace detail {

inline std::string find_config_flag(int argc, const char* const* argv) {
    for (int i = 1; i < argc; ++i) {
        const std::string_view arg(argv[i]);
        if (arg == "--config" && i + 1 < argc) return argv[i + 1];
        if (arg.rfind("--config=", 0) == 0) return std::string(arg.substr(9));
    }
    return {};
}

inline void print_run_summary(const std::string& name, const RunConfig& cfg,
                              const TrainingReport& report) {
    double mean = 0.0;
    for (const EpisodeRecord& e : report.episodes) mean += e.score;
    if (!report.episodes.empty()) mean /= static_cast<double>(report.episodes.size());
    std::printf("%s: %lld episodes, %lld steps, mean score %.2f, %.1fs -> %s\n", name.c_str(),
                report.completed_episodes, report.total_steps, mean, report.wall_ms / 1000.0,
                cfg.out.c_str());
}

}  // namespace detail

// Entry point behind the qdqn binary; split out so tests can drive it.
inline int run_cli(int argc, const char* const* argv) {
    RunConfig cfg;

    // A config file supplies the baseline; explicit flags override it.
    const std::string config_path = detail::find_config_flag(argc, argv);
    if (!config_path.empty()) {
        std::ifstream f(config_path);
        if (!f) {
            std::fprintf(stderr, "cannot open config file: %s\n", config_path.c_str());
            return 2;
        }
        try {
            nlohmann::json j;
            f >> j;
            cfg = j.get<RunConfig>();
        } catch (const std::exception& e) {
            std::fprintf(stderr, "bad config file %s: %s\n", config_path.c_str(), e.what());
            return 2;
        }
    }

    CLI::App app{"QDQN-DPER trainer: asynchronous hybrid quantum-classical deep Q-learning\n"
                 "with per-worker prioritized replay on the CartPoleMod environments."};
    std::string ignored_config;
    app.add_option("--config", ignored_config, "JSON config file; flags override its values");
    app.add_option("--env", cfg.env, "environment variant")
        ->check(CLI::IsMember({"v0", "v1", "v2", "v3"}))
        ->capture_default_str();
    app.add_option("--model", cfg.model, "Q-function variant")
        ->check(CLI::IsMember({"quantum", "classical"}))
        ->capture_default_str();
    app.add_option("--per", cfg.per, "prioritized sampling (off = uniform replay)")
        ->check(CLI::IsMember({"on", "off"}))
        ->capture_default_str();
    app.add_option("--replay", cfg.replay, "replay memory (off = train on fresh segments only)")
        ->check(CLI::IsMember({"on", "off"}))
        ->capture_default_str();
    app.add_option("--loss", cfg.loss, "segment loss")
        ->check(CLI::IsMember({"matrix", "td"}))
        ->capture_default_str();
    app.add_option("--workers", cfg.workers, "parallel workers")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app.add_option("--episodes", cfg.episodes, "global episode budget T_max")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app.add_option("--seed", cfg.seed, "rng seed")->capture_default_str();
    app.add_option("--out", cfg.out, "output directory")->capture_default_str();
    app.add_option("--gamma", cfg.gamma, "discount factor")->capture_default_str();
    app.add_option("--lr", cfg.lr, "RMSprop learning rate")->capture_default_str();
    app.add_option("--capacity", cfg.replay_capacity, "replay capacity |D| in trajectories")
        ->capture_default_str();
    app.add_option("--qubits", cfg.n_qubits, "qubit count / hidden width")
        ->check(CLI::Range(1, 16))
        ->capture_default_str();
    app.add_option("--entangler", cfg.entangler, "CNOT topology")
        ->check(CLI::IsMember({"ring", "chain"}))
        ->capture_default_str();
    app.add_option("--rolling-window", cfg.rolling_window, "rolling statistics window")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app.add_option("--progress-every", cfg.progress_every,
                   "print a heartbeat every N episodes (0 = silent)")
        ->capture_default_str();
    bool grid = false;
    app.add_flag("--ablation-grid", grid,
                 "run the five-cell comparison set for --env instead of a single run");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (grid) {
            int failures = 0;
            for (const auto& [name, cell_cfg] : ablation_grid(cfg)) {
                const TrainingReport report = run_experiment(cell_cfg);
                detail::print_run_summary(name, cell_cfg, report);
                if (!report.error.empty()) {
                    std::fprintf(stderr, "%s aborted: %s\n", name.c_str(), report.error.c_str());
                    ++failures;
                }
            }
            return failures == 0 ? 0 : 1;
        }
        const ModelConfig model_cfg = to_trainer_config(cfg).model;
        std::printf("param_count: %s\n", param_count_derivation(model_cfg).c_str());
        const TrainingReport report = run_experiment(cfg);
        detail::print_run_summary("run", cfg, report);
        if (!report.error.empty()) {
            std::fprintf(stderr, "aborted: %s\n", report.error.c_str());
            return 1;
        }
        return 0;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}

}  // namespace qdqn
