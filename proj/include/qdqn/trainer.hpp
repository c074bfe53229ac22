#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "qdqn/cartpole.hpp"
#include "qdqn/model.hpp"
#include "qdqn/qlearn.hpp"
#include "qdqn/replay.hpp"
#include "qdqn/rmsprop.hpp"
#include "qdqn/rng.hpp"

namespace qdqn {

enum class ReplayMode {
    Prioritized,  // proportional sampling, per_alpha as configured
    Uniform,      // replay kept, per_alpha forced to 0 (uniform, unit weights)
    Off,          // no memory: train on each flushed segment directly
};

struct TrainerConfig {
    EnvConfig env;
    ModelConfig model;
    long long max_episodes = 50000;         // T_max, global
    int workers = 4;                        // W
    int segment_len = 5;                    // S
    int batch_size = 4;                     // B
    double gamma = 0.9;
    long long target_sync_interval = 2000;  // C, in global steps
    std::size_t replay_capacity = 10000;
    double per_alpha = 0.6;
    double per_beta = 0.4;
    ReplayMode replay = ReplayMode::Prioritized;
    LossMode loss = LossMode::Matrix;
    double epsilon_init = 1.0;
    double epsilon_decay = 0.9999;
    double epsilon_min = 0.001;
    RmsConfig optimizer;
    std::uint64_t seed = 1;
    long long progress_every = 0;  // stderr heartbeat every N episodes; 0 = silent
};

struct EpisodeRecord {
    long long global_episode = 0;  // 1-based completion index (the T counter)
    int worker_id = 0;
    double score = 0.0;
    double epsilon_at_end = 0.0;
    double wall_clock_ms = 0.0;
};

// Per-step event record for conformance tests; meaningful with one worker.
struct StepTrace {
    int worker_id = 0;
    long long worker_step = 0;  // Z after this step
    long long global_step = 0;  // Y after this step
    int action = 0;
    double reward = 0.0;
    bool episode_end = false;
    bool flushed = false;
    int flushed_len = 0;  // transitions in the segment stored at this step
    double batch_loss = 0.0;
    std::vector<std::uint64_t> sampled_ids;
    std::vector<double> trajectory_losses;
    bool target_synced = false;
    double epsilon_after = 0.0;
};

using TraceSink = std::function<void(const StepTrace&)>;

struct TrainingReport {
    std::vector<EpisodeRecord> episodes;  // the first max_episodes completions, in order
    long long total_steps = 0;            // final Y
    long long completed_episodes = 0;     // episodes recorded
    std::vector<long long> sync_multiples;
    std::vector<long long> worker_steps;  // final Z per worker
    std::vector<double> worker_final_epsilon;
    double wall_ms = 0.0;
    ModelParams final_params;
    std::string error;  // nonempty if a worker aborted; partial results above
};

namespace detail {

// Shared trainer state. policy, target, optimizer state and the sync
// register are mutated only under mu; T and Y are atomic counters.
struct GlobalState {
    explicit GlobalState(const TrainerConfig& cfg)
        : policy(cfg.model), target(cfg.model) {}

    std::mutex mu;
    ModelParams policy;
    ModelParams target;
    RmsState optimizer;
    std::atomic<long long> last_synced_multiple{0};
    std::vector<long long> sync_multiples;  // guarded by mu

    std::atomic<long long> episodes{0};  // T
    std::atomic<long long> steps{0};     // Y

    std::mutex record_mu;
    std::vector<EpisodeRecord> records;

    std::mutex trace_mu;

    std::atomic<bool> abort{false};
    std::mutex error_mu;
    std::string error;

    std::chrono::steady_clock::time_point start;
};

inline void worker_loop(const TrainerConfig& cfg, GlobalState& global, int worker_id,
                        std::vector<long long>& worker_steps,
                        std::vector<double>& worker_epsilon, const TraceSink& sink) {
    Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(worker_id)));
    Environment env(cfg.env);
    std::optional<PrioritizedMemory> memory;
    if (cfg.replay != ReplayMode::Off) {
        const double alpha = cfg.replay == ReplayMode::Uniform ? 0.0 : cfg.per_alpha;
        memory.emplace(cfg.replay_capacity, alpha, cfg.per_beta);
    }
    Workspace ws(cfg.model);
    ModelParams policy_snap(cfg.model);
    ModelParams target_snap(cfg.model);
    Gradient grad(policy_snap.param_count(), 0.0);
    Trajectory segment;
    segment.reserve(static_cast<std::size_t>(cfg.segment_len));

    double epsilon = cfg.epsilon_init;
    long long z = 0;

    while (!global.abort.load() && global.episodes.load() < cfg.max_episodes) {
        std::array<double, 4> obs = env.reset(rng);
        segment.clear();
        double score = 0.0;
        bool episode_done = false;
        bool abandoned = false;

        while (!episode_done) {
            if (global.abort.load()) {
                worker_steps[worker_id] = z;
                worker_epsilon[worker_id] = epsilon;
                return;
            }

            // Consistent snapshot of the shared networks for this step.
            {
                std::lock_guard<std::mutex> lock(global.mu);
                policy_snap = global.policy;
                target_snap = global.target;
            }

            const int action = select_action(policy_snap, obs, epsilon, rng, ws);
            const StepResult sr = env.step(action, rng);
            segment.push_back(Transition{obs, action, sr.reward, sr.observation, sr.done});
            obs = sr.observation;
            score += sr.reward;
            episode_done = sr.done;
            ++z;
            const long long y = global.steps.fetch_add(1) + 1;

            StepTrace trace;
            const bool tracing = static_cast<bool>(sink);
            if (tracing) {
                trace.worker_id = worker_id;
                trace.worker_step = z;
                trace.global_step = y;
                trace.action = action;
                trace.reward = sr.reward;
                trace.episode_end = episode_done;
            }

            if (z % cfg.segment_len == 0 || episode_done) {
                if (tracing) trace.flushed_len = static_cast<int>(segment.size());
                LossBreakdown breakdown;
                if (cfg.replay == ReplayMode::Off) {
                    const Trajectory* single[] = {&segment};
                    const double unit_weight[] = {1.0};
                    breakdown = batch_loss_and_gradient(single, unit_weight, policy_snap,
                                                        target_snap, cfg.gamma, cfg.loss, ws,
                                                        grad);
                } else {
                    memory->push(segment);
                    const SampleBatch batch =
                        memory->sample(static_cast<std::size_t>(cfg.batch_size), rng);
                    breakdown = batch_loss_and_gradient(batch.trajectories, batch.weights,
                                                        policy_snap, target_snap, cfg.gamma,
                                                        cfg.loss, ws, grad);
                    memory->update_priorities(batch.ids, breakdown.per_trajectory);
                    if (tracing) trace.sampled_ids = batch.ids;
                }
                segment.clear();
                if (tracing) {
                    trace.flushed = true;
                    trace.batch_loss = breakdown.total;
                    trace.trajectory_losses = breakdown.per_trajectory;
                }
                {
                    std::lock_guard<std::mutex> lock(global.mu);
                    global.optimizer.step(global.policy.flat(), grad);
                    if (!global.policy.all_finite()) {
                        throw std::runtime_error("worker " + std::to_string(worker_id) +
                                                 ": non-finite parameter after optimizer step");
                    }
                }
            }

            // Target sync on crossing a multiple of C. One deep copy covers
            // every multiple crossed since the register was last advanced.
            const long long multiple = y / cfg.target_sync_interval;
            if (multiple > global.last_synced_multiple.load()) {
                std::lock_guard<std::mutex> lock(global.mu);
                const long long last = global.last_synced_multiple.load();
                if (multiple > last) {
                    global.target = global.policy;
                    for (long long m = last + 1; m <= multiple; ++m) {
                        global.sync_multiples.push_back(m);
                    }
                    global.last_synced_multiple.store(multiple);
                    if (tracing) trace.target_synced = true;
                }
            }

            epsilon = decay_epsilon(epsilon, cfg.epsilon_decay, cfg.epsilon_min);
            if (tracing) {
                trace.epsilon_after = epsilon;
                std::lock_guard<std::mutex> lock(global.trace_mu);
                sink(trace);
            }

            // Once the episode budget is spent, in-flight episodes would be
            // discarded anyway; cut them short.
            if (!episode_done && global.episodes.load() >= cfg.max_episodes) {
                abandoned = true;
                break;
            }
        }

        if (!abandoned) {
            const long long t = global.episodes.fetch_add(1) + 1;
            if (t <= cfg.max_episodes) {
                const double ms = std::chrono::duration<double, std::milli>(
                                      std::chrono::steady_clock::now() - global.start)
                                      .count();
                std::lock_guard<std::mutex> lock(global.record_mu);
                global.records.push_back(EpisodeRecord{t, worker_id, score, epsilon, ms});
                if (cfg.progress_every > 0 && t % cfg.progress_every == 0) {
                    std::fprintf(stderr, "episode %lld  score %.0f  epsilon %.4f  %.1fs\n", t,
                                 score, epsilon, ms / 1000.0);
                }
            }
        }
    }

    worker_steps[worker_id] = z;
    worker_epsilon[worker_id] = epsilon;
}

}  // namespace detail

// Runs Algorithm-1-style training with cfg.workers asynchronous workers
// sharing the policy/target networks and optimizer state. On worker failure
// the remaining workers stop and the report carries the diagnostic in
// .error along with whatever was recorded.
inline TrainingReport run_training(const TrainerConfig& cfg, const TraceSink& sink = {}) {
    if (cfg.workers < 1) throw std::invalid_argument("run_training: workers must be >= 1");
    if (cfg.segment_len < 1) throw std::invalid_argument("run_training: segment_len must be >= 1");
    if (cfg.batch_size < 1) throw std::invalid_argument("run_training: batch_size must be >= 1");
    if (cfg.target_sync_interval < 1) {
        throw std::invalid_argument("run_training: target_sync_interval must be >= 1");
    }
    if (cfg.max_episodes < 1) throw std::invalid_argument("run_training: max_episodes must be >= 1");

    detail::GlobalState global(cfg);
    {
        Rng init_rng(mix_seed(cfg.seed, 0xD1CEULL));
        global.policy = ModelParams::init(cfg.model, init_rng);
        global.target = global.policy;
        global.optimizer = RmsState(global.policy.param_count(), cfg.optimizer);
    }
    global.start = std::chrono::steady_clock::now();

    std::vector<long long> worker_steps(static_cast<std::size_t>(cfg.workers), 0);
    std::vector<double> worker_epsilon(static_cast<std::size_t>(cfg.workers), cfg.epsilon_init);

    auto body = [&](int wid) {
        try {
            detail::worker_loop(cfg, global, wid, worker_steps, worker_epsilon, sink);
        } catch (const std::exception& e) {
            {
                std::lock_guard<std::mutex> lock(global.error_mu);
                if (global.error.empty()) {
                    global.error = "worker " + std::to_string(wid) + " failed: " + e.what();
                }
            }
            global.abort.store(true);
        }
    };

    if (cfg.workers == 1) {
        body(0);
    } else {
        std::vector<std::thread> threads;
        threads.reserve(static_cast<std::size_t>(cfg.workers));
        for (int wid = 0; wid < cfg.workers; ++wid) threads.emplace_back(body, wid);
        for (std::thread& t : threads) t.join();
    }

    TrainingReport report;
    report.episodes = std::move(global.records);
    std::sort(report.episodes.begin(), report.episodes.end(),
              [](const EpisodeRecord& a, const EpisodeRecord& b) {
                  return a.global_episode < b.global_episode;
              });
    report.total_steps = global.steps.load();
    report.completed_episodes = static_cast<long long>(report.episodes.size());
    report.sync_multiples = std::move(global.sync_multiples);
    report.worker_steps = std::move(worker_steps);
    report.worker_final_epsilon = std::move(worker_epsilon);
    report.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                               global.start)
                         .count();
    report.final_params = global.policy;
    report.error = global.error;
    return report;
}

}  // namespace qdqn
