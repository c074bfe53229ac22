// Sequential reference of the per-learner training algorithm plus the trace
// comparison machinery, shared by the unit tests and the acceptance suite.
// The reference is straight-line single-threaded code written independently
// of the trainer's orchestration; it uses the same module primitives in the
// documented order (snapshot-free, since one worker sees no concurrency).
#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "qdqn/trainer.hpp"

namespace trainer_ref {

struct TraceRow {
    long long worker_step = 0;
    int action = 0;
    bool episode_end = false;
    bool flushed = false;
    int flushed_len = 0;
    double batch_loss = 0.0;
    std::vector<std::uint64_t> sampled_ids;
    std::vector<double> trajectory_losses;
    bool synced = false;
    double epsilon_after = 0.0;
};

inline bool operator==(const TraceRow& a, const TraceRow& b) {
    return a.worker_step == b.worker_step && a.action == b.action &&
           a.episode_end == b.episode_end && a.flushed == b.flushed &&
           a.flushed_len == b.flushed_len && a.batch_loss == b.batch_loss &&
           a.sampled_ids == b.sampled_ids && a.trajectory_losses == b.trajectory_losses &&
           a.synced == b.synced && a.epsilon_after == b.epsilon_after;
}

struct ReferenceResult {
    std::vector<TraceRow> rows;
    std::vector<double> scores;
};

inline ReferenceResult reference_run(const qdqn::TrainerConfig& cfg) {
    using namespace qdqn;
    ReferenceResult out;
    Rng init_rng(mix_seed(cfg.seed, 0xD1CEULL));
    ModelParams policy = ModelParams::init(cfg.model, init_rng);
    ModelParams target = policy;
    RmsState optimizer(policy.param_count(), cfg.optimizer);

    Rng rng(mix_seed(cfg.seed, 0));
    Environment env(cfg.env);
    PrioritizedMemory memory(cfg.replay_capacity, cfg.per_alpha, cfg.per_beta);
    Workspace ws(cfg.model);
    Gradient grad(policy.param_count(), 0.0);
    Trajectory segment;

    double epsilon = cfg.epsilon_init;
    long long z = 0, y = 0, last_multiple = 0;

    for (long long episode = 0; episode < cfg.max_episodes; ++episode) {
        std::array<double, 4> obs = env.reset(rng);
        segment.clear();
        double score = 0.0;
        bool done = false;
        while (!done) {
            TraceRow row;
            const int action = select_action(policy, obs, epsilon, rng, ws);
            const StepResult sr = env.step(action, rng);
            segment.push_back(Transition{obs, action, sr.reward, sr.observation, sr.done});
            obs = sr.observation;
            score += sr.reward;
            done = sr.done;
            ++z;
            ++y;
            row.worker_step = z;
            row.action = action;
            row.episode_end = done;

            if (z % cfg.segment_len == 0 || done) {
                row.flushed = true;
                row.flushed_len = static_cast<int>(segment.size());
                memory.push(segment);
                segment.clear();
                const SampleBatch batch =
                    memory.sample(static_cast<std::size_t>(cfg.batch_size), rng);
                const LossBreakdown breakdown =
                    batch_loss_and_gradient(batch.trajectories, batch.weights, policy, target,
                                            cfg.gamma, cfg.loss, ws, grad);
                memory.update_priorities(batch.ids, breakdown.per_trajectory);
                optimizer.step(policy.flat(), grad);
                row.batch_loss = breakdown.total;
                row.sampled_ids = batch.ids;
                row.trajectory_losses = breakdown.per_trajectory;
            }
            if (y / cfg.target_sync_interval > last_multiple) {
                target = policy;
                last_multiple = y / cfg.target_sync_interval;
                row.synced = true;
            }
            epsilon = decay_epsilon(epsilon, cfg.epsilon_decay, cfg.epsilon_min);
            row.epsilon_after = epsilon;
            out.rows.push_back(row);
        }
        out.scores.push_back(score);
    }
    return out;
}

// Runs the real trainer with a trace sink and returns comparable rows.
inline std::vector<TraceRow> trainer_trace(const qdqn::TrainerConfig& cfg,
                                           qdqn::TrainingReport* report_out = nullptr) {
    std::vector<TraceRow> rows;
    const qdqn::TrainingReport report =
        qdqn::run_training(cfg, [&](const qdqn::StepTrace& t) {
            rows.push_back(TraceRow{t.worker_step, t.action, t.episode_end, t.flushed,
                                    t.flushed_len, t.batch_loss, t.sampled_ids,
                                    t.trajectory_losses, t.target_synced, t.epsilon_after});
        });
    if (report_out) *report_out = report;
    return rows;
}

}  // namespace trainer_ref
