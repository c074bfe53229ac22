#include <doctest.h>

#include <cmath>
#include <vector>

#include "qdqn/trainer.hpp"
#include "trainer_reference.hpp"

using namespace qdqn;
using trainer_ref::TraceRow;

namespace {

// Small circuit so trainer tests stay fast; the full-size model is covered
// by the model tests and the acceptance suite.
TrainerConfig small_config() {
    TrainerConfig cfg;
    cfg.model.n_qubits = 4;
    cfg.workers = 1;
    cfg.max_episodes = 10;
    cfg.replay_capacity = 64;
    cfg.target_sync_interval = 200;
    cfg.seed = 12345;
    return cfg;
}

std::vector<TraceRow> collect_trace(const TrainerConfig& cfg, TrainingReport* report_out) {
    TrainingReport report;
    std::vector<TraceRow> rows = trainer_ref::trainer_trace(cfg, &report);
    REQUIRE(report.error.empty());
    if (report_out) *report_out = report;
    return rows;
}

}  // namespace

TEST_CASE("single worker reproduces the sequential reference step for step") {
    TrainerConfig cfg = small_config();
    cfg.max_episodes = 50;

    const trainer_ref::ReferenceResult ref = trainer_ref::reference_run(cfg);
    TrainingReport report;
    const std::vector<TraceRow> got = collect_trace(cfg, &report);

    REQUIRE(got.size() == ref.rows.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
        CAPTURE(i);
        CHECK(got[i] == ref.rows[i]);
    }

    REQUIRE(report.episodes.size() == ref.scores.size());
    for (std::size_t i = 0; i < ref.scores.size(); ++i) {
        CHECK(report.episodes[i].score == ref.scores[i]);
        CHECK(report.episodes[i].global_episode == static_cast<long long>(i + 1));
        CHECK(report.episodes[i].worker_id == 0);
    }
}

TEST_CASE("same seed gives bitwise identical runs") {
    const TrainerConfig cfg = small_config();
    const TrainingReport a = run_training(cfg);
    const TrainingReport b = run_training(cfg);
    REQUIRE(a.error.empty());
    REQUIRE(a.episodes.size() == b.episodes.size());
    for (std::size_t i = 0; i < a.episodes.size(); ++i) {
        CHECK(a.episodes[i].score == b.episodes[i].score);
        CHECK(a.episodes[i].epsilon_at_end == b.episodes[i].epsilon_at_end);
    }
    for (std::size_t i = 0; i < a.final_params.param_count(); ++i) {
        CHECK(a.final_params.flat()[i] == b.final_params.flat()[i]);
    }
}

TEST_CASE("flush boundaries follow Z mod S or episode end") {
    TrainerConfig cfg = small_config();
    cfg.max_episodes = 25;
    const std::vector<TraceRow> rows = collect_trace(cfg, nullptr);

    long long last_flush_step = 0;
    for (const TraceRow& row : rows) {
        const bool expected = (row.worker_step % cfg.segment_len == 0) || row.episode_end;
        CHECK(row.flushed == expected);
        if (row.flushed) {
            CHECK(row.flushed_len == static_cast<int>(row.worker_step - last_flush_step));
            CHECK(row.flushed_len >= 1);
            CHECK(row.flushed_len <= cfg.segment_len);
            last_flush_step = row.worker_step;
        }
    }

    // an episode whose tail is shorter than S stores a short segment
    bool saw_partial_tail = false;
    for (const TraceRow& row : rows) {
        if (row.episode_end && row.flushed && row.flushed_len < cfg.segment_len) {
            saw_partial_tail = true;
        }
    }
    CHECK(saw_partial_tail);
}

TEST_CASE("episode budget is exact") {
    TrainerConfig cfg = small_config();
    cfg.max_episodes = 10;
    const TrainingReport report = run_training(cfg);
    REQUIRE(report.error.empty());
    CHECK(report.completed_episodes == 10);
    CHECK(report.episodes.size() == 10);
    for (std::size_t i = 0; i < report.episodes.size(); ++i) {
        CHECK(report.episodes[i].global_episode == static_cast<long long>(i + 1));
    }
}

TEST_CASE("multi worker run keeps counters conserved and budget exact") {
    TrainerConfig cfg = small_config();
    cfg.workers = 4;
    cfg.max_episodes = 24;
    cfg.seed = 77;
    const TrainingReport report = run_training(cfg);
    REQUIRE(report.error.empty());

    CHECK(report.episodes.size() == 24);
    long long step_sum = 0;
    for (long long s : report.worker_steps) step_sum += s;
    CHECK(report.total_steps == step_sum);

    for (const EpisodeRecord& e : report.episodes) {
        CHECK(e.worker_id >= 0);
        CHECK(e.worker_id < 4);
        CHECK(e.score >= 1.0);
    }
}

TEST_CASE("per-worker epsilon decays with its own step count only") {
    TrainerConfig cfg = small_config();
    cfg.workers = 2;
    cfg.max_episodes = 14;
    cfg.seed = 31;
    const TrainingReport report = run_training(cfg);
    REQUIRE(report.error.empty());
    REQUIRE(report.worker_steps.size() == 2);
    for (int w = 0; w < 2; ++w) {
        const double expected =
            std::max(std::pow(cfg.epsilon_decay, static_cast<double>(report.worker_steps[w])),
                     cfg.epsilon_min);
        CHECK(report.worker_final_epsilon[w] == doctest::Approx(expected).epsilon(1e-9));
    }
}

TEST_CASE("target sync fires exactly once per crossed multiple under stress") {
    TrainerConfig cfg = small_config();
    cfg.workers = 8;
    cfg.max_episodes = 150;
    cfg.target_sync_interval = 100;
    cfg.seed = 5;
    const TrainingReport report = run_training(cfg);
    REQUIRE(report.error.empty());

    const long long expected_count = report.total_steps / cfg.target_sync_interval;
    REQUIRE(static_cast<long long>(report.sync_multiples.size()) == expected_count);
    for (long long i = 0; i < expected_count; ++i) {
        CHECK(report.sync_multiples[static_cast<std::size_t>(i)] == i + 1);
    }
}

TEST_CASE("replay off trains on each flushed segment") {
    TrainerConfig cfg = small_config();
    cfg.replay = ReplayMode::Off;
    cfg.max_episodes = 6;
    std::vector<TraceRow> rows = collect_trace(cfg, nullptr);
    for (const TraceRow& row : rows) {
        if (row.flushed) {
            CHECK(row.sampled_ids.empty());            // no memory involved
            CHECK(row.trajectory_losses.size() == 1);  // the fresh segment
        }
    }
}

TEST_CASE("uniform replay mode forces alpha to zero") {
    TrainerConfig cfg = small_config();
    cfg.replay = ReplayMode::Uniform;
    cfg.max_episodes = 8;
    const TrainingReport report = run_training(cfg);
    CHECK(report.error.empty());
    CHECK(report.completed_episodes == 8);
}

TEST_CASE("worker failure aborts with a diagnostic") {
    TrainerConfig cfg = small_config();
    cfg.optimizer.lr = std::numeric_limits<double>::quiet_NaN();
    cfg.max_episodes = 50;
    const TrainingReport report = run_training(cfg);
    CHECK(!report.error.empty());
    CHECK(report.error.find("worker") != std::string::npos);
}

TEST_CASE("invalid configurations are rejected") {
    TrainerConfig cfg = small_config();
    cfg.workers = 0;
    CHECK_THROWS_AS(run_training(cfg), std::invalid_argument);
    cfg = small_config();
    cfg.segment_len = 0;
    CHECK_THROWS_AS(run_training(cfg), std::invalid_argument);
    cfg = small_config();
    cfg.max_episodes = 0;
    CHECK_THROWS_AS(run_training(cfg), std::invalid_argument);
}
