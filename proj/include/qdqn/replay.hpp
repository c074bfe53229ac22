#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "qdqn/rng.hpp"

namespace qdqn {

struct Transition {
    std::array<double, 4> state{};
    int action = 0;  // 0 or 1
    double reward = 0.0;
    std::array<double, 4> next_state{};
    bool done = false;
};

// A contiguous segment of at most S transitions from one episode. The done
// flag, if set, must sit on the last element.
using Trajectory = std::vector<Transition>;

struct SampleBatch {
    std::vector<const Trajectory*> trajectories;
    std::vector<std::uint64_t> ids;      // stable handles for update_priorities
    std::vector<double> weights;         // IS weights, normalized by batch max
};

// Per-worker prioritized replay over trajectory segments. Fixed-capacity
// FIFO ring; proportional sampling with replacement via inverse CDF over
// cumulative p^alpha. One priority per trajectory. Owned by exactly one
// worker, so no internal synchronization.
class PrioritizedMemory {
public:
    explicit PrioritizedMemory(std::size_t capacity, double per_alpha = 0.6,
                               double per_beta = 0.4)
        : capacity_(capacity), per_alpha_(per_alpha), per_beta_(per_beta) {
        if (capacity == 0) throw std::invalid_argument("PrioritizedMemory: capacity must be > 0");
        items_.reserve(capacity);
    }

    std::size_t size() const { return items_.size(); }
    std::size_t capacity() const { return capacity_; }
    double per_alpha() const { return per_alpha_; }
    double per_beta() const { return per_beta_; }
    double max_priority_seen() const { return max_priority_seen_; }

    // Inserts with priority max_priority_seen (1.0 until any update raises
    // it). A full ring evicts the oldest entry.
    std::uint64_t push(Trajectory trajectory) {
        validate(trajectory);
        const std::uint64_t id = next_id_++;
        const std::size_t slot = static_cast<std::size_t>(id % capacity_);
        const double p = max_priority_seen_;
        const double mass = std::pow(p, per_alpha_);
        if (slot < items_.size()) {
            mass_sum_ -= items_[slot].mass;
            items_[slot] = Item{std::move(trajectory), p, mass, id};
        } else {
            items_.push_back(Item{std::move(trajectory), p, mass, id});
        }
        mass_sum_ += mass;
        return id;
    }

    // Draws batch_size trajectories independently with P(i) = p_i^a / sum,
    // with replacement. Weights are ((1/N)*(1/P(i)))^b over the current size
    // N, normalized by the batch maximum.
    SampleBatch sample(std::size_t batch_size, Rng& rng) const {
        if (items_.empty()) throw std::logic_error("PrioritizedMemory::sample: memory is empty");
        if (batch_size == 0) throw std::invalid_argument("PrioritizedMemory::sample: batch_size 0");

        cumulative_.resize(items_.size());
        double acc = 0.0;
        for (std::size_t i = 0; i < items_.size(); ++i) {
            acc += items_[i].mass;
            cumulative_[i] = acc;
        }

        SampleBatch batch;
        batch.trajectories.reserve(batch_size);
        batch.ids.reserve(batch_size);
        batch.weights.resize(batch_size);
        const double n = static_cast<double>(items_.size());
        double max_w = 0.0;
        for (std::size_t b = 0; b < batch_size; ++b) {
            const double u = uniform_unit(rng) * acc;
            std::size_t lo = 0, hi = items_.size() - 1;
            while (lo < hi) {
                const std::size_t mid = (lo + hi) / 2;
                if (cumulative_[mid] > u) hi = mid; else lo = mid + 1;
            }
            const Item& item = items_[lo];
            batch.trajectories.push_back(&item.trajectory);
            batch.ids.push_back(item.id);
            const double prob = item.mass / mass_sum_;
            const double w = std::pow(1.0 / (n * prob), per_beta_);
            batch.weights[b] = w;
            max_w = std::max(max_w, w);
        }
        for (double& w : batch.weights) w /= max_w;
        return batch;
    }

    // p_i <- loss_i + 1e-6. Losses are mean squares, so negatives are
    // rejected; ids of evicted entries are rejected as stale.
    void update_priorities(std::span<const std::uint64_t> ids, std::span<const double> losses) {
        if (ids.size() != losses.size()) {
            throw std::invalid_argument("update_priorities: ids/losses size mismatch");
        }
        for (std::size_t k = 0; k < ids.size(); ++k) {
            if (!(losses[k] >= 0.0)) {
                throw std::invalid_argument("update_priorities: loss must be >= 0, got " +
                                            std::to_string(losses[k]));
            }
            const std::size_t slot = static_cast<std::size_t>(ids[k] % capacity_);
            if (slot >= items_.size() || items_[slot].id != ids[k]) {
                throw std::logic_error("update_priorities: stale id " + std::to_string(ids[k]));
            }
        }
        for (std::size_t k = 0; k < ids.size(); ++k) {
            Item& item = items_[static_cast<std::size_t>(ids[k] % capacity_)];
            const double p = losses[k] + kPriorityFloor;
            mass_sum_ -= item.mass;
            item.priority = p;
            item.mass = std::pow(p, per_alpha_);
            mass_sum_ += item.mass;
            max_priority_seen_ = std::max(max_priority_seen_, p);
        }
    }

    // Current sampling distribution; mostly for tests and diagnostics.
    std::vector<double> sampling_probabilities() const {
        std::vector<double> probs(items_.size());
        for (std::size_t i = 0; i < items_.size(); ++i) probs[i] = items_[i].mass / mass_sum_;
        return probs;
    }

    double priority_at(std::uint64_t id) const {
        const std::size_t slot = static_cast<std::size_t>(id % capacity_);
        if (slot >= items_.size() || items_[slot].id != id) {
            throw std::logic_error("priority_at: stale id");
        }
        return items_[slot].priority;
    }

    // Relative error between the cached sum of p^alpha and a recomputation.
    double mass_sum_drift() const {
        double fresh = 0.0;
        for (const Item& item : items_) fresh += std::pow(item.priority, per_alpha_);
        return std::abs(fresh - mass_sum_) / fresh;
    }

    static constexpr double kPriorityFloor = 1e-6;

    // Raw IS weight before batch normalization, for a given sampling
    // probability and memory size.
    static double is_weight(std::size_t size, double prob, double beta) {
        return std::pow(1.0 / (static_cast<double>(size) * prob), beta);
    }

private:
    struct Item {
        Trajectory trajectory;
        double priority = 0.0;
        double mass = 0.0;  // priority^per_alpha
        std::uint64_t id = 0;
    };

    static void validate(const Trajectory& trajectory) {
        if (trajectory.empty()) {
            throw std::invalid_argument("PrioritizedMemory::push: empty trajectory");
        }
        for (std::size_t i = 0; i < trajectory.size(); ++i) {
            const Transition& t = trajectory[i];
            if (t.action != 0 && t.action != 1) {
                throw std::invalid_argument("PrioritizedMemory::push: action out of range");
            }
            if (t.done && i + 1 != trajectory.size()) {
                throw std::invalid_argument("PrioritizedMemory::push: done before last transition");
            }
        }
    }

    std::size_t capacity_;
    double per_alpha_;
    double per_beta_;
    double max_priority_seen_ = 1.0;
    double mass_sum_ = 0.0;
    std::uint64_t next_id_ = 0;
    std::vector<Item> items_;
    mutable std::vector<double> cumulative_;
};

}  // namespace qdqn
