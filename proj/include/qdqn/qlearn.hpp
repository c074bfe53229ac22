#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "qdqn/model.hpp"
#include "qdqn/replay.hpp"
#include "qdqn/rng.hpp"

namespace qdqn {

enum class LossMode {
    Matrix,  // mean over all n^2 target/prediction pairs of a segment
    Td,      // diagonal only: mean per-step squared TD error
};

// With probability epsilon a uniform random action, otherwise the argmax of
// the Q-values with ties broken toward the lower index. The epsilon draw
// happens on every call so the rng stream does not depend on the branch.
inline int select_action(const ModelParams& params, std::span<const double> obs, double epsilon,
                         Rng& rng, Workspace& ws) {
    if (epsilon < 0.0 || epsilon > 1.0) {
        throw std::invalid_argument("select_action: epsilon must be in [0, 1]");
    }
    const double u = uniform_unit(rng);
    if (u < epsilon) {
        return uniform_unit(rng) < 0.5 ? 0 : 1;
    }
    const std::vector<double> q = forward(params, obs, ws);
    int best = 0;
    for (int a = 1; a < static_cast<int>(q.size()); ++a) {
        if (q[a] > q[best]) best = a;
    }
    return best;
}

inline int select_action(const ModelParams& params, std::span<const double> obs, double epsilon,
                         Rng& rng) {
    Workspace ws(params.config());
    return select_action(params, obs, epsilon, rng, ws);
}

// TD targets over a segment: v~(t) = r_t + gamma * max_a Q(s_{t+1}, a) for
// non-terminal transitions, v~ = r at done. max_q evaluates the frozen
// target network, so the targets are constants under differentiation.
inline std::vector<double> td_targets(
    const Trajectory& trajectory,
    const std::function<double(const std::array<double, 4>&)>& max_q, double gamma) {
    std::vector<double> targets(trajectory.size());
    for (std::size_t i = 0; i < trajectory.size(); ++i) {
        const Transition& t = trajectory[i];
        targets[i] = t.done ? t.reward : t.reward + gamma * max_q(t.next_state);
    }
    return targets;
}

inline std::vector<double> td_targets(const Trajectory& trajectory,
                                      const ModelParams& target_params, double gamma,
                                      Workspace& ws) {
    return td_targets(
        trajectory,
        [&](const std::array<double, 4>& next_state) {
            const std::vector<double> q = forward(target_params, next_state, ws);
            return *std::max_element(q.begin(), q.end());
        },
        gamma);
}

inline std::vector<double> td_targets(const Trajectory& trajectory,
                                      const ModelParams& target_params, double gamma) {
    Workspace ws(target_params.config());
    return td_targets(trajectory, target_params, gamma, ws);
}

namespace detail {

// Predictions q_j = Q(s_j, a_j; theta); traces kept for the backward pass.
inline std::vector<double> predictions(const Trajectory& trajectory, const ModelParams& params,
                                       Workspace& ws, std::vector<ForwardTrace>& traces) {
    traces.resize(trajectory.size());
    std::vector<double> preds(trajectory.size());
    for (std::size_t j = 0; j < trajectory.size(); ++j) {
        forward_traced(params, trajectory[j].state, ws, traces[j]);
        preds[j] = traces[j].q[trajectory[j].action];
    }
    return preds;
}

// Scalar loss from targets and predictions, plus d(loss)/d(prediction).
inline double segment_loss(std::span<const double> targets, std::span<const double> preds,
                           LossMode mode, std::vector<double>& dloss_dpred) {
    const std::size_t n = preds.size();
    dloss_dpred.assign(n, 0.0);
    double loss = 0.0;
    if (mode == LossMode::Matrix) {
        const double inv_n2 = 1.0 / (static_cast<double>(n) * static_cast<double>(n));
        double target_sum = 0.0;
        for (std::size_t p = 0; p < n; ++p) {
            target_sum += targets[p];
            for (std::size_t q = 0; q < n; ++q) {
                const double d = targets[p] - preds[q];
                loss += d * d * inv_n2;
            }
        }
        for (std::size_t q = 0; q < n; ++q) {
            dloss_dpred[q] = 2.0 * inv_n2 * (static_cast<double>(n) * preds[q] - target_sum);
        }
    } else {
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t p = 0; p < n; ++p) {
            const double d = targets[p] - preds[p];
            loss += d * d * inv_n;
            dloss_dpred[p] = 2.0 * inv_n * (preds[p] - targets[p]);
        }
    }
    return loss;
}

}  // namespace detail

// Scalar matrix loss of one trajectory segment (Matrix mode), or the
// diagonal-only per-step TD loss (Td mode).
inline double segment_loss(const Trajectory& trajectory, const ModelParams& policy,
                           const ModelParams& target, double gamma, LossMode mode,
                           Workspace& ws) {
    if (trajectory.empty()) throw std::invalid_argument("segment_loss: empty trajectory");
    const std::vector<double> targets = td_targets(trajectory, target, gamma, ws);
    std::vector<ForwardTrace> traces;
    const std::vector<double> preds = detail::predictions(trajectory, policy, ws, traces);
    std::vector<double> unused;
    return detail::segment_loss(targets, preds, mode, unused);
}

inline double matrix_loss(const Trajectory& trajectory, const ModelParams& policy,
                          const ModelParams& target, double gamma) {
    Workspace ws(policy.config());
    return segment_loss(trajectory, policy, target, gamma, LossMode::Matrix, ws);
}

// The residual matrix (targets down the rows, predictions across the
// columns) for diagnostics.
inline std::vector<std::vector<double>> loss_matrix(const Trajectory& trajectory,
                                                    const ModelParams& policy,
                                                    const ModelParams& target, double gamma) {
    Workspace ws(policy.config());
    const std::vector<double> targets = td_targets(trajectory, target, gamma, ws);
    std::vector<ForwardTrace> traces;
    const std::vector<double> preds = detail::predictions(trajectory, policy, ws, traces);
    std::vector<std::vector<double>> m(targets.size(), std::vector<double>(preds.size()));
    for (std::size_t p = 0; p < targets.size(); ++p) {
        for (std::size_t q = 0; q < preds.size(); ++q) m[p][q] = targets[p] - preds[q];
    }
    return m;
}

struct LossBreakdown {
    std::vector<double> per_trajectory;  // unweighted l_i, for priority updates
    double total = 0.0;                  // L = sum_i w_i * l_i
    std::vector<std::vector<std::vector<double>>> matrices;  // only if requested
};

// Weighted batch loss and its gradient with respect to the policy
// parameters. Targets come from the target network and are constants; the
// gradient flows only through the predictions.
inline LossBreakdown batch_loss_and_gradient(std::span<const Trajectory* const> batch,
                                             std::span<const double> weights,
                                             const ModelParams& policy, const ModelParams& target,
                                             double gamma, LossMode mode, Workspace& ws,
                                             Gradient& grad, bool keep_matrices = false) {
    if (batch.empty()) throw std::invalid_argument("batch_loss_and_gradient: empty batch");
    if (batch.size() != weights.size()) {
        throw std::invalid_argument("batch_loss_and_gradient: batch/weights size mismatch");
    }
    grad.assign(policy.param_count(), 0.0);
    LossBreakdown out;
    out.per_trajectory.assign(batch.size(), 0.0);

    // Sampling with replacement repeats trajectories; each distinct one is
    // differentiated once with its slot weights summed.
    std::vector<const Trajectory*> unique;
    std::vector<double> weight_sum;
    std::vector<std::size_t> slot_of(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        if (batch[i] == nullptr || batch[i]->empty()) {
            throw std::invalid_argument("batch_loss_and_gradient: empty trajectory");
        }
        std::size_t u = 0;
        while (u < unique.size() && unique[u] != batch[i]) ++u;
        if (u == unique.size()) {
            unique.push_back(batch[i]);
            weight_sum.push_back(0.0);
        }
        weight_sum[u] += weights[i];
        slot_of[i] = u;
    }

    std::vector<double> unique_loss(unique.size());
    std::vector<std::vector<std::vector<double>>> unique_matrix;
    if (keep_matrices) unique_matrix.resize(unique.size());

    std::vector<ForwardTrace> traces;
    std::vector<double> dloss_dpred;
    std::vector<double> upstream(policy.config().n_actions, 0.0);
    for (std::size_t u = 0; u < unique.size(); ++u) {
        const Trajectory& trajectory = *unique[u];
        const std::vector<double> targets = td_targets(trajectory, target, gamma, ws);
        const std::vector<double> preds = detail::predictions(trajectory, policy, ws, traces);
        unique_loss[u] = detail::segment_loss(targets, preds, mode, dloss_dpred);
        if (keep_matrices) {
            auto& m = unique_matrix[u];
            m.assign(targets.size(), std::vector<double>(preds.size()));
            for (std::size_t p = 0; p < targets.size(); ++p)
                for (std::size_t q = 0; q < preds.size(); ++q) m[p][q] = targets[p] - preds[q];
        }
        if (weight_sum[u] == 0.0) continue;
        for (std::size_t j = 0; j < trajectory.size(); ++j) {
            if (dloss_dpred[j] == 0.0) continue;
            std::fill(upstream.begin(), upstream.end(), 0.0);
            upstream[trajectory[j].action] = dloss_dpred[j];
            backward_accumulate(policy, trajectory[j].state, traces[j], upstream, weight_sum[u],
                                ws, grad);
        }
    }
    for (std::size_t i = 0; i < batch.size(); ++i) {
        out.per_trajectory[i] = unique_loss[slot_of[i]];
        out.total += weights[i] * out.per_trajectory[i];
        if (keep_matrices) out.matrices.push_back(unique_matrix[slot_of[i]]);
    }
    return out;
}

// epsilon' = max(epsilon * decay, floor); defaults from the training setup.
inline double decay_epsilon(double epsilon, double decay = 0.9999, double floor = 0.001) {
    return std::max(epsilon * decay, floor);
}

}  // namespace qdqn
