#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace qdqn {

// RMSprop: v <- alpha*v + (1-alpha)*g^2, p <- p - lr*g/(sqrt(v) + eps).
// eps sits outside the square root. No momentum or weight decay; an optional
// clip-by-global-norm is available but off by default.
struct RmsConfig {
    double lr = 1e-3;
    double alpha = 0.99;  // rms_alpha; distinct from the replay per_alpha
    double eps = 1e-8;
    double clip_global_norm = 0.0;  // <= 0 disables clipping
};

class RmsState {
public:
    RmsState() = default;
    RmsState(std::size_t param_count, RmsConfig cfg = {}) : cfg_(cfg), v_(param_count, 0.0) {}

    const RmsConfig& config() const { return cfg_; }
    std::span<const double> v() const { return v_; }

    // Applies one update in place. A non-finite gradient entry rejects the
    // whole step without mutating params or v.
    void step(std::span<double> params, std::span<const double> grad) {
        if (params.size() != v_.size() || grad.size() != v_.size()) {
            throw std::invalid_argument("RmsState::step: shape mismatch");
        }
        for (std::size_t i = 0; i < grad.size(); ++i) {
            if (!std::isfinite(grad[i])) {
                throw std::domain_error("RmsState::step: non-finite gradient at parameter index " +
                                        std::to_string(i));
            }
        }
        double scale = 1.0;
        if (cfg_.clip_global_norm > 0.0) {
            double sq = 0.0;
            for (double g : grad) sq += g * g;
            const double norm = std::sqrt(sq);
            if (norm > cfg_.clip_global_norm) scale = cfg_.clip_global_norm / norm;
        }
        for (std::size_t i = 0; i < grad.size(); ++i) {
            const double g = grad[i] * scale;
            v_[i] = cfg_.alpha * v_[i] + (1.0 - cfg_.alpha) * g * g;
            params[i] -= cfg_.lr * g / (std::sqrt(v_[i]) + cfg_.eps);
        }
    }

private:
    RmsConfig cfg_;
    std::vector<double> v_;
};

}  // namespace qdqn
