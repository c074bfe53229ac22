#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "qdqn/rng.hpp"

namespace qdqn {

// CartPoleMod: cart-pole with cart/pole friction and four noise variants.
// v0: no noise; v1/v2: 5%/10% uniform actuator noise; v3: 5% uniform sensor
// noise on the observation only (termination uses the true state).
enum class EnvVariant { V0, V1, V2, V3 };

struct NoiseLevels {
    double actuator = 0.0;
    double sensor = 0.0;
};

inline NoiseLevels variant_noise_levels(EnvVariant v) {
    switch (v) {
        case EnvVariant::V0: return {0.0, 0.0};
        case EnvVariant::V1: return {0.05, 0.0};
        case EnvVariant::V2: return {0.10, 0.0};
        case EnvVariant::V3: return {0.0, 0.05};
    }
    throw std::invalid_argument("variant_noise_levels: unknown variant");
}

struct EnvState {
    double x = 0.0;          // cart position (m)
    double x_dot = 0.0;      // cart velocity (m/s)
    double theta = 0.0;      // pole angle from vertical (rad)
    double theta_dot = 0.0;  // pole angular velocity (rad/s)
};

struct EnvConfig {
    EnvVariant variant = EnvVariant::V0;
    double mu_cart = 5e-4;
    double mu_pole = 2e-6;
    double gravity = 9.8;
    double mass_cart = 1.0;
    double mass_pole = 0.1;
    double half_length = 0.5;
    double force_mag = 10.0;
    double tau = 0.02;
    double theta_limit = 15.0 * std::numbers::pi / 180.0;
    double x_limit = 2.4;
    int max_steps = 200;
    // Filled from the variant by Environment's constructor; overridable for
    // tests that stub the noise to zero.
    double actuator_noise = -1.0;
    double sensor_noise = -1.0;

    EnvConfig resolved() const {
        EnvConfig c = *this;
        const NoiseLevels levels = variant_noise_levels(variant);
        if (c.actuator_noise < 0.0) c.actuator_noise = levels.actuator;
        if (c.sensor_noise < 0.0) c.sensor_noise = levels.sensor;
        return c;
    }
};

struct Accelerations {
    double x_ddot = 0.0;
    double theta_ddot = 0.0;
};

namespace detail {
inline double sgn(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }
}

// Barto-style cart-pole dynamics with cart friction mu_c * sgn(x_dot) and
// pivot friction mu_p * theta_dot / (m_p * l).
inline Accelerations accelerations(const EnvConfig& cfg, const EnvState& s, double force) {
    const double m_p = cfg.mass_pole;
    const double l = cfg.half_length;
    const double total_mass = cfg.mass_cart + cfg.mass_pole;
    const double sin_t = std::sin(s.theta);
    const double cos_t = std::cos(s.theta);
    const double temp =
        (force + m_p * l * s.theta_dot * s.theta_dot * sin_t - cfg.mu_cart * detail::sgn(s.x_dot)) /
        total_mass;
    const double theta_ddot =
        (cfg.gravity * sin_t - cos_t * temp - cfg.mu_pole * s.theta_dot / (m_p * l)) /
        (l * (4.0 / 3.0 - m_p * cos_t * cos_t / total_mass));
    const double x_ddot = temp - m_p * l * theta_ddot * cos_t / total_mass;
    return {x_ddot, theta_ddot};
}

// One explicit Euler update; positions advance on the pre-update velocities.
inline EnvState euler_step(const EnvConfig& cfg, const EnvState& s, double force) {
    const Accelerations acc = accelerations(cfg, s, force);
    EnvState next = s;
    next.x += cfg.tau * s.x_dot;
    next.x_dot += cfg.tau * acc.x_ddot;
    next.theta += cfg.tau * s.theta_dot;
    next.theta_dot += cfg.tau * acc.theta_ddot;
    return next;
}

struct StepResult {
    EnvState state;                       // true next state
    std::array<double, 4> observation{};  // what the agent sees
    double reward = 1.0;
    bool done = false;
};

class Environment {
public:
    explicit Environment(const EnvConfig& cfg) : cfg_(cfg.resolved()) {}

    const EnvConfig& config() const { return cfg_; }
    const EnvState& state() const { return state_; }
    int steps_taken() const { return steps_; }
    bool done() const { return done_; }

    // Each component ~ U(-0.05, 0.05); draw order x, x_dot, theta, theta_dot.
    std::array<double, 4> reset(Rng& rng) {
        state_.x = uniform_in(rng, -0.05, 0.05);
        state_.x_dot = uniform_in(rng, -0.05, 0.05);
        state_.theta = uniform_in(rng, -0.05, 0.05);
        state_.theta_dot = uniform_in(rng, -0.05, 0.05);
        steps_ = 0;
        done_ = false;
        return observe(state_);
    }

    StepResult step(int action, Rng& rng) {
        if (action != 0 && action != 1) {
            throw std::invalid_argument("Environment::step: action must be 0 or 1");
        }
        if (done_) throw std::logic_error("Environment::step: episode already terminal");
        double force = action == 1 ? cfg_.force_mag : -cfg_.force_mag;
        if (cfg_.actuator_noise > 0.0) {
            force *= 1.0 + uniform_in(rng, -cfg_.actuator_noise, cfg_.actuator_noise);
        }
        state_ = euler_step(cfg_, state_, force);
        ++steps_;
        done_ = std::abs(state_.theta) > cfg_.theta_limit || std::abs(state_.x) > cfg_.x_limit ||
                steps_ >= cfg_.max_steps;

        StepResult result;
        result.state = state_;
        result.observation = observe(state_);
        if (cfg_.sensor_noise > 0.0) {
            for (double& v : result.observation) {
                v *= 1.0 + uniform_in(rng, -cfg_.sensor_noise, cfg_.sensor_noise);
            }
        }
        result.reward = 1.0;  // +1 every step, including the terminating one
        result.done = done_;
        return result;
    }

private:
    static std::array<double, 4> observe(const EnvState& s) {
        return {s.x, s.x_dot, s.theta, s.theta_dot};
    }

    EnvConfig cfg_;
    EnvState state_;
    int steps_ = 0;
    bool done_ = true;  // must reset before stepping
};

inline EnvVariant parse_variant(const std::string& name) {
    if (name == "v0") return EnvVariant::V0;
    if (name == "v1") return EnvVariant::V1;
    if (name == "v2") return EnvVariant::V2;
    if (name == "v3") return EnvVariant::V3;
    throw std::invalid_argument("unknown environment variant: " + name);
}

inline std::string variant_name(EnvVariant v) {
    switch (v) {
        case EnvVariant::V0: return "v0";
        case EnvVariant::V1: return "v1";
        case EnvVariant::V2: return "v2";
        case EnvVariant::V3: return "v3";
    }
    return "?";
}

}  // namespace qdqn
