#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "qdqn/rng.hpp"
#include "qdqn/statevector.hpp"

namespace qdqn {

enum class ModelVariant { Quantum, Classical };
enum class Entangler { Ring, Chain };

// Architecture of the Q-function approximator. The quantum variant is a
// dressed VQC: linear pre-layer (obs_dim -> n_qubits), angle encoding,
// n_layers variational blocks, Pauli-Z readout, linear post-layer
// (n_qubits -> n_actions). The classical variant swaps the circuit for a
// single n_qubits x n_qubits layer and uses tanh after the pre and mid
// layers so the two models have comparable nonlinearity.
struct ModelConfig {
    ModelVariant variant = ModelVariant::Quantum;
    int n_qubits = 8;  // also the hidden width of the classical variant
    int n_layers = 2;
    int obs_dim = 4;
    int n_actions = 2;
    Entangler entangler = Entangler::Ring;
};

// All trainable parameters, stored flat. The flat order is the contract for
// the optimizer, gradients, and the checkpoint file:
//   pre_weights (n_qubits x obs_dim, row-major), pre_bias,
//   quantum_params (layer x qubit x {alpha,beta,gamma})   [Quantum]
//   mid_weights (n_qubits x n_qubits, row-major), mid_bias [Classical]
//   post_weights (n_actions x n_qubits, row-major), post_bias
class ModelParams {
public:
    ModelParams() : ModelParams(ModelConfig{}) {}

    explicit ModelParams(const ModelConfig& cfg) : cfg_(cfg) {
        const std::size_t h = static_cast<std::size_t>(cfg.n_qubits);
        const std::size_t o = static_cast<std::size_t>(cfg.obs_dim);
        const std::size_t a = static_cast<std::size_t>(cfg.n_actions);
        pre_w_off_ = 0;
        pre_b_off_ = h * o;
        mid_off_ = pre_b_off_ + h;
        if (cfg.variant == ModelVariant::Quantum) {
            post_w_off_ = mid_off_ + quantum_param_count();
        } else {
            mid_b_off_ = mid_off_ + h * h;
            post_w_off_ = mid_b_off_ + h;
        }
        post_b_off_ = post_w_off_ + a * h;
        flat_.assign(post_b_off_ + a, 0.0);
    }

    // Classical weights ~ U(-1/sqrt(fan_in), +1/sqrt(fan_in)), quantum
    // angles ~ U(-pi, pi), biases zero.
    static ModelParams init(const ModelConfig& cfg, Rng& rng) {
        ModelParams p(cfg);
        const double pre_bound = 1.0 / std::sqrt(static_cast<double>(cfg.obs_dim));
        const double hid_bound = 1.0 / std::sqrt(static_cast<double>(cfg.n_qubits));
        for (int i = 0; i < cfg.n_qubits; ++i)
            for (int j = 0; j < cfg.obs_dim; ++j)
                p.pre_w(i, j) = uniform_in(rng, -pre_bound, pre_bound);
        if (cfg.variant == ModelVariant::Quantum) {
            for (int l = 0; l < cfg.n_layers; ++l)
                for (int q = 0; q < cfg.n_qubits; ++q)
                    for (int k = 0; k < 3; ++k)
                        p.qp(l, q, k) = uniform_in(rng, -std::numbers::pi, std::numbers::pi);
        } else {
            for (int i = 0; i < cfg.n_qubits; ++i)
                for (int j = 0; j < cfg.n_qubits; ++j)
                    p.mid_w(i, j) = uniform_in(rng, -hid_bound, hid_bound);
        }
        for (int a = 0; a < cfg.n_actions; ++a)
            for (int j = 0; j < cfg.n_qubits; ++j)
                p.post_w(a, j) = uniform_in(rng, -hid_bound, hid_bound);
        return p;
    }

    const ModelConfig& config() const { return cfg_; }

    std::size_t param_count() const { return flat_.size(); }
    std::size_t quantum_param_count() const {
        if (cfg_.variant != ModelVariant::Quantum) return 0;
        return static_cast<std::size_t>(cfg_.n_layers) * cfg_.n_qubits * 3;
    }

    std::span<double> flat() { return flat_; }
    std::span<const double> flat() const { return flat_; }

    void flat_assign(std::span<const double> values) {
        if (values.size() != flat_.size()) {
            throw std::invalid_argument("ModelParams::flat_assign: size mismatch");
        }
        std::copy(values.begin(), values.end(), flat_.begin());
    }

    bool all_finite() const {
        return std::all_of(flat_.begin(), flat_.end(), [](double v) { return std::isfinite(v); });
    }

    // Field accessors into the flat vector.
    double& pre_w(int i, int j) { return flat_[pre_w_off_ + i * cfg_.obs_dim + j]; }
    double pre_w(int i, int j) const { return flat_[pre_w_off_ + i * cfg_.obs_dim + j]; }
    double& pre_b(int i) { return flat_[pre_b_off_ + i]; }
    double pre_b(int i) const { return flat_[pre_b_off_ + i]; }
    double& qp(int layer, int qubit, int k) { return flat_[qp_index(layer, qubit, k)]; }
    double qp(int layer, int qubit, int k) const { return flat_[qp_index(layer, qubit, k)]; }
    double& mid_w(int i, int j) { return flat_[mid_off_ + i * cfg_.n_qubits + j]; }
    double mid_w(int i, int j) const { return flat_[mid_off_ + i * cfg_.n_qubits + j]; }
    double& mid_b(int i) { return flat_[mid_b_off_ + i]; }
    double mid_b(int i) const { return flat_[mid_b_off_ + i]; }
    double& post_w(int a, int j) { return flat_[post_w_off_ + a * cfg_.n_qubits + j]; }
    double post_w(int a, int j) const { return flat_[post_w_off_ + a * cfg_.n_qubits + j]; }
    double& post_b(int a) { return flat_[post_b_off_ + a]; }
    double post_b(int a) const { return flat_[post_b_off_ + a]; }

    // Flat indices, for gradient assembly and error reporting.
    std::size_t pre_w_index(int i, int j) const { return pre_w_off_ + i * cfg_.obs_dim + j; }
    std::size_t pre_b_index(int i) const { return pre_b_off_ + i; }
    std::size_t qp_index(int layer, int qubit, int k) const {
        return mid_off_ + (static_cast<std::size_t>(layer) * cfg_.n_qubits + qubit) * 3 + k;
    }
    std::size_t mid_w_index(int i, int j) const { return mid_off_ + i * cfg_.n_qubits + j; }
    std::size_t mid_b_index(int i) const { return mid_b_off_ + i; }
    std::size_t post_w_index(int a, int j) const { return post_w_off_ + a * cfg_.n_qubits + j; }
    std::size_t post_b_index(int a) const { return post_b_off_ + a; }

private:
    ModelConfig cfg_;
    std::vector<double> flat_;
    std::size_t pre_w_off_ = 0, pre_b_off_ = 0, mid_off_ = 0, mid_b_off_ = 0;
    std::size_t post_w_off_ = 0, post_b_off_ = 0;
};

// Deep copy of src into dst; used for the target-network update.
inline void copy_into(const ModelParams& src, ModelParams& dst) { dst = src; }

using Gradient = std::vector<double>;

// Intermediate values of one forward pass, reused by the backward pass and
// by loss code that needs the Q-values.
struct ForwardTrace {
    std::vector<double> pre_out;  // pre-layer output, length n_qubits
    std::vector<double> ty, tz;   // encoding angles (Quantum)
    std::vector<double> h1;      // tanh(pre_out) (Classical)
    std::vector<double> hidden;  // post-layer input: <Z> readouts or tanh(mid)
    std::vector<double> q;       // Q-values, length n_actions
};

// Scratch buffers for circuit evaluation. Not thread-safe; use one per
// worker. All statevectors are allocated once and reused.
struct Workspace {
    explicit Workspace(const ModelConfig& cfg)
        : state(scratch_qubits(cfg)),
          stage_enc(scratch_qubits(cfg)),
          stage_ring(static_cast<std::size_t>(std::max(cfg.n_layers, 1)),
                     StateVector(scratch_qubits(cfg))),
          stage_rots(static_cast<std::size_t>(std::max(cfg.n_layers, 1)),
                     StateVector(scratch_qubits(cfg))),
          hole(static_cast<std::size_t>(scratch_qubits(cfg)), StateVector(scratch_qubits(cfg))),
          wtab(std::size_t{1} << scratch_qubits(cfg), 0.0) {}

    static int scratch_qubits(const ModelConfig& cfg) {
        return cfg.variant == ModelVariant::Quantum ? cfg.n_qubits : 1;
    }

    StateVector state;
    StateVector stage_enc;
    std::vector<StateVector> stage_ring;
    std::vector<StateVector> stage_rots;
    std::vector<StateVector> hole;  // per qubit: one layer's rotations with that qubit left out
    std::vector<double> wtab;
    std::vector<double> scratch_h;
};

namespace detail {

// Fused encoding gate Rz(tz) * Ry(ty) * H on one qubit.
inline void apply_encoding_gate(StateVector& s, int qubit, double ty, double tz) {
    constexpr double inv_sqrt2 = 0.7071067811865475244;
    const double c = std::cos(0.5 * ty) * inv_sqrt2;
    const double d = std::sin(0.5 * ty) * inv_sqrt2;
    const std::complex<double> p0{std::cos(0.5 * tz), -std::sin(0.5 * tz)};
    const std::complex<double> p1 = std::conj(p0);
    s.apply_1q(qubit, (c - d) * p0, (c + d) * p0, (c + d) * p1, (d - c) * p1);
}

inline void apply_entangler(StateVector& s, Entangler topology) {
    const int n = s.n_qubits();
    for (int q = 0; q + 1 < n; ++q) s.cnot(q, q + 1);
    if (topology == Entangler::Ring && n > 1) s.cnot(n - 1, 0);
}

inline void apply_rot_layer(StateVector& s, const ModelParams& p, int layer, int shifted_qubit = -1,
                            int shifted_k = -1, double delta = 0.0) {
    for (int q = 0; q < p.config().n_qubits; ++q) {
        double a = p.qp(layer, q, 0);
        double b = p.qp(layer, q, 1);
        double g = p.qp(layer, q, 2);
        if (q == shifted_qubit) {
            if (shifted_k == 0) a += delta;
            if (shifted_k == 1) b += delta;
            if (shifted_k == 2) g += delta;
        }
        s.rot(q, a, b, g);
    }
}

inline double weighted_expectation(const StateVector& s, const std::vector<double>& wtab) {
    double acc = 0.0;
    const auto amps = s.amplitudes();
    for (std::size_t i = 0; i < amps.size(); ++i) acc += std::norm(amps[i]) * wtab[i];
    return acc;
}

}  // namespace detail

// Encoding angle maps: ty = arctan(x), tz = arctan(x^2).
inline void encode_angles(std::span<const double> pre_out, std::vector<double>& ty,
                          std::vector<double>& tz) {
    ty.resize(pre_out.size());
    tz.resize(pre_out.size());
    for (std::size_t i = 0; i < pre_out.size(); ++i) {
        if (!std::isfinite(pre_out[i])) {
            throw std::domain_error("encode_angles: non-finite pre-layer output");
        }
        ty[i] = std::atan(pre_out[i]);
        tz[i] = std::atan(pre_out[i] * pre_out[i]);
    }
}

// Runs the circuit for the given variational parameters and encoding angles
// and fills out_h with the n_qubits Pauli-Z expectations. Also leaves the
// stage states (after encoding, after each entangler, after each rotation
// layer) in ws for the parameter-shift evaluations.
inline void quantum_forward(const ModelParams& params, std::span<const double> ty,
                            std::span<const double> tz, Workspace& ws, double* out_h) {
    const ModelConfig& cfg = params.config();
    ws.state.reset_zero();
    for (int q = 0; q < cfg.n_qubits; ++q) detail::apply_encoding_gate(ws.state, q, ty[q], tz[q]);
    ws.stage_enc = ws.state;
    for (int l = 0; l < cfg.n_layers; ++l) {
        detail::apply_entangler(ws.state, cfg.entangler);
        ws.stage_ring[l] = ws.state;
        detail::apply_rot_layer(ws.state, params, l);
        ws.stage_rots[l] = ws.state;
    }
    ws.state.expect_z_all(out_h);
}

inline std::vector<double> quantum_forward(const ModelParams& params, std::span<const double> ty,
                                           std::span<const double> tz) {
    Workspace ws(params.config());
    std::vector<double> h(params.config().n_qubits);
    quantum_forward(params, ty, tz, ws, h.data());
    return h;
}

inline void forward_traced(const ModelParams& params, std::span<const double> obs,
                           Workspace& ws, ForwardTrace& trace) {
    const ModelConfig& cfg = params.config();
    if (static_cast<int>(obs.size()) != cfg.obs_dim) {
        throw std::invalid_argument("forward: observation dimension mismatch");
    }
    for (double v : obs) {
        if (!std::isfinite(v)) throw std::domain_error("forward: non-finite observation");
    }
    const int h = cfg.n_qubits;
    trace.pre_out.resize(h);
    for (int i = 0; i < h; ++i) {
        double acc = params.pre_b(i);
        for (int j = 0; j < cfg.obs_dim; ++j) acc += params.pre_w(i, j) * obs[j];
        trace.pre_out[i] = acc;
    }
    if (cfg.variant == ModelVariant::Quantum) {
        encode_angles(trace.pre_out, trace.ty, trace.tz);
        trace.hidden.resize(h);
        quantum_forward(params, trace.ty, trace.tz, ws, trace.hidden.data());
    } else {
        trace.h1.resize(h);
        for (int i = 0; i < h; ++i) trace.h1[i] = std::tanh(trace.pre_out[i]);
        trace.hidden.resize(h);
        for (int i = 0; i < h; ++i) {
            double acc = params.mid_b(i);
            for (int j = 0; j < h; ++j) acc += params.mid_w(i, j) * trace.h1[j];
            trace.hidden[i] = std::tanh(acc);
        }
    }
    trace.q.resize(cfg.n_actions);
    for (int a = 0; a < cfg.n_actions; ++a) {
        double acc = params.post_b(a);
        for (int j = 0; j < h; ++j) acc += params.post_w(a, j) * trace.hidden[j];
        trace.q[a] = acc;
    }
}

inline std::vector<double> forward(const ModelParams& params, std::span<const double> obs,
                                   Workspace& ws) {
    ForwardTrace trace;
    forward_traced(params, obs, ws, trace);
    return trace.q;
}

inline std::vector<double> forward(const ModelParams& params, std::span<const double> obs) {
    Workspace ws(params.config());
    return forward(params, obs, ws);
}

namespace detail {

inline std::complex<double> cmul(std::complex<double> a, std::complex<double> b) {
    return {a.real() * b.real() - a.imag() * b.imag(), a.real() * b.imag() + a.imag() * b.real()};
}

// Qubit state after the encoding gate: column 0 of Rz(tz) * Ry(ty) * H.
inline std::pair<std::complex<double>, std::complex<double>> encoding_qubit_state(double ty,
                                                                                  double tz) {
    constexpr double inv_sqrt2 = 0.7071067811865475244;
    const double c = std::cos(0.5 * ty) * inv_sqrt2;
    const double d = std::sin(0.5 * ty) * inv_sqrt2;
    const std::complex<double> p0{std::cos(0.5 * tz), -std::sin(0.5 * tz)};
    return {(c - d) * p0, (c + d) * std::conj(p0)};
}

// One parameter-shift evaluation: value of sum_j g_h[j] * <Z_j> with a
// single circuit parameter shifted by delta. Each value equals a full run
// of the shifted circuit; shared prefixes are cached, which changes nothing
// but the cost. Rotation shifts reuse build_holes(layer): the layer's ring
// state with the other qubits' rotations already applied (disjoint
// single-qubit gates commute). Encoding shifts rebuild the product state
// after the encoding block directly from the per-qubit amplitudes.
struct ShiftEvaluator {
    const ModelParams& params;
    std::span<const double> ty;
    std::span<const double> tz;
    Workspace& ws;

    void build_holes(int layer) const {
        const ModelConfig& cfg = params.config();
        for (int q = 0; q < cfg.n_qubits; ++q) {
            ws.hole[q] = ws.stage_ring[layer];
            for (int j = 0; j < cfg.n_qubits; ++j) {
                if (j != q) {
                    ws.hole[q].rot(j, params.qp(layer, j, 0), params.qp(layer, j, 1),
                                   params.qp(layer, j, 2));
                }
            }
        }
    }

    // Requires build_holes(layer) to have run for this layer.
    double rot_shift(int layer, int qubit, int k, double delta) const {
        const ModelConfig& cfg = params.config();
        ws.state = ws.hole[qubit];
        double a = params.qp(layer, qubit, 0);
        double b = params.qp(layer, qubit, 1);
        double g = params.qp(layer, qubit, 2);
        (k == 0 ? a : k == 1 ? b : g) += delta;
        ws.state.rot(qubit, a, b, g);
        for (int l = layer + 1; l < cfg.n_layers; ++l) {
            apply_entangler(ws.state, cfg.entangler);
            apply_rot_layer(ws.state, params, l);
        }
        return weighted_expectation(ws.state, ws.wtab);
    }

    double encoding_shift(int qubit, bool shift_tz, double delta) const {
        const ModelConfig& cfg = params.config();
        StateVector& s = ws.state;
        // product state over the encoded qubits, low qubit first
        {
            const auto v0 = encoding_qubit_state(ty[0] + ((qubit == 0 && !shift_tz) ? delta : 0.0),
                                                 tz[0] + ((qubit == 0 && shift_tz) ? delta : 0.0));
            s[0] = v0.first;
            s[1] = v0.second;
        }
        for (int q = 1; q < cfg.n_qubits; ++q) {
            const auto vq = encoding_qubit_state(ty[q] + ((qubit == q && !shift_tz) ? delta : 0.0),
                                                 tz[q] + ((qubit == q && shift_tz) ? delta : 0.0));
            const std::size_t half = std::size_t{1} << q;
            for (std::size_t i = 0; i < half; ++i) {
                const std::complex<double> base = s[i];
                s[i | half] = cmul(base, vq.second);
                s[i] = cmul(base, vq.first);
            }
        }
        for (int l = 0; l < cfg.n_layers; ++l) {
            apply_entangler(s, cfg.entangler);
            apply_rot_layer(s, params, l);
        }
        return weighted_expectation(s, ws.wtab);
    }
};

}  // namespace detail

// Accumulates scale * d<upstream, Q>/d(theta) into grad. The quantum route
// uses the parameter-shift rule (+-pi/2) for the 48 variational angles and
// the 16 encoding angles, then chains analytically through arctan and the
// pre-layer; classical layers are differentiated analytically.
inline void backward_accumulate(const ModelParams& params, std::span<const double> obs,
                                const ForwardTrace& trace, std::span<const double> upstream,
                                double scale, Workspace& ws, Gradient& grad) {
    const ModelConfig& cfg = params.config();
    if (grad.size() != params.param_count()) {
        throw std::invalid_argument("backward: gradient size mismatch");
    }
    if (static_cast<int>(upstream.size()) != cfg.n_actions) {
        throw std::invalid_argument("backward: upstream size mismatch");
    }
    const int h = cfg.n_qubits;

    // Post layer, analytic.
    for (int a = 0; a < cfg.n_actions; ++a) {
        const double u = scale * upstream[a];
        for (int j = 0; j < h; ++j) grad[params.post_w_index(a, j)] += u * trace.hidden[j];
        grad[params.post_b_index(a)] += u;
    }
    std::vector<double> g_hidden(h, 0.0);
    for (int j = 0; j < h; ++j) {
        double acc = 0.0;
        for (int a = 0; a < cfg.n_actions; ++a) acc += upstream[a] * params.post_w(a, j);
        g_hidden[j] = acc;
    }
    const bool hidden_grad_zero =
        std::all_of(g_hidden.begin(), g_hidden.end(), [](double v) { return v == 0.0; });

    std::vector<double> g_pre(h, 0.0);
    if (cfg.variant == ModelVariant::Quantum) {
        if (!hidden_grad_zero) {
            // Rebuild this observation's stage states; the workspace may
            // hold those of a different forward (targets, other batch
            // entries). This is the one unshifted circuit run per backward.
            ws.scratch_h.resize(h);
            quantum_forward(params, trace.ty, trace.tz, ws, ws.scratch_h.data());
            // Sign-weight table: wtab[i] = sum_j g_hidden[j] * (+-1 for bit j of i).
            ws.wtab[0] = 0.0;
            for (int j = 0; j < h; ++j) ws.wtab[0] += g_hidden[j];
            for (std::size_t i = 1; i < ws.wtab.size(); ++i) {
                const int b = std::countr_zero(i);
                ws.wtab[i] = ws.wtab[i ^ (std::size_t{1} << b)] - 2.0 * g_hidden[b];
            }
            detail::ShiftEvaluator ev{params, trace.ty, trace.tz, ws};
            constexpr double half_pi = std::numbers::pi / 2.0;
            for (int l = 0; l < cfg.n_layers; ++l) {
                ev.build_holes(l);
                for (int q = 0; q < h; ++q) {
                    for (int k = 0; k < 3; ++k) {
                        const double g =
                            0.5 * (ev.rot_shift(l, q, k, half_pi) - ev.rot_shift(l, q, k, -half_pi));
                        grad[params.qp_index(l, q, k)] += scale * g;
                    }
                }
            }
            for (int q = 0; q < h; ++q) {
                const double gy =
                    0.5 * (ev.encoding_shift(q, false, half_pi) - ev.encoding_shift(q, false, -half_pi));
                const double gz =
                    0.5 * (ev.encoding_shift(q, true, half_pi) - ev.encoding_shift(q, true, -half_pi));
                // ty = arctan(u), tz = arctan(u^2) with u = pre_out.
                const double u = trace.pre_out[q];
                g_pre[q] = gy / (1.0 + u * u) + gz * 2.0 * u / (1.0 + u * u * u * u);
            }
        }
    } else {
        std::vector<double> g_mid(h);
        for (int i = 0; i < h; ++i) {
            g_mid[i] = g_hidden[i] * (1.0 - trace.hidden[i] * trace.hidden[i]);
        }
        for (int i = 0; i < h; ++i) {
            const double gm = scale * g_mid[i];
            for (int j = 0; j < h; ++j) grad[params.mid_w_index(i, j)] += gm * trace.h1[j];
            grad[params.mid_b_index(i)] += gm;
        }
        for (int j = 0; j < h; ++j) {
            double acc = 0.0;
            for (int i = 0; i < h; ++i) acc += params.mid_w(i, j) * g_mid[i];
            g_pre[j] = acc * (1.0 - trace.h1[j] * trace.h1[j]);
        }
    }

    // Pre layer, analytic.
    for (int i = 0; i < h; ++i) {
        const double gp = scale * g_pre[i];
        if (gp == 0.0) continue;
        for (int j = 0; j < cfg.obs_dim; ++j) grad[params.pre_w_index(i, j)] += gp * obs[j];
        grad[params.pre_b_index(i)] += gp;
    }
}

inline Gradient backward(const ModelParams& params, std::span<const double> obs,
                         std::span<const double> upstream, Workspace& ws) {
    ForwardTrace trace;
    forward_traced(params, obs, ws, trace);
    Gradient grad(params.param_count(), 0.0);
    backward_accumulate(params, obs, trace, upstream, 1.0, ws, grad);
    return grad;
}

inline Gradient backward(const ModelParams& params, std::span<const double> obs,
                         std::span<const double> upstream) {
    Workspace ws(params.config());
    return backward(params, obs, upstream, ws);
}

// --- Checkpoint file ---------------------------------------------------
//
// Layout (all integers and floats little-endian):
//   bytes 0..7    magic "QDQNCKP1"
//   u32           format version (1)
//   u32           variant: 0 = quantum, 1 = classical
//   u32           entangler: 0 = ring, 1 = chain
//   u64           seed the run was started with
//   u32           field count
//   per field:    u32 rank, then rank x u32 dims
//   u64           parameter count
//   f64 x count   parameters in flat order

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_f64(std::string& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(out, bits);
}

struct ByteReader {
    const std::string& data;
    std::size_t pos = 0;
    std::uint32_t u32() {
        require(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        require(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data[pos + i])) << (8 * i);
        pos += 8;
        return v;
    }
    double f64() {
        const std::uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    void require(std::size_t n) const {
        if (pos + n > data.size()) throw std::runtime_error("checkpoint: truncated file");
    }
};

inline std::vector<std::vector<std::uint32_t>> field_shapes(const ModelConfig& cfg) {
    const auto h = static_cast<std::uint32_t>(cfg.n_qubits);
    const auto o = static_cast<std::uint32_t>(cfg.obs_dim);
    const auto a = static_cast<std::uint32_t>(cfg.n_actions);
    const auto l = static_cast<std::uint32_t>(cfg.n_layers);
    if (cfg.variant == ModelVariant::Quantum) {
        return {{h, o}, {h}, {l, h, 3}, {a, h}, {a}};
    }
    return {{h, o}, {h}, {h, h}, {h}, {a, h}, {a}};
}

}  // namespace detail

inline constexpr char kCheckpointMagic[9] = "QDQNCKP1";

inline void save_checkpoint(const std::string& path, const ModelParams& params,
                            std::uint64_t seed) {
    std::string out;
    out.append(kCheckpointMagic, 8);
    detail::put_u32(out, 1);
    detail::put_u32(out, params.config().variant == ModelVariant::Quantum ? 0u : 1u);
    detail::put_u32(out, params.config().entangler == Entangler::Ring ? 0u : 1u);
    detail::put_u64(out, seed);
    const auto shapes = detail::field_shapes(params.config());
    detail::put_u32(out, static_cast<std::uint32_t>(shapes.size()));
    for (const auto& shape : shapes) {
        detail::put_u32(out, static_cast<std::uint32_t>(shape.size()));
        for (std::uint32_t d : shape) detail::put_u32(out, d);
    }
    detail::put_u64(out, params.param_count());
    for (double v : params.flat()) detail::put_f64(out, v);

    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) throw std::runtime_error("checkpoint: cannot open for writing: " + path);
    file.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!file) throw std::runtime_error("checkpoint: write failed: " + path);
}

struct Checkpoint {
    ModelParams params;
    std::uint64_t seed = 0;
};

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw std::runtime_error("checkpoint: cannot open: " + path);
    std::string data((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());

    detail::ByteReader r{data};
    r.require(8);
    if (data.compare(0, 8, kCheckpointMagic, 8) != 0) {
        throw std::runtime_error("checkpoint: bad magic");
    }
    r.pos = 8;
    if (r.u32() != 1) throw std::runtime_error("checkpoint: unsupported version");
    const std::uint32_t variant = r.u32();
    if (variant > 1) throw std::runtime_error("checkpoint: unknown variant tag");
    const std::uint32_t entangler = r.u32();
    const std::uint64_t seed = r.u64();
    const std::uint32_t n_fields = r.u32();
    std::vector<std::vector<std::uint32_t>> shapes(n_fields);
    for (auto& shape : shapes) {
        shape.resize(r.u32());
        for (auto& d : shape) d = r.u32();
    }
    const std::uint64_t count = r.u64();

    ModelConfig cfg;
    cfg.variant = variant == 0 ? ModelVariant::Quantum : ModelVariant::Classical;
    cfg.entangler = entangler == 0 ? Entangler::Ring : Entangler::Chain;
    const std::size_t expected_fields = cfg.variant == ModelVariant::Quantum ? 5 : 6;
    if (shapes.size() != expected_fields || shapes[0].size() != 2) {
        throw std::runtime_error("checkpoint: unexpected field list");
    }
    cfg.n_qubits = static_cast<int>(shapes[0][0]);
    cfg.obs_dim = static_cast<int>(shapes[0][1]);
    if (cfg.variant == ModelVariant::Quantum) {
        if (shapes[2].size() != 3) throw std::runtime_error("checkpoint: bad quantum shape");
        cfg.n_layers = static_cast<int>(shapes[2][0]);
    }
    cfg.n_actions = static_cast<int>(shapes.back()[0]);

    Checkpoint ckpt{ModelParams(cfg), seed};
    if (count != ckpt.params.param_count()) {
        throw std::runtime_error("checkpoint: parameter count does not match shapes");
    }
    std::vector<double> values(count);
    for (auto& v : values) v = r.f64();
    ckpt.params.flat_assign(values);
    return ckpt;
}

}  // namespace qdqn
