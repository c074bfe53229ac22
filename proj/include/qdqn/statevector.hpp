#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace qdqn {

// Dense statevector over n qubits. Qubit 0 is the least significant bit of
// the basis-state index. Gates are applied in place over strided amplitude
// pairs; no full-size gate matrix is ever built.
class StateVector {
public:
    using Complex = std::complex<double>;

    static constexpr int kMaxQubits = 16;

    explicit StateVector(int n_qubits) {
        if (n_qubits < 1 || n_qubits > kMaxQubits) {
            throw std::invalid_argument("StateVector: n_qubits must be in [1, 16], got " +
                                        std::to_string(n_qubits));
        }
        n_qubits_ = n_qubits;
        amps_.assign(std::size_t{1} << n_qubits, Complex{0.0, 0.0});
        amps_[0] = Complex{1.0, 0.0};
    }

    // Back to |0...0> without reallocating.
    void reset_zero() {
        std::fill(amps_.begin(), amps_.end(), Complex{0.0, 0.0});
        amps_[0] = Complex{1.0, 0.0};
    }

    int n_qubits() const { return n_qubits_; }
    std::size_t dim() const { return amps_.size(); }

    std::span<const Complex> amplitudes() const { return amps_; }
    Complex& operator[](std::size_t i) { return amps_[i]; }
    const Complex& operator[](std::size_t i) const { return amps_[i]; }

    // Generic single-qubit gate [[m00, m01], [m10, m11]]. The complex
    // products are written out in real arithmetic; amplitudes are always
    // finite, so the library's special-value handling buys nothing here.
    void apply_1q(int qubit, Complex m00, Complex m01, Complex m10, Complex m11) {
        check_qubit(qubit);
        const double m00r = m00.real(), m00i = m00.imag();
        const double m01r = m01.real(), m01i = m01.imag();
        const double m10r = m10.real(), m10i = m10.imag();
        const double m11r = m11.real(), m11i = m11.imag();
        const std::size_t mask = std::size_t{1} << qubit;
        const std::size_t n = amps_.size();
        for (std::size_t base = 0; base < n; base += mask << 1) {
            for (std::size_t off = 0; off < mask; ++off) {
                const std::size_t i0 = base + off;
                const std::size_t i1 = i0 | mask;
                const double a0r = amps_[i0].real(), a0i = amps_[i0].imag();
                const double a1r = amps_[i1].real(), a1i = amps_[i1].imag();
                amps_[i0] = Complex{m00r * a0r - m00i * a0i + m01r * a1r - m01i * a1i,
                                    m00r * a0i + m00i * a0r + m01r * a1i + m01i * a1r};
                amps_[i1] = Complex{m10r * a0r - m10i * a0i + m11r * a1r - m11i * a1i,
                                    m10r * a0i + m10i * a0r + m11r * a1i + m11i * a1r};
            }
        }
    }

    void h(int qubit) {
        constexpr double inv_sqrt2 = 0.7071067811865475244;
        apply_1q(qubit, {inv_sqrt2, 0}, {inv_sqrt2, 0}, {inv_sqrt2, 0}, {-inv_sqrt2, 0});
    }

    // Ry(t) = [[cos t/2, -sin t/2], [sin t/2, cos t/2]]
    void ry(int qubit, double theta) {
        check_angle(theta);
        const double c = std::cos(0.5 * theta);
        const double s = std::sin(0.5 * theta);
        apply_1q(qubit, {c, 0}, {-s, 0}, {s, 0}, {c, 0});
    }

    // Rz(t) = diag(e^{-it/2}, e^{+it/2})
    void rz(int qubit, double theta) {
        check_angle(theta);
        check_qubit(qubit);
        const double pr = std::cos(0.5 * theta);
        const double pi = std::sin(0.5 * theta);
        const std::size_t mask = std::size_t{1} << qubit;
        for (std::size_t i = 0; i < amps_.size(); ++i) {
            const double ar = amps_[i].real(), ai = amps_[i].imag();
            // e^{-it/2} on bit 0, e^{+it/2} on bit 1
            const double s = (i & mask) ? pi : -pi;
            amps_[i] = Complex{pr * ar - s * ai, pr * ai + s * ar};
        }
    }

    // General rotation R(alpha, beta, gamma): Rz(alpha) first, then Ry(beta),
    // then Rz(gamma), i.e. the matrix product Rz(gamma)*Ry(beta)*Rz(alpha),
    // applied as one fused 2x2 gate.
    void rot(int qubit, double alpha, double beta, double gamma) {
        check_angle(alpha);
        check_angle(beta);
        check_angle(gamma);
        const double c = std::cos(0.5 * beta);
        const double s = std::sin(0.5 * beta);
        const double sum = 0.5 * (alpha + gamma);
        const double dif = 0.5 * (alpha - gamma);
        const Complex e_msum{std::cos(sum), -std::sin(sum)};
        const Complex e_dif{std::cos(dif), std::sin(dif)};
        apply_1q(qubit, c * e_msum, -s * e_dif, s * std::conj(e_dif), c * std::conj(e_msum));
    }

    void cnot(int control, int target) {
        check_qubit(control);
        check_qubit(target);
        if (control == target) {
            throw std::invalid_argument("StateVector::cnot: control and target must differ");
        }
        const std::size_t cmask = std::size_t{1} << control;
        const std::size_t tmask = std::size_t{1} << target;
        for (std::size_t i = 0; i < amps_.size(); ++i) {
            if ((i & cmask) && !(i & tmask)) {
                std::swap(amps_[i], amps_[i | tmask]);
            }
        }
    }

    // Exact <Z_qubit>; no shot sampling.
    double expect_z(int qubit) const {
        check_qubit(qubit);
        const std::size_t mask = std::size_t{1} << qubit;
        double acc = 0.0;
        for (std::size_t i = 0; i < amps_.size(); ++i) {
            const double p = std::norm(amps_[i]);
            acc += (i & mask) ? -p : p;
        }
        return acc;
    }

    // <Z_q> for every qubit in one pass; out must hold n_qubits() doubles.
    void expect_z_all(double* out) const {
        for (int q = 0; q < n_qubits_; ++q) out[q] = 0.0;
        for (std::size_t i = 0; i < amps_.size(); ++i) {
            const double p = std::norm(amps_[i]);
            for (int q = 0; q < n_qubits_; ++q) {
                out[q] += (i >> q) & 1 ? -p : p;
            }
        }
    }

    double norm_sq() const {
        double acc = 0.0;
        for (const Complex& a : amps_) acc += std::norm(a);
        return acc;
    }

private:
    void check_qubit(int qubit) const {
        if (qubit < 0 || qubit >= n_qubits_) {
            throw std::out_of_range("StateVector: qubit index " + std::to_string(qubit) +
                                    " out of range for " + std::to_string(n_qubits_) + " qubits");
        }
    }

    static void check_angle(double theta) {
        if (!std::isfinite(theta)) {
            throw std::domain_error("StateVector: non-finite rotation angle");
        }
    }

    int n_qubits_ = 0;
    std::vector<Complex> amps_;
};

}  // namespace qdqn
