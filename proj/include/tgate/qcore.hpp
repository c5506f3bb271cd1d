#ifndef TGATE_QCORE_HPP
#define TGATE_QCORE_HPP

#include <Eigen/Dense>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <random>
#include <utility>

namespace tgate {

using cplx = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;

/// S is the fluorescing ground state, D the metastable shelved state.
enum class Spin : int { S = 0, D = 1 };

/// Two-ion spin state in the order |SS>, |SD>, |DS>, |DD>.
using SpinVector = Eigen::Vector4cd;

/// Two spin-1/2 systems coupled to one truncated harmonic mode.
///
/// Basis ordering is |s1 s2 n> with the phonon number n varying fastest:
///     index = (2*s1 + s2) * (fock_cutoff + 1) + n,   s in {S=0, D=1}.
/// Every module addresses amplitudes through index() / label().
class HilbertSpec {
public:
    explicit HilbertSpec(int fock_cutoff);

    int fock_cutoff() const noexcept {
        return fock_cutoff_;
    }
    int fock_dim() const noexcept {
        return fock_cutoff_ + 1;
    }
    int dim() const noexcept {
        return 4 * fock_dim();
    }

    std::size_t index(Spin s1, Spin s2, int n) const;

    struct Label {
        Spin s1;
        Spin s2;
        int n;
    };
    Label label(std::size_t index) const;

    bool operator==(const HilbertSpec &other) const noexcept {
        return fock_cutoff_ == other.fock_cutoff_;
    }

private:
    int fock_cutoff_;
};

/// Dense operators on the full space. Immutable once built.
struct OperatorSet {
    Matrix a;
    Matrix a_dagger;
    Matrix sigma_plus_1;
    Matrix sigma_plus_2;
    Matrix sigma_minus_1;
    Matrix sigma_minus_2;
    Matrix identity;
};

std::pair<HilbertSpec, OperatorSet> build_space(int fock_cutoff);

class QuantumState {
public:
    QuantumState(HilbertSpec spec, Vector amplitudes);

    static QuantumState basis(const HilbertSpec &spec, Spin s1, Spin s2, int n);

    /// Spin state tensored with the Fock state |n>.
    static QuantumState product(const HilbertSpec &spec, const SpinVector &spin, int n);

    const HilbertSpec &spec() const noexcept {
        return spec_;
    }
    const Vector &amplitudes() const noexcept {
        return amplitudes_;
    }
    Vector &amplitudes() noexcept {
        return amplitudes_;
    }

    cplx amplitude(Spin s1, Spin s2, int n) const {
        return amplitudes_[static_cast<Eigen::Index>(spec_.index(s1, s2, n))];
    }

    double norm() const {
        return amplitudes_.norm();
    }
    void normalize();

private:
    HilbertSpec spec_;
    Vector amplitudes_;
};

/// P(n > n_max) for a thermal distribution with mean occupation nbar.
double thermal_tail_probability(double nbar, int fock_cutoff);

/// Draws a Fock number from the geometric (thermal) distribution with mean
/// nbar. Throws cutoff-too-small when the truncated tail exceeds 1e-3.
int sample_thermal_fock(double nbar, int fock_cutoff, std::mt19937_64 &rng);

QuantumState initial_state(const HilbertSpec &spec, double nbar, std::uint64_t seed);

struct Populations {
    double p0 = 0.0;  // |DD>, no bright ion
    double p1 = 0.0;  // one bright ion
    double p2 = 0.0;  // |SS>, both bright
};

Populations populations(const QuantumState &state);

/// Spin density matrix with the motional mode traced out.
Eigen::Matrix4cd reduced_spin_density(const QuantumState &state);

/// <target| rho_spin |target>.
double overlap_fidelity(const QuantumState &state, const SpinVector &target);

/// (|SS> - i|DD>)/sqrt(2).
SpinVector bell_target();

}  // namespace tgate

#endif  // TGATE_QCORE_HPP
