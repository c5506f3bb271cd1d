#include "tgate/qcore.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tgate/error.hpp"

namespace tgate {

HilbertSpec::HilbertSpec(int fock_cutoff) : fock_cutoff_(fock_cutoff) {
    if (fock_cutoff < 2) {
        throw Error(ErrorKind::InvalidArgument,
                    "fock cutoff must be >= 2, got " + std::to_string(fock_cutoff));
    }
}

std::size_t HilbertSpec::index(Spin s1, Spin s2, int n) const {
    if (n < 0 || n > fock_cutoff_) {
        throw Error(ErrorKind::OutOfRange, "phonon number " + std::to_string(n) + " outside [0, " +
                                               std::to_string(fock_cutoff_) + "]");
    }
    auto block = 2 * static_cast<int>(s1) + static_cast<int>(s2);
    return static_cast<std::size_t>(block * fock_dim() + n);
}

HilbertSpec::Label HilbertSpec::label(std::size_t index) const {
    if (index >= static_cast<std::size_t>(dim())) {
        throw Error(ErrorKind::OutOfRange, "basis index " + std::to_string(index) + " >= dimension");
    }
    int block = static_cast<int>(index) / fock_dim();
    int n = static_cast<int>(index) % fock_dim();
    return {static_cast<Spin>(block / 2), static_cast<Spin>(block % 2), n};
}

std::pair<HilbertSpec, OperatorSet> build_space(int fock_cutoff) {
    HilbertSpec spec(fock_cutoff);
    int nf = spec.fock_dim();

    Matrix a_mode = Matrix::Zero(nf, nf);
    for (int n = 1; n < nf; ++n) {
        a_mode(n - 1, n) = std::sqrt(static_cast<double>(n));
    }
    // |D><S| in the (S, D) basis.
    Eigen::Matrix2cd raise = Eigen::Matrix2cd::Zero();
    raise(1, 0) = 1.0;
    Eigen::Matrix2cd id2 = Eigen::Matrix2cd::Identity();
    Matrix idf = Matrix::Identity(nf, nf);

    // Kronecker product with the first factor slowest, matching index().
    auto kron3 = [&](const Eigen::Matrix2cd &s1, const Eigen::Matrix2cd &s2, const Matrix &m) {
        Matrix out = Matrix::Zero(spec.dim(), spec.dim());
        for (int i1 = 0; i1 < 2; ++i1)
            for (int j1 = 0; j1 < 2; ++j1)
                for (int i2 = 0; i2 < 2; ++i2)
                    for (int j2 = 0; j2 < 2; ++j2) {
                        cplx c = s1(i1, j1) * s2(i2, j2);
                        if (c == cplx(0.0)) continue;
                        out.block((2 * i1 + i2) * nf, (2 * j1 + j2) * nf, nf, nf) = c * m;
                    }
        return out;
    };

    OperatorSet ops;
    ops.a = kron3(id2, id2, a_mode);
    ops.a_dagger = ops.a.adjoint();
    ops.sigma_plus_1 = kron3(raise, id2, idf);
    ops.sigma_plus_2 = kron3(id2, raise, idf);
    ops.sigma_minus_1 = ops.sigma_plus_1.adjoint();
    ops.sigma_minus_2 = ops.sigma_plus_2.adjoint();
    ops.identity = Matrix::Identity(spec.dim(), spec.dim());
    return {spec, std::move(ops)};
}

QuantumState::QuantumState(HilbertSpec spec, Vector amplitudes)
    : spec_(spec), amplitudes_(std::move(amplitudes)) {
    if (amplitudes_.size() != spec_.dim()) {
        throw Error(ErrorKind::InvalidArgument, "amplitude vector length " +
                                                    std::to_string(amplitudes_.size()) +
                                                    " does not match dimension " +
                                                    std::to_string(spec_.dim()));
    }
}

QuantumState QuantumState::basis(const HilbertSpec &spec, Spin s1, Spin s2, int n) {
    Vector v = Vector::Zero(spec.dim());
    v[static_cast<Eigen::Index>(spec.index(s1, s2, n))] = 1.0;
    return QuantumState(spec, std::move(v));
}

QuantumState QuantumState::product(const HilbertSpec &spec, const SpinVector &spin, int n) {
    Vector v = Vector::Zero(spec.dim());
    for (int b = 0; b < 4; ++b) {
        v[static_cast<Eigen::Index>(spec.index(static_cast<Spin>(b / 2), static_cast<Spin>(b % 2), n))] =
            spin[b];
    }
    return QuantumState(spec, std::move(v));
}

void QuantumState::normalize() {
    double nrm = amplitudes_.norm();
    if (nrm == 0.0) {
        throw Error(ErrorKind::InvalidArgument, "cannot normalize the zero vector");
    }
    amplitudes_ /= nrm;
}

double thermal_tail_probability(double nbar, int fock_cutoff) {
    if (nbar <= 0.0) return 0.0;
    return std::pow(nbar / (nbar + 1.0), fock_cutoff + 1);
}

namespace {

void check_thermal(double nbar, int fock_cutoff) {
    if (!(nbar >= 0.0) || !std::isfinite(nbar)) {
        throw Error(ErrorKind::InvalidArgument, "nbar must be finite and >= 0");
    }
    double tail = thermal_tail_probability(nbar, fock_cutoff);
    if (tail > 1e-3) {
        throw Error(ErrorKind::CutoffTooSmall,
                    "thermal occupation nbar=" + std::to_string(nbar) + " leaves P(n > " +
                        std::to_string(fock_cutoff) + ") = " + std::to_string(tail) + " > 1e-3");
    }
}

}  // namespace

int sample_thermal_fock(double nbar, int fock_cutoff, std::mt19937_64 &rng) {
    check_thermal(nbar, fock_cutoff);
    if (nbar == 0.0) return 0;
    std::geometric_distribution<int> dist(1.0 / (1.0 + nbar));
    // Resample the (< 1e-3) truncated tail.
    for (;;) {
        int n = dist(rng);
        if (n <= fock_cutoff) return n;
    }
}

QuantumState initial_state(const HilbertSpec &spec, double nbar, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    int n = sample_thermal_fock(nbar, spec.fock_cutoff(), rng);
    return QuantumState::basis(spec, Spin::S, Spin::S, n);
}

Populations populations(const QuantumState &state) {
    const auto &spec = state.spec();
    const auto &v = state.amplitudes();
    int nf = spec.fock_dim();
    double w[4];
    for (int b = 0; b < 4; ++b) {
        w[b] = v.segment(b * nf, nf).squaredNorm();
    }
    double total = w[0] + w[1] + w[2] + w[3];
    return {w[3] / total, (w[1] + w[2]) / total, w[0] / total};
}

Eigen::Matrix4cd reduced_spin_density(const QuantumState &state) {
    int nf = state.spec().fock_dim();
    const auto &v = state.amplitudes();
    Eigen::Matrix4cd rho = Eigen::Matrix4cd::Zero();
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) {
            rho(i, j) = v.segment(i * nf, nf).dot(v.segment(j * nf, nf));
        }
    }
    // dot() conjugates its left argument: rho(i,j) = sum_n conj(v_i) v_j.
    return rho.transpose().eval();
}

double overlap_fidelity(const QuantumState &state, const SpinVector &target) {
    Eigen::Matrix4cd rho = reduced_spin_density(state);
    double f = (target.adjoint() * rho * target)(0, 0).real();
    return std::clamp(f, 0.0, 1.0);
}

SpinVector bell_target() {
    SpinVector t;
    double r = 1.0 / std::sqrt(2.0);
    t << r, 0.0, 0.0, cplx(0.0, -r);
    return t;
}

}  // namespace tgate
