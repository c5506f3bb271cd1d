#include <doctest.h>

#include <cmath>
#include <random>

#include "tgate/error.hpp"
#include "tgate/qcore.hpp"

using namespace tgate;

TEST_CASE("build_space rejects cutoff below two") {
    CHECK_THROWS_AS(build_space(1), Error);
    try {
        build_space(1);
    } catch (const Error &e) {
        CHECK(e.kind() == ErrorKind::InvalidArgument);
    }
}

TEST_CASE("smallest space has dimension 12 and two ladder entries per block") {
    auto [spec, ops] = build_space(2);
    CHECK(spec.dim() == 12);
    for (int b = 0; b < 4; ++b) {
        auto block = ops.a.block(b * 3, b * 3, 3, 3);
        int nonzero = 0;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) nonzero += std::abs(block(i, j)) > 0.0;
        CHECK(nonzero == 2);
    }
}

TEST_CASE("commutator of a and a-dagger is identity below the top Fock row") {
    auto [spec, ops] = build_space(15);
    Matrix comm = ops.a * ops.a_dagger - ops.a_dagger * ops.a;
    for (int i = 0; i < spec.dim(); ++i) {
        for (int j = 0; j < spec.dim(); ++j) {
            auto lab = spec.label(static_cast<std::size_t>(i));
            cplx expected = (i == j) ? (lab.n == 15 ? cplx(-15.0) : cplx(1.0)) : cplx(0.0);
            CHECK(std::abs(comm(i, j) - expected) < 1e-12);
        }
    }
    CHECK((ops.a_dagger - ops.a.adjoint()).norm() < 1e-15);
}

TEST_CASE("operators match an explicit triple-loop construction") {
    const int cutoff = 6, nf = 7;
    auto [spec, ops] = build_space(cutoff);
    Matrix a(28, 28), sp1(28, 28), sp2(28, 28);
    a.setZero();
    sp1.setZero();
    sp2.setZero();
    for (int s1 = 0; s1 < 2; ++s1)
        for (int s2 = 0; s2 < 2; ++s2)
            for (int n = 0; n < nf; ++n) {
                int col = (2 * s1 + s2) * nf + n;
                if (n > 0) a((2 * s1 + s2) * nf + n - 1, col) = std::sqrt(double(n));
                if (s1 == 0) sp1((2 * 1 + s2) * nf + n, col) = 1.0;
                if (s2 == 0) sp2((2 * s1 + 1) * nf + n, col) = 1.0;
            }
    CHECK((ops.a - a).norm() < 1e-12);
    CHECK((ops.sigma_plus_1 - sp1).norm() < 1e-12);
    CHECK((ops.sigma_plus_2 - sp2).norm() < 1e-12);
    CHECK((ops.sigma_minus_1 - sp1.adjoint()).norm() < 1e-12);
}

TEST_CASE("spin operator algebra") {
    auto [spec, ops] = build_space(4);
    CHECK((ops.sigma_plus_1 * ops.sigma_plus_1).norm() < 1e-15);
    CHECK((ops.sigma_plus_2 * ops.sigma_plus_2).norm() < 1e-15);
    CHECK((ops.sigma_plus_1 * ops.sigma_plus_2 - ops.sigma_plus_2 * ops.sigma_plus_1).norm() < 1e-15);
    CHECK((ops.sigma_plus_1 * ops.sigma_minus_2 - ops.sigma_minus_2 * ops.sigma_plus_1).norm() < 1e-15);
    Matrix anti1 = ops.sigma_plus_1 * ops.sigma_minus_1 + ops.sigma_minus_1 * ops.sigma_plus_1;
    Matrix anti2 = ops.sigma_plus_2 * ops.sigma_minus_2 + ops.sigma_minus_2 * ops.sigma_plus_2;
    CHECK((anti1 - ops.identity).norm() < 1e-15);
    CHECK((anti2 - ops.identity).norm() < 1e-15);
}

TEST_CASE("index and label are inverse") {
    HilbertSpec spec(5);
    for (std::size_t i = 0; i < static_cast<std::size_t>(spec.dim()); ++i) {
        auto l = spec.label(i);
        CHECK(spec.index(l.s1, l.s2, l.n) == i);
    }
    CHECK(spec.index(Spin::D, Spin::S, 2) == 2 * 6 + 2);
    CHECK_THROWS_AS(spec.index(Spin::S, Spin::S, 6), Error);
}

TEST_CASE("initial state") {
    HilbertSpec spec(15);
    auto psi = initial_state(spec, 0.0, 7);
    CHECK(std::abs(psi.amplitude(Spin::S, Spin::S, 0) - cplx(1.0)) < 1e-15);
    CHECK(psi.norm() == doctest::Approx(1.0).epsilon(1e-12));

    SUBCASE("thermal sampling mean") {
        std::mt19937_64 rng(11);
        const int samples = 100000;
        double sum = 0.0;
        for (int i = 0; i < samples; ++i) sum += sample_thermal_fock(0.1, 15, rng);
        double mean = sum / samples;
        // Geometric distribution: variance nbar (nbar + 1).
        double sigma = std::sqrt(0.1 * 1.1 / samples);
        CHECK(std::abs(mean - 0.1) < 3.0 * sigma);
    }
    SUBCASE("cutoff guard") {
        HilbertSpec small(6);
        try {
            initial_state(small, 5.0, 1);
            FAIL("expected cutoff-too-small");
        } catch (const Error &e) {
            CHECK(e.kind() == ErrorKind::CutoffTooSmall);
        }
    }
}

TEST_CASE("populations") {
    HilbertSpec spec(8);
    auto ss = QuantumState::basis(spec, Spin::S, Spin::S, 0);
    auto p = populations(ss);
    CHECK(p.p0 == 0.0);
    CHECK(p.p1 == 0.0);
    CHECK(p.p2 == 1.0);

    auto bell = QuantumState::product(spec, bell_target(), 0);
    p = populations(bell);
    CHECK(p.p0 == doctest::Approx(0.5));
    CHECK(std::abs(p.p1) < 1e-12);
    CHECK(p.p2 == doctest::Approx(0.5));

    Vector v = Vector::Zero(spec.dim());
    v[static_cast<Eigen::Index>(spec.index(Spin::S, Spin::D, 3))] = 1.0 / std::sqrt(2.0);
    v[static_cast<Eigen::Index>(spec.index(Spin::D, Spin::S, 5))] = 1.0 / std::sqrt(2.0);
    p = populations(QuantumState(spec, v));
    CHECK(p.p1 == doctest::Approx(1.0));

    std::mt19937_64 rng(3);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        Vector r(spec.dim());
        for (auto &x : r) x = cplx(n(rng), n(rng));
        QuantumState s(spec, r / r.norm());
        auto q = populations(s);
        CHECK(std::abs(q.p0 + q.p1 + q.p2 - 1.0) < 1e-9);
        CHECK(q.p0 >= 0.0);
        CHECK(q.p2 <= 1.0);
    }
}

TEST_CASE("overlap fidelity") {
    HilbertSpec spec(8);
    auto bell = QuantumState::product(spec, bell_target(), 0);
    CHECK(overlap_fidelity(bell, bell_target()) == doctest::Approx(1.0));
    auto ss = QuantumState::basis(spec, Spin::S, Spin::S, 0);
    CHECK(overlap_fidelity(ss, bell_target()) == doctest::Approx(0.5));
    // Entanglement with the mode reduces the overlap even with correct populations.
    Vector v = Vector::Zero(spec.dim());
    v[static_cast<Eigen::Index>(spec.index(Spin::S, Spin::S, 0))] = 1.0 / std::sqrt(2.0);
    v[static_cast<Eigen::Index>(spec.index(Spin::D, Spin::D, 1))] = cplx(0.0, -1.0 / std::sqrt(2.0));
    CHECK(overlap_fidelity(QuantumState(spec, v), bell_target()) == doctest::Approx(0.5));
}
