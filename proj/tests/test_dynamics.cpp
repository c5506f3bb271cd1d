#include <doctest.h>

#include <chrono>
#include <cmath>
#include <random>

#include "oracles.hpp"
#include "tgate/dynamics.hpp"
#include "tgate/error.hpp"

using namespace tgate;
using units::khz;

namespace {

GateParams ideal_gate(double delta_m = khz(12.5)) {
    GateParams p;
    p.delta_m = delta_m;
    p.spin_phase = bell_spin_phase(delta_m);
    return p;
}

EnvelopeSet ideal_envelope(const GateParams &p) {
    auto ref = analytic_ms_reference(p);
    return EnvelopeSet::constant(p.tau, ref.ideal_rabi);
}

}  // namespace

TEST_CASE("gate parameter validation") {
    GateParams p;
    CHECK_NOTHROW(p.validate());
    p.tau = 0.0;
    CHECK_THROWS_AS(p.validate(), Error);
    p = GateParams{};
    p.eta_bm = 0.3;
    CHECK_THROWS_AS(p.validate(), Error);
    p = GateParams{};
    p.delta_m = p.omega_bm;
    CHECK_THROWS_AS(p.validate(), Error);
    CHECK(p.delta_blue() == doctest::Approx(2.0 * p.omega_bm));
}

TEST_CASE("envelope set") {
    CHECK_THROWS_AS(EnvelopeSet({0.0, 0.0}, {1, 1}, {1, 1}, {0, 0}, {0, 0}), Error);
    CHECK_THROWS_AS(EnvelopeSet({0.0, 1.0}, {-1, 1}, {1, 1}, {0, 0}, {0, 0}), Error);
    CHECK_THROWS_AS(EnvelopeSet({0.0, 1.0}, {1, 1}, {1, 1}, {0, NAN}, {0, 0}), Error);
    CHECK_THROWS_AS(EnvelopeSet({0.0, 1.0, 2.0}, {1, 1}, {1, 1}, {0, 0}, {0, 0}), Error);

    EnvelopeSet env({0.0, 1.0, 3.0}, {0.0, 2.0, 2.0}, {1.0, 1.0, 1.0}, {0.0, 4.0, 0.0},
                    {1.0, 1.0, 3.0});
    CHECK(env.at(0.5).omega_1 == doctest::Approx(1.0));
    CHECK(env.at(2.0).stark == doctest::Approx(2.0));
    CHECK_THROWS_AS(env.at(3.5), Error);
    // Exact integrals of the linear interpolants.
    CHECK(env.detuning_phase(1.0, 0.0) == doctest::Approx(1.0));
    CHECK(env.detuning_phase(3.0, 0.0) == doctest::Approx(1.0 + 4.0));
    CHECK(env.detuning_phase(2.0, 1.0) == doctest::Approx((1.0 + 1.5) - (2.0 + 3.0)));
    CHECK(env.detuning_phase(0.5, 2.0) == doctest::Approx(0.5 - 2.0 * 0.5));
}

TEST_CASE("Hamiltonian") {
    auto [spec, ops] = build_space(6);
    GateParams p = ideal_gate();

    SUBCASE("no drive gives zero") {
        auto env = EnvelopeSet::constant(p.tau, 0.0, khz(3.0), khz(1.0));
        CHECK(ms_hamiltonian(ops, 0.3 * p.tau, p, env).norm() == 0.0);
    }
    SUBCASE("phase factors vanish at t = 0") {
        p.spin_phase = 0.0;
        double omega = khz(100.0);
        auto env = EnvelopeSet::constant(p.tau, omega, khz(2.0));
        p.delta_g = khz(2.0);
        Matrix h = ms_hamiltonian(ops, 0.0, p, env);
        Matrix half = 0.5 * omega * p.eta_bm * (ops.a_dagger + ops.a) *
                      (ops.sigma_plus_1 - ops.sigma_plus_2);
        Matrix expected = half + half.adjoint();
        CHECK((h - expected).norm() < 1e-9);
    }
    SUBCASE("Hermitian for random parameters") {
        std::mt19937_64 rng(5);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (int i = 0; i < 100; ++i) {
            auto d = oracle::random_drive(rng, 50e-6);
            GateParams q = oracle::gate_params(d);
            q.rabi_scale = 0.5 + u(rng);
            EnvelopeSet env({0.0, 20e-6, 50e-6}, {d.omega * u(rng), d.omega, 0.0},
                            {d.omega, d.omega * u(rng), d.omega}, {0.0, d.stark, 0.0},
                            {khz(1.0), 0.0, -khz(2.0)});
            Matrix h = ms_hamiltonian(ops, 50e-6 * u(rng), q, env);
            CHECK((h - h.adjoint()).cwiseAbs().maxCoeff() < 1e-12);
        }
    }
    SUBCASE("time outside the gate") {
        auto env = EnvelopeSet::constant(p.tau, 1.0);
        CHECK_THROWS_AS(ms_hamiltonian(ops, -1e-9, p, env), Error);
        CHECK_THROWS_AS(ms_hamiltonian(ops, 2.0 * p.tau, p, env), Error);
    }
    SUBCASE("structured apply equals dense product") {
        std::mt19937_64 rng(9);
        auto d = oracle::random_drive(rng, 50e-6);
        auto env = oracle::envelopes(d);
        MsDrive drive(DriveTones::from_gate(oracle::gate_params(d)), env, khz(0.3));
        Vector psi = oracle::random_state(spec, rng);
        Vector out(psi.size());
        drive.apply(17e-6, psi.data(), out.data(), spec.fock_dim());
        Vector ref = cplx(0.0, -1.0) * (drive.dense(ops, 17e-6) * psi);
        CHECK((out - ref).norm() < 1e-9 * ref.norm());
    }
}

TEST_CASE("propagation") {
    SUBCASE("zero Hamiltonian leaves the state unchanged") {
        HilbertSpec spec(6);
        std::mt19937_64 rng(1);
        QuantumState psi(spec, oracle::random_state(spec, rng));
        GateParams p;
        auto out = propagate(psi, p, EnvelopeSet::constant(p.tau, 0.0));
        CHECK((out.amplitudes() - psi.amplitudes()).norm() < 1e-14);
    }
    SUBCASE("tolerance and input checks") {
        HilbertSpec spec(4);
        auto psi = QuantumState::basis(spec, Spin::S, Spin::S, 0);
        GateParams p;
        auto env = EnvelopeSet::constant(p.tau, 1.0);
        CHECK_THROWS_AS(propagate(psi, p, env, 1e-3), Error);
        CHECK_THROWS_AS(propagate(psi, p, EnvelopeSet::constant(p.tau / 2, 1.0)), Error);
        Vector v = psi.amplitudes() * 2.0;
        CHECK_THROWS_AS(propagate(QuantumState(spec, v), p, env), Error);
    }
    SUBCASE("matches brute-force exponential stepping") {
        auto [spec, ops] = build_space(6);
        std::mt19937_64 rng(2024);
        for (int draw = 0; draw < 3; ++draw) {
            auto d = oracle::random_drive(rng, 50e-6);
            Vector psi0 = oracle::random_state(spec, rng);
            Vector ref = oracle::brute_force(ops, d, psi0, 1e-9);
            auto out = propagate(QuantumState(spec, psi0), oracle::gate_params(d),
                                 oracle::envelopes(d), 1e-9);
            CHECK((out.amplitudes() - ref).lpNorm<Eigen::Infinity>() < 1e-8);
            CHECK(std::abs(out.norm() - 1.0) < 1e-9);
        }
    }
}

TEST_CASE("analytic reference") {
    GateParams p = ideal_gate();
    auto ref = analytic_ms_reference(p);
    CHECK(ref.loops == doctest::Approx(2.0));
    CHECK(ref.loop_closed);
    CHECK(units::to_khz(ref.ideal_rabi) == doctest::Approx(105.2).epsilon(5e-4));
    CHECK(std::abs(ref.alpha.back()) < 1e-12);
    CHECK(ref.geometric_phase == doctest::Approx(units::pi / 8).epsilon(1e-9));

    GateParams one = p;
    one.delta_m = units::two_pi / p.tau;
    auto r1 = analytic_ms_reference(one);
    CHECK(std::abs(r1.alpha.back()) < 1e-12);

    GateParams odd = p;
    odd.delta_m = khz(14.2);
    auto r2 = analytic_ms_reference(odd);
    CHECK_FALSE(r2.loop_closed);
    CHECK(r2.warning.find("loop-not-closed") != std::string::npos);

    GateParams zero = p;
    zero.delta_m = 0.0;
    CHECK_THROWS_AS(analytic_ms_reference(zero), Error);
}

TEST_CASE("ideal stationary gate") {
    HilbertSpec spec(15);
    auto ss = QuantumState::basis(spec, Spin::S, Spin::S, 0);
    for (double dm : {khz(12.5), khz(-12.5)}) {
        GateParams p = ideal_gate(dm);
        auto out = propagate(ss, p, ideal_envelope(p), 1e-9);
        auto pop = populations(out);
        CHECK(pop.p0 == doctest::Approx(0.5).epsilon(1e-3));
        CHECK(pop.p2 == doctest::Approx(0.5).epsilon(1e-3));
        CHECK(pop.p1 < 1e-3);
        CHECK(overlap_fidelity(out, bell_target()) > 0.9999);
    }

    SUBCASE("cutoff convergence") {
        GateParams p = ideal_gate();
        HilbertSpec big(20);
        auto f15 = overlap_fidelity(propagate(ss, p, ideal_envelope(p), 1e-10), bell_target());
        auto f20 = overlap_fidelity(
            propagate(QuantumState::basis(big, Spin::S, Spin::S, 0), p, ideal_envelope(p), 1e-10),
            bell_target());
        CHECK(std::abs(f15 - f20) < 1e-4);
    }
}

TEST_CASE("symmetry in delta_m when the light shift is compensated") {
    HilbertSpec spec(15);
    auto ss = QuantumState::basis(spec, Spin::S, Spin::S, 0);
    GateParams p;
    p.spin_phase = 0.3;
    double stark = khz(3.0);
    p.delta_g = stark;
    auto env = EnvelopeSet::constant(p.tau, analytic_ms_reference(ideal_gate()).ideal_rabi, stark);
    for (double dm : {khz(4.0), khz(9.3), khz(21.0)}) {
        p.delta_m = dm;
        auto a = populations(propagate(ss, p, env));
        p.delta_m = -dm;
        auto b = populations(propagate(ss, p, env));
        CHECK(std::abs(a.p0 - b.p0) < 1e-3);
        CHECK(std::abs(a.p1 - b.p1) < 1e-3);
        CHECK(std::abs(a.p2 - b.p2) < 1e-3);
    }
}

TEST_CASE("one-bright population vanishes at closed loops") {
    HilbertSpec spec(15);
    auto ss = QuantumState::basis(spec, Spin::S, Spin::S, 0);
    for (int n = 1; n <= 5; ++n) {
        GateParams p = ideal_gate(n * units::two_pi / 160e-6);
        auto out = propagate(ss, p, ideal_envelope(p));
        CHECK(populations(out).p1 < 0.01);
    }
}

TEST_CASE("shot ensembles") {
    HilbertSpec spec(10);
    GateParams p = ideal_gate();
    auto env = ideal_envelope(p);

    SUBCASE("noiseless shots equal the single propagation") {
        auto shots = run_shots(spec, p, env, NoiseModel{0.0, 4}, 3);
        auto ref = propagate(QuantumState::basis(spec, Spin::S, Spin::S, 0), p, env, 1e-8);
        for (const auto &s : shots) CHECK((s.state.amplitudes() - ref.amplitudes()).norm() == 0.0);
    }
    SUBCASE("same seed reproduces the ensemble bit for bit") {
        NoiseModel noise{khz(0.2), 99};
        auto a = run_shots(spec, p, env, noise, 4);
        auto b = run_shots(spec, p, env, noise, 4);
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(a[i].carrier_offset == b[i].carrier_offset);
            CHECK((a[i].state.amplitudes() - b[i].state.amplitudes()).norm() == 0.0);
            CHECK(std::abs(a[i].state.norm() - 1.0) < 1e-9);
        }
        CHECK(a[0].carrier_offset != a[1].carrier_offset);
    }
    SUBCASE("argument checks") {
        CHECK_THROWS_AS(run_shots(spec, p, env, NoiseModel{}, 0), Error);
        CHECK_THROWS_AS(run_shots(spec, p, env, NoiseModel{-1.0, 0}, 1), Error);
    }
    SUBCASE("thermal averaging agrees with sampled shots") {
        // Off a closed loop the residual displacement makes P1 grow with n.
        p.delta_m = khz(10.0);
        ShotOptions so;
        so.nbar = 0.3;
        auto shots = run_shots(spec, p, env, NoiseModel{0.0, 1}, 400, so);
        double p1 = 0.0;
        for (const auto &s : shots) p1 += populations(s.state).p1;
        p1 /= 400.0;
        AverageOptions ao;
        ao.nbar = 0.3;
        auto avg = expected_populations(spec, p, env, NoiseModel{}, ao);
        CHECK(std::abs(avg.p1 - p1) < 0.03);
        CHECK(avg.p1 > 0.01);
    }
}

TEST_CASE("Ramsey noise calibration") {
    CHECK(calibrate_noise(0.0, 160e-6) == 0.0);
    CHECK_THROWS_AS(calibrate_noise(0.6, 160e-6), Error);
    CHECK(ramsey_contrast(0.0, 160e-6) == doctest::Approx(1.0));

    double sigma = calibrate_noise(0.014, 160e-6);
    CHECK(1.0 - ramsey_contrast(sigma, 160e-6) == doctest::Approx(0.014).epsilon(1e-3));
    // Monte-Carlo oracle: fringe contrast equals |E[exp(i eps T)]|.
    std::mt19937_64 rng(77);
    std::normal_distribution<double> normal(0.0, sigma);
    cplx mean = 0.0;
    const int draws = 100000;
    for (int i = 0; i < draws; ++i) mean += std::polar(1.0, normal(rng) * 160e-6);
    double contrast = std::abs(mean) / draws;
    CHECK(std::abs(contrast - 0.986) < 0.001);

    CHECK(ramsey_contrast(sigma, 320e-6) < ramsey_contrast(sigma, 160e-6));
}
