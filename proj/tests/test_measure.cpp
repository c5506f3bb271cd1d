#include <doctest.h>

#include <cmath>
#include <complex>

#include "tgate/error.hpp"
#include "tgate/measure.hpp"

using namespace tgate;

namespace {

const HilbertSpec kSpec(3);

QuantumState spin_state(cplx ss, cplx sd, cplx ds, cplx dd) {
    SpinVector v(ss, sd, ds, dd);
    v.normalize();
    return QuantumState::product(kSpec, v, 0);
}

std::vector<Shot> shots_of(const std::vector<QuantumState> &states) {
    std::vector<Shot> out;
    for (const auto &s : states) out.push_back({s, 0.0, 0});
    return out;
}

ScanResult synthetic_scan(const std::vector<double> &values,
                          const std::function<Populations(double)> &f) {
    ScanResult scan;
    scan.parameter = "delta_m";
    for (double v : values) scan.points.push_back({v, f(v), std::nullopt});
    return scan;
}

}  // namespace

TEST_CASE("shot sampling") {
    const cplx i(0.0, 1.0);
    SUBCASE("pure |SS0> is always two bright ions") {
        auto rec = sample_shots({spin_state(1, 0, 0, 0)}, 100, 7);
        CHECK(rec.shots == 100);
        CHECK(rec.n0 == 0);
        CHECK(rec.n1 == 0);
        CHECK(rec.n2 == 100);
    }
    SUBCASE("Bell state never gives one bright ion") {
        auto rec = sample_shots({spin_state(1, 0, 0, -i)}, 100000, 3);
        CHECK(rec.n1 == 0);
        CHECK(rec.n0 + rec.n1 + rec.n2 == rec.shots);
        CHECK(std::abs(static_cast<double>(rec.n0) / rec.shots - 0.5) < 0.005);
    }
    SUBCASE("fixed seed reproduces the record") {
        std::vector<QuantumState> ens{spin_state(1, 1, 0, 0), spin_state(0, 1, 1, 1)};
        auto a = sample_shots(ens, 5000, 11);
        auto b = sample_shots(ens, 5000, 11);
        auto c = sample_shots(ens, 5000, 12);
        CHECK(a.n0 == b.n0);
        CHECK(a.n1 == b.n1);
        CHECK(a.n2 == b.n2);
        CHECK((a.n0 != c.n0 || a.n1 != c.n1));
    }
    SUBCASE("frequencies converge at the binomial rate") {
        Populations p{0.2, 0.3, 0.5};
        const long n = 100000;
        auto rec = sample_populations(p, n, 5);
        auto got = rec.populations();
        for (auto [pk, fk] : {std::pair{p.p0, got.p0}, {p.p1, got.p1}, {p.p2, got.p2}}) {
            CHECK(std::abs(fk - pk) < 4.5 * std::sqrt(pk * (1 - pk) / n));
        }
        // Empirical CDF over the outcomes 0, 1, 2 stays inside the KS band.
        double d = std::max(std::abs(got.p0 - p.p0), std::abs(got.p0 + got.p1 - p.p0 - p.p1));
        CHECK(d < 1.63 / std::sqrt(static_cast<double>(n)));
    }
    SUBCASE("ensemble members are drawn uniformly") {
        auto rec = sample_shots({spin_state(1, 0, 0, 0), spin_state(0, 0, 0, 1)}, 40000, 9);
        CHECK(rec.n1 == 0);
        CHECK(std::abs(static_cast<double>(rec.n2) / rec.shots - 0.5) < 0.01);
    }
}

TEST_CASE("Wilson intervals") {
    MeasurementRecord r{400, 100, 0, 300};
    auto p = r.populations();
    CHECK(p.p0 == 0.25);
    CHECK(p.p2 == 0.75);
    auto u = r.uncertainty();
    // Wilson half-width at z = 1: z sqrt(p(1-p)/n + z^2/(4n^2)) / (1 + z^2/n).
    double n = 400.0;
    double w = std::sqrt(0.25 * 0.75 / n + 1.0 / (4 * n * n)) / (1.0 + 1.0 / n);
    CHECK(std::abs(u.p0 - w) < 1e-12);
    CHECK(std::abs(u.p2 - w) < 1e-12);
    CHECK(u.p1 > 0.0);
}

TEST_CASE("collective rotations") {
    auto ss = spin_state(1, 0, 0, 0);
    auto full = rotated_populations(ss, units::pi, 0.3);
    CHECK(std::abs(full.p0 - 1.0) < 1e-12);
    auto half = rotated_populations(ss, units::pi / 2, 0.3);
    CHECK(std::abs(half.p0 - 0.25) < 1e-12);
    CHECK(std::abs(half.p1 - 0.5) < 1e-12);
    CHECK(std::abs(half.p2 - 0.25) < 1e-12);
}

TEST_CASE("parity scans") {
    const cplx i(0.0, 1.0);
    ParityOptions opt;
    opt.shots_per_phase = 0;
    SUBCASE("Bell state has unit contrast at twice the phase") {
        auto bell = spin_state(1, 0, 0, -i);
        auto fit = parity_scan(shots_of({bell}), opt);
        CHECK(std::abs(fit.amplitude - 1.0) < 1e-9);
        REQUIRE(fit.points.size() == 16);
        for (const auto &pt : fit.points) {
            CHECK(std::abs(pt.parity - std::cos(2 * pt.phase + fit.phase_offset)) < 1e-9);
        }
    }
    SUBCASE("a dephased mixture has no contrast") {
        auto plus = spin_state(1, 0, 0, 1);
        auto minus = spin_state(1, 0, 0, -1);
        auto fit = parity_scan(shots_of({plus, minus}), opt);
        CHECK(fit.amplitude < 1e-9);
        opt.shots_per_phase = 2000;
        opt.seed = 4;
        auto sampled = parity_scan(shots_of({plus, minus}), opt);
        CHECK(sampled.amplitude < 4.0 * sampled.amplitude_error + 0.02);
        CHECK(sampled.amplitude_error > 0.0);
    }
    SUBCASE("partial contrast") {
        // rho = 0.9 |Bell><Bell| + 0.1 dephased: A = 0.9.
        std::vector<QuantumState> ens;
        for (int k = 0; k < 9; ++k) ens.push_back(spin_state(1, 0, 0, -i));
        ens.push_back(spin_state(1, 0, 0, 0));
        auto fit = parity_scan(shots_of(ens), opt);
        CHECK(std::abs(fit.amplitude - 0.9) < 1e-9);
    }
}

TEST_CASE("Bell fidelity") {
    auto f = bell_fidelity({1000, 500, 0, 500}, 1.0);
    CHECK(std::abs(f.fidelity - 1.0) < 1e-12);
    f = bell_fidelity({1000, 500, 0, 500}, 0.94);
    CHECK(std::abs(f.fidelity - 0.97) < 1e-12);
    f = bell_fidelity({1000, 500, 100, 400}, 0.9);
    CHECK(std::abs(f.fidelity - 0.90) < 1e-12);
    CHECK(f.fidelity_error > 0.0);
    CHECK(f.population_error > 0.0);

    // Monotone in each input.
    auto base = bell_fidelity({1000, 450, 100, 450}, 0.8, 0.01);
    CHECK(bell_fidelity({1000, 460, 90, 450}, 0.8, 0.01).fidelity > base.fidelity);
    CHECK(bell_fidelity({1000, 450, 90, 460}, 0.8, 0.01).fidelity > base.fidelity);
    CHECK(bell_fidelity({1000, 450, 100, 450}, 0.81, 0.01).fidelity > base.fidelity);
    // Error propagation: sqrt(var(P0 + P2) + var(A)) / 2.
    CHECK(std::abs(base.fidelity_error -
                   0.5 * std::hypot(base.population_error, 0.01)) < 1e-12);
}

TEST_CASE("asymmetry metric") {
    std::vector<double> grid;
    for (int k = -6; k <= 6; ++k) grid.push_back(units::khz(k));
    SUBCASE("symmetric scan") {
        auto scan = synthetic_scan(grid, [](double v) {
            double x = v / units::khz(6);
            return Populations{0.5 * x * x, 0.1, 0.9 - 0.5 * x * x};
        });
        CHECK(asymmetry_metric(scan) < 1e-15);
    }
    SUBCASE("odd component") {
        auto scan = synthetic_scan(grid, [](double v) {
            double x = v / units::khz(6);
            return Populations{0.3 + 0.03 * x, 0.4, 0.3 - 0.03 * x};
        });
        // sum_k |P_k(v) - P_k(-v)| / 3 = 0.12 |x| / 3; mean of |x| over 1..6 is 3.5/6.
        CHECK(std::abs(asymmetry_metric(scan) - 0.04 * 3.5 / 6.0) < 1e-12);
        CHECK(std::abs(asymmetry_metric(scan, units::khz(2.5)) - 0.04 * 1.5 / 6.0) < 1e-12);
    }
    SUBCASE("grids without mirror points are rejected") {
        auto scan = synthetic_scan({units::khz(1), units::khz(2), units::khz(-1)},
                                   [](double) { return Populations{0.5, 0.0, 0.5}; });
        CHECK_THROWS_AS(asymmetry_metric(scan), Error);
    }
}
