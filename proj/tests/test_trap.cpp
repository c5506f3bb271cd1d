#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "tgate/beam.hpp"
#include "tgate/error.hpp"
#include "tgate/numerics.hpp"
#include "tgate/trap.hpp"

using namespace tgate;

namespace {

const double kOmega = units::mhz(1.41);

TrapModel ideal_trap() {
    return TrapModel({}, Imperfections::none());
}

std::vector<double> path_positions(double lo = -40.0, double hi = 40.0, double step = 2.0) {
    std::vector<double> out;
    for (double x = lo; x <= hi + 1e-9; x += step) out.push_back(x);
    return out;
}

// Potential of a voltage set evaluated straight from the bump formula.
double bump_potential(const ElectrodeBasis &b, const Voltages &v, double x) {
    double u = 0.0;
    for (int i = 0; i < b.count; ++i) {
        double c = (i - 0.5 * (b.count - 1)) * b.pitch;
        u += v[i] * b.amplitude * std::exp(-0.5 * (x - c) * (x - c) / (b.width * b.width));
    }
    return u;
}

// Coulomb balance of two ions in a harmonic well: k d^3 = e^2 / (2 pi eps0) with k = m w^2.
double coulomb_spacing_um(double omega) {
    double e = units::elementary_charge;
    double m = units::calcium40_mass;
    return std::cbrt(e * e / (2.0 * units::pi * units::vacuum_permittivity * m * omega * omega)) * 1e6;
}

}  // namespace

TEST_CASE("solved well reproduces the requested frequency") {
    auto trap = ideal_trap();
    for (double x0 : {0.0, -23.0, 37.0}) {
        auto v = solve_keyframe(trap, x0, kOmega);
        auto w = locate_well(trap, v, x0, PotentialModel::Ideal);
        CHECK(std::abs(w.position - x0) < 1e-6);
        CHECK(std::abs(w.omega / kOmega - 1.0) < 1e-4);
        CHECK(v.cwiseAbs().maxCoeff() <= kMaxElectrodeVoltage);
    }
}

TEST_CASE("centred keyframe is mirror symmetric") {
    auto trap = ideal_trap();
    auto v = solve_keyframe(trap, 0.0, kOmega);
    int n = trap.electrodes();
    for (int i = 0; i < n; ++i) CHECK(std::abs(v[i] - v[n - 1 - i]) < 1e-9);
}

TEST_CASE("curvature agrees with a finite-difference second derivative") {
    auto trap = ideal_trap();
    const auto &b = trap.basis();
    for (double x0 : {0.0, 14.0}) {
        auto v = solve_keyframe(trap, x0, kOmega);
        double h = 0.05;
        double fd = (bump_potential(b, v, x0 + h) - 2.0 * bump_potential(b, v, x0) +
                     bump_potential(b, v, x0 - h)) /
                    (h * h);
        double model = trap.potential(v, x0, 2, PotentialModel::Ideal);
        CHECK(std::abs(model / fd - 1.0) < 1e-3);
        // Independent frequency: q U'' / m with U'' converted from V/um^2 to V/m^2.
        double omega = std::sqrt(units::elementary_charge * fd * 1e12 / units::calcium40_mass);
        CHECK(std::abs(omega / kOmega - 1.0) < 1e-3);
    }
}

TEST_CASE("stray-field derivatives are consistent") {
    Imperfections imp = Imperfections::defaults();
    imp.stray = {{2e-5, 50.0, 0.3}};
    TrapModel trap({}, imp);
    double h = 1e-3;
    for (double x : {-30.0, -1.0, 0.0, 0.7, 25.0}) {
        for (int k = 0; k < 3; ++k) {
            double fd = (trap.stray(x + h, k) - trap.stray(x - h, k)) / (2.0 * h);
            double exact = trap.stray(x, k + 1);
            CHECK(std::abs(fd - exact) <= 1e-6 * (std::abs(exact) + 1e-6));
        }
    }
    CHECK_THROWS_AS(trap.stray(0.0, 4), Error);
}

TEST_CASE("keyframe errors") {
    auto trap = ideal_trap();
    CHECK_THROWS_AS(solve_keyframe(trap, 0.0, -1.0), Error);
    try {
        solve_keyframe(trap, 5000.0, kOmega);
        FAIL("expected out-of-range");
    } catch (const Error &e) {
        CHECK(e.kind() == ErrorKind::OutOfRange);
    }
    try {
        solve_keyframe(trap, 0.0, units::mhz(40.0));
        FAIL("expected infeasible keyframe");
    } catch (const Error &e) {
        CHECK(e.kind() == ErrorKind::InfeasibleKeyframe);
    }
}

TEST_CASE("waveform synthesis contracts") {
    auto trap = ideal_trap();
    SUBCASE("identical keyframes give constant frames and a resting ion") {
        auto v = solve_keyframe(trap, 0.0, kOmega);
        auto wf = synthesize_waveform(trap, {{0.0, v}, {0.0, v}}, 10e-6, 1);
        for (Eigen::Index r = 0; r < wf.frame_count(); ++r) {
            CHECK((wf.frames().row(r).transpose() - v).cwiseAbs().maxCoeff() < 1e-12);
        }
        auto traj = extract_trajectory(trap, wf);
        for (double vel : traj.velocity) CHECK(std::abs(vel) < 1e-9);
    }
    SUBCASE("frame count is the duration in 5 ns samples") {
        auto kf = solve_keyframes(trap, path_positions(), kOmega);
        auto wf = synthesize_waveform(trap, kf, 160e-6, 8);
        CHECK(wf.frame_count() == 32000);
        CHECK(std::abs(wf.duration() - 160e-6) < 1e-12);
        CHECK(wf.frames().cwiseAbs().maxCoeff() <= kMaxElectrodeVoltage);
        double total = 0.0;
        for (const auto &s : wf.segments()) total += s.duration;
        CHECK(std::abs(total - 160e-6) < 1e-12);
        CHECK_THROWS_AS(synthesize_waveform(trap, kf, 160.0013e-6, 8), Error);
        CHECK_THROWS_AS(synthesize_waveform(trap, kf, 160e-6, 7), Error);
    }
}

TEST_CASE("ideal transport moves at 0.5 m/s") {
    auto trap = ideal_trap();
    auto wf = synthesize_waveform(trap, solve_keyframes(trap, path_positions(), kOmega), 160e-6, 8);
    auto traj = extract_trajectory(trap, wf);
    double worst = 0.0;
    for (std::size_t i = 1; i < traj.time.size(); ++i) {
        if (traj.time[i] < 1e-6 || traj.time[i] > wf.duration() - 1e-6) continue;
        worst = std::max(worst, std::abs(traj.velocity[i] / 0.5 - 1.0));
    }
    CHECK(worst < 0.01);
    CHECK(std::abs(traj.position.front() + 40.0) < 0.01);
    CHECK(std::abs(traj.position.back() - 40.0) < 0.01);
}

TEST_CASE("two-ion mode structure") {
    auto trap = ideal_trap();
    auto wf = synthesize_waveform(trap, solve_keyframes(trap, path_positions(), kOmega), 160e-6, 8);
    auto traj = extract_trajectory(trap, wf);
    auto bm = traj.omega_bm();
    for (std::size_t i = 0; i < bm.size(); ++i) {
        CHECK(std::abs(bm[i] / traj.omega_com[i] - std::sqrt(3.0)) < 1e-6);
    }
    CHECK(std::abs(units::to_mhz(std::sqrt(3.0) * kOmega) - 2.442) < 0.001);
    CHECK(ion_spacing(kOmega) == doctest::Approx(coulomb_spacing_um(kOmega)).epsilon(1e-9));
    CHECK(std::abs(ion_spacing(kOmega) - 4.46) < 0.02);
}

TEST_CASE("default imperfections give 4.6 % peak confinement deviation") {
    TrapModel plant({}, Imperfections::defaults());
    auto kf = solve_keyframes(ideal_trap(), path_positions(-40.0, 40.0, 1.0), kOmega);
    double peak = 0.0;
    for (const auto &k : kf) {
        auto w = locate_well(plant, k.voltages, k.position, PotentialModel::Perturbed);
        peak = std::max(peak, std::abs(w.omega / kOmega - 1.0));
    }
    CHECK(std::abs(peak - 0.046) < 0.002);
}

TEST_CASE("confinement scaling") {
    auto trap = ideal_trap();
    auto wf = synthesize_waveform(trap, solve_keyframes(trap, path_positions(), kOmega), 160e-6, 8);
    SUBCASE("unit factors are the identity") {
        auto same = apply_confinement_scaling(wf, {{-40.0, 0.0, 40.0}, {1.0, 1.0, 1.0}});
        CHECK((same.frames() - wf.frames()).cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("factors interpolate continuously") {
        ScaleProfile p{{-40.0, -35.0, -30.0, -25.0, -20.0, -15.0, -10.0, -5.0, 0.0, 5.0, 10.0, 15.0,
                        20.0, 25.0, 30.0, 35.0, 40.0},
                       {}};
        for (std::size_t i = 0; i < p.positions.size(); ++i) p.factors.push_back(i % 2 ? 1.04 : 0.96);
        auto scaled = apply_confinement_scaling(wf, p);
        // The correction added by the scaling never jumps between frames.
        REQUIRE(scaled.frame_count() == wf.frame_count());
        Eigen::MatrixXd added = scaled.frames() - wf.frames();
        double step = 0.0;
        for (Eigen::Index r = 1; r < added.rows(); ++r) {
            step = std::max(step, (added.row(r) - added.row(r - 1)).cwiseAbs().maxCoeff());
        }
        CHECK(step < 1e-3);
        // The ion still sits where the path says: scaling keeps the minimum.
        auto traj = extract_trajectory(trap, scaled);
        CHECK(std::abs(traj.position.back() - 40.0) < 0.01);
        // Quadratic voltage-to-frequency relation at a knot.
        auto w = locate_well(trap, scaled.path_voltages(scaled.path_index(-30.0)), -30.0,
                             PotentialModel::Ideal);
        CHECK(std::abs(w.omega / kOmega - std::sqrt(0.96)) < 1e-4);
    }
    SUBCASE("clamp violations are hard errors") {
        CHECK_THROWS_AS(apply_confinement_scaling(wf, {{0.0}, {50.0}}), Error);
    }
}

TEST_CASE("segment retiming") {
    Imperfections imp = Imperfections::defaults();
    imp.filter_tau = 0.0;
    TrapModel plant({}, imp);
    auto wf = synthesize_waveform(plant, solve_keyframes(ideal_trap(), path_positions(), kOmega), 160e-6, 8);
    SUBCASE("unit factors leave the frames unchanged") {
        auto same = retime_segments(wf, std::vector<double>(8, 1.0));
        REQUIRE(same.frame_count() == wf.frame_count());
        CHECK((same.frames() - wf.frames()).cwiseAbs().maxCoeff() < 1e-12);
    }
    SUBCASE("stretching a segment halves its velocity and keeps the path") {
        std::vector<double> f(8, 1.0);
        f[3] = 2.0;
        auto slow = retime_segments(wf, f);
        CHECK(std::abs(slow.duration() - 180e-6) < 1e-12);
        TrajectoryOptions opt{1, 0.0};
        auto a = extract_trajectory(plant, wf, opt);
        auto b = extract_trajectory(plant, slow, opt);
        double mid_a = 0.5 * (wf.segment_start(3) + wf.segment_end(3));
        double mid_b = 0.5 * (slow.segment_start(3) + slow.segment_end(3));
        double va = interp_linear(a.time, a.velocity, mid_a);
        double vb = interp_linear(b.time, b.velocity, mid_b);
        CHECK(std::abs(vb / va - 0.5) < 0.005);
        // Same path parameter, same position.
        for (std::size_t k = 0; k < 8; ++k) {
            for (double s : {0.0, 0.3, 0.7}) {
                double ta = wf.segment_start(k) + s * (wf.segment_end(k) - wf.segment_start(k));
                double tb = slow.segment_start(k) + s * (slow.segment_end(k) - slow.segment_start(k));
                CHECK(std::abs(interp_linear(a.time, a.position, ta) -
                               interp_linear(b.time, b.position, tb)) < 0.01);
            }
        }
    }
    SUBCASE("invalid factors") {
        CHECK_THROWS_AS(retime_segments(wf, std::vector<double>(7, 1.0)), Error);
        std::vector<double> f(8, 1.0);
        f[0] = 0.0;
        CHECK_THROWS_AS(retime_segments(wf, f), Error);
        f[0] = 1e-4;
        try {
            retime_segments(wf, f);
            FAIL("expected a resolution error");
        } catch (const Error &e) {
            CHECK(e.kind() == ErrorKind::Resolution);
        }
    }
}

TEST_CASE("waveform serialization round-trips exactly") {
    TrapModel plant({}, Imperfections::defaults());
    auto wf = synthesize_waveform(plant, solve_keyframes(ideal_trap(), path_positions(), kOmega), 160e-6, 8);
    auto retimed = retime_segments(
        apply_confinement_scaling(wf, {{-40.0, 40.0}, {0.97, 1.02}}),
        {1.0, 1.1, 0.9, 1.0, 1.03, 1.0, 1.0, 0.95});
    std::stringstream buf;
    write_waveform(buf, retimed);
    auto back = read_waveform(buf);
    REQUIRE(back.frame_count() == retimed.frame_count());
    CHECK((back.frames() - retimed.frames()).cwiseAbs().maxCoeff() == 0.0);
    CHECK((back.effective() - retimed.effective()).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE(back.segments().size() == retimed.segments().size());
    for (std::size_t k = 0; k < back.segments().size(); ++k) {
        CHECK(back.segments()[k].duration == retimed.segments()[k].duration);
    }
    std::stringstream bad("not a waveform");
    CHECK_THROWS_AS(read_waveform(bad), Error);
}
