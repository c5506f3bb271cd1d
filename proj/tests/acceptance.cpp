// Acceptance suite: one PASS/FAIL line per criterion. Usage:
//   acceptance <path-to-tgate-cli> [criterion...]
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "tgate/error.hpp"
#include "tgate/pipeline.hpp"

using namespace tgate;
using units::khz;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

template <typename... Args>
std::string fmtn(const char *f, Args... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Plant ideal_plant() {
    Plant p = PipelineConfig::defaults().plant;
    p.trap = TrapModel({}, Imperfections::none());
    p.noise = NoiseModel{};
    return p;
}

ScanOptions exact(int nodes = 1) {
    ScanOptions o;
    o.measure.shots = 0;
    o.quadrature_nodes = nodes;
    return o;
}

// Default pipelines, shared by criteria 5 to 9.
struct DefaultRuns {
    PipelineConfig config = PipelineConfig::defaults();
    std::optional<WaveformBuild> build;
    std::optional<GateRun> stationary, transport_static, transport_dynamic;

    const WaveformBuild &waveform() {
        if (!build) build = build_transport_waveform(config);
        return *build;
    }
    const GateRun &gate(GateMode mode) {
        auto &slot = mode == GateMode::Stationary        ? stationary
                     : mode == GateMode::TransportStatic ? transport_static
                                                          : transport_dynamic;
        if (!slot) {
            const Waveform *wf = mode == GateMode::Stationary ? nullptr : &waveform().waveform;
            slot = run_gate(config, mode, wf);
        }
        return *slot;
    }
};

DefaultRuns &runs() {
    static DefaultRuns r;
    return r;
}

// 1. Noiseless stationary gate with the power from balance_power.
Outcome ideal_gate_fidelity() {
    auto t0 = std::chrono::steady_clock::now();
    Plant plant = ideal_plant();
    GateParams p;
    p.delta_m = khz(12.5);
    p.spin_phase = bell_spin_phase(p.delta_m);
    auto setup = stationary_gate(plant, p, 0.0);
    auto bal = balance_power(plant, setup, exact(), 1.0);
    setup.params.rabi_scale = bal.rabi_scale;
    auto fid = measure_fidelity(plant, setup, 1, 0, 16, 1);
    double elapsed = seconds_since(t0);
    double f = fid.ensemble_fidelity;
    return {f >= 0.999 && elapsed < 10.0 && plant.fock_cutoff == 15,
            fmtn("F = %.6f (>= 0.999), n_max = %d, %.2f s (< 10 s)", f, plant.fock_cutoff, elapsed)};
}

// 2. P1 minima of a constant-intensity delta_m scan at n / tau.
Outcome p1_minima() {
    Plant plant = ideal_plant();
    GateParams p;
    auto setup = stationary_gate(plant, p, 0.0);
    bool ok = true;
    std::string detail;
    for (int n = 1; n <= 4; ++n) {
        double target = n / p.tau * units::two_pi;
        auto grid = linear_grid(target - khz(1.0), target + khz(1.0), khz(0.05));
        auto scan = scan_mode_detuning(plant, setup, grid, exact());
        std::size_t best = 0;
        for (std::size_t i = 1; i < scan.points.size(); ++i) {
            if (scan.points[i].expected.p1 < scan.points[best].expected.p1) best = i;
        }
        double at = refine_p1_minimum(scan);
        double p1 = scan.points[best].expected.p1;
        double off = units::to_khz(at - target);
        bool pass = std::abs(off) <= 0.3 && p1 < 0.02;
        ok = ok && pass;
        detail += fmtn("%sn=%d: min at %.3f kHz (offset %+.3f), P1 = %.2e", n > 1 ? "; " : "", n,
                       units::to_khz(at), off, p1);
    }
    return {ok, detail};
}

// Constant light shift of 4.4 kHz, compensated by delta_g up to `residual`.
ScanResult stark_scan(double residual) {
    Plant plant = ideal_plant();
    GateParams p;
    auto probe = stationary_gate(plant, p, 0.0);
    double omega = probe.envelopes.at(0.0).omega_1;
    plant.beam.stark_coeff = khz(4.4) / (omega * omega);
    auto setup = stationary_gate(plant, p, 0.0);
    setup.params.delta_g = setup.envelopes.at(0.0).stark - residual;
    auto grid = linear_grid(-khz(35.0), khz(35.0), khz(0.5));
    return scan_mode_detuning(plant, setup, grid, exact());
}

// 3. Compensated curves are symmetric in delta_m.
Outcome compensated_symmetry() {
    auto scan = stark_scan(0.0);
    std::map<long, Populations> by_value;
    for (const auto &pt : scan.points) by_value[std::lround(units::to_khz(pt.value) * 1000)] = pt.expected;
    double worst = 0.0;
    for (const auto &[key, a] : by_value) {
        auto it = by_value.find(-key);
        if (it == by_value.end()) return {false, "grid not symmetric"};
        const auto &b = it->second;
        worst = std::max({worst, std::abs(a.p0 - b.p0), std::abs(a.p1 - b.p1), std::abs(a.p2 - b.p2)});
    }
    return {worst < 1e-3, fmtn("max |P_k(dm) - P_k(-dm)| = %.2e (< 1e-3) over |dm| <= 35 kHz", worst)};
}

// 4. A 150 Hz residual light shift breaks the symmetry near small |delta_m|.
Outcome residual_asymmetry() {
    auto scan = stark_scan(units::two_pi * 150.0);
    double low = asymmetry_metric(scan, khz(8.0));
    double all = asymmetry_metric(scan);
    double high_sum = 0.0;
    int high_n = 0;
    for (const auto &[v, a] : asymmetry_profile(scan)) {
        if (v > khz(8.0)) {
            high_sum += a;
            ++high_n;
        }
    }
    double high = high_n ? high_sum / high_n : 0.0;
    return {low > 0.01 && low > high,
            fmtn("asymmetry |dm| < 8 kHz = %.4f (> 0.01), |dm| > 8 kHz = %.4f, all = %.4f", low, high, all)};
}

// 5. Ramsey calibration and the resulting stationary fidelity.
Outcome noise_calibration() {
    auto &r = runs();
    double sigma = calibrate_noise(r.config.ramsey_loss, r.config.ramsey_delay);
    double loss = 1.0 - ramsey_contrast(sigma, r.config.ramsey_delay);
    const auto &g = r.gate(GateMode::Stationary);
    double f = g.fidelity.sampled.fidelity;
    bool loss_ok = std::abs(loss - 0.014) <= 0.001;
    bool f_ok = std::abs(f - 0.970) <= 0.010;
    return {loss_ok && f_ok,
            fmtn("contrast loss %.4f (0.014 +- 0.001); stationary F = %.4f +- %.4f over %d draws x %ld shots "
                 "(0.970 +- 0.010), infinite-shot F = %.4f",
                 loss, f, g.fidelity.sampled.fidelity_error, r.config.fidelity_draws, r.config.shots,
                 g.fidelity.ensemble_fidelity)};
}

// 6. Dynamic transport gate matches the stationary gate; static is not better.
Outcome transport_parity() {
    auto &r = runs();
    const auto &st = r.gate(GateMode::Stationary).fidelity;
    const auto &sc = r.gate(GateMode::TransportStatic).fidelity;
    const auto &dy = r.gate(GateMode::TransportDynamic).fidelity;
    double diff = dy.ensemble_fidelity - st.ensemble_fidelity;
    double shot = dy.sampled.fidelity_error;
    bool ok = std::abs(diff) <= 0.005 && sc.ensemble_fidelity <= dy.ensemble_fidelity + shot;
    return {ok, fmtn("F stationary %.4f, dynamic %.4f (|diff| = %.4f <= 0.005), static %.4f "
                     "(<= dynamic + %.4f); sampled %.4f / %.4f / %.4f",
                     st.ensemble_fidelity, dy.ensemble_fidelity, std::abs(diff), sc.ensemble_fidelity, shot,
                     st.sampled.fidelity, dy.sampled.fidelity, sc.sampled.fidelity)};
}

// 7. Static compensation with kappa set by the 5 kHz centre-vs-edge difference.
Outcome stark_scale() {
    auto &r = runs();
    const auto &g = r.gate(GateMode::TransportStatic);
    const auto &seg = g.segment_stark;
    double diff = *std::max_element(seg.begin(), seg.end()) - seg.front();
    double dg = units::to_khz(g.setup.params.delta_g);
    bool ok = dg >= 3.0 && dg <= 6.0 && std::abs(units::to_khz(diff) - 5.0) < 0.05;
    return {ok, fmtn("centre-vs-edge light shift %.3f kHz, delta_g = %.3f kHz (3..6) at delta_m = %.2f kHz",
                     units::to_khz(diff), dg, units::to_khz(g.setup.params.delta_m))};
}

// 8. Doppler flattening of the default plant.
Outcome doppler_flattening() {
    const auto &b = runs().waveform();
    const auto &rounds = b.doppler.rounds;
    double before = units::to_khz(rounds.front().spread);
    double after = units::to_khz(rounds.back().spread);
    auto corrections = static_cast<int>(rounds.size()) - 1;
    double width = b.spectrum_after.fit ? units::to_khz(b.spectrum_after.fit->width) : INFINITY;
    bool ok = before >= 20.0 && after <= 2.0 && corrections <= 5 && b.doppler.converged &&
              b.spectrum_before.multimodal && !b.spectrum_after.multimodal && width < 0.4 * before;
    return {ok, fmtn("segment spread %.2f kHz (>= 20) -> %.2f kHz (<= 2) after %d corrections (<= 5); "
                     "full-transit spectrum %s -> %s, fitted width %.2f kHz (< %.2f)",
                     before, after, corrections, b.spectrum_before.multimodal ? "multimodal" : "single",
                     b.spectrum_after.multimodal ? "multimodal" : "single", width, 0.4 * before)};
}

// 9. Confinement flattening of the default plant.
Outcome confinement_flattening() {
    const auto &c = runs().waveform().confinement;
    double before = c.rounds.front().max_deviation;
    double after = c.rounds.back().max_deviation;
    bool ok = std::abs(before - 0.046) <= 0.002 && after <= 0.002 && c.converged;
    return {ok, fmtn("peak omega_COM deviation %.4f (0.046 +- 0.002) -> %.4f (<= 0.002)", before, after)};
}

// 10. Doppler arithmetic against k v cos(theta).
Outcome doppler_arithmetic() {
    BeamModel beam;
    double got = units::to_khz(doppler_shift(beam, 0.5));
    double oracle = 0.5 * std::cos(units::pi / 4) / 729e-9 / 1e3;
    bool ok = std::abs(got - 485.0) <= 0.1 && std::abs(got - oracle) < 1e-9;
    return {ok, fmtn("delta_D / 2pi = %.4f kHz (485.0 +- 0.1), oracle %.4f kHz", got, oracle)};
}

// 11. Propagator against brute-force stepping; analytic gate condition.
Outcome oracle_equivalence() {
    auto [spec, ops] = build_space(6);
    std::mt19937_64 rng(20240611);
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
        auto d = oracle::random_drive(rng, 160e-6);
        Vector psi0 = oracle::random_state(spec, rng);
        Vector ref = oracle::brute_force(ops, d, psi0, 1e-9);
        auto got = propagate(QuantumState(spec, psi0), oracle::gate_params(d), oracle::envelopes(d), 1e-9);
        worst = std::max(worst, (got.amplitudes() - ref).lpNorm<Eigen::Infinity>());
    }
    GateParams gp;
    auto ref = analytic_ms_reference(gp);
    HilbertSpec big(15);
    auto out = propagate(QuantumState::basis(big, Spin::S, Spin::S, 0), gp,
                         EnvelopeSet::constant(gp.tau, ref.ideal_rabi), 1e-10);
    double f = overlap_fidelity(out, bell_target());
    return {worst < 1e-8 && f > 0.9999,
            fmtn("max state error %.2e over 20 draws (< 1e-8); analytic-condition F = %.7f (> 0.9999)", worst, f)};
}

std::string slurp(const fs::path &p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::map<std::string, std::string> tree(const fs::path &dir) {
    std::map<std::string, std::string> out;
    if (!fs::exists(dir)) return out;
    for (const auto &e : fs::recursive_directory_iterator(dir)) {
        if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = slurp(e.path());
    }
    return out;
}

// 12. Every CLI command twice with the same seed gives identical bytes.
Outcome cli_determinism(const std::string &cli) {
    if (cli.empty()) return {false, "no CLI path given"};
    fs::path root = fs::current_path() / "acceptance_cli";
    fs::remove_all(root);
    fs::create_directories(root);
    fs::path config = root / "small.json";
    std::ofstream(config) << R"({
  "gate": {"fidelity_draws": 10, "parity_phases": 8},
  "run": {"shots": 300, "seed": 11},
  "scan": {"grid_khz": {"start": -20, "stop": 20, "step": 2}, "mode": "stationary",
           "residual_stark_hz": 150}
})";
    const std::vector<std::pair<std::string, std::string>> commands = {
        {"build", "build-waveform"},
        {"stationary", "run-gate --mode stationary"},
        {"static", "run-gate --mode transport-static"},
        {"dynamic", "run-gate --mode transport-dynamic"},
        {"scan", "scan"},
        {"calibrate", "calibrate"},
        {"selftest", "selftest"},
    };
    bool ok = true;
    std::string detail;
    for (const auto &[name, args] : commands) {
        std::map<std::string, std::string> trees[2];
        int codes[2];
        for (int k = 0; k < 2; ++k) {
            fs::path out = root / (name + "_" + std::to_string(k));
            std::string cmd = "\"" + cli + "\" --config \"" + config.string() + "\" --out \"" + out.string() +
                              "\" " + args + " > \"" + (root / (name + std::to_string(k) + ".log")).string() +
                              "\" 2>&1";
            codes[k] = std::system(cmd.c_str());
            trees[k] = tree(out);
        }
        std::string logs[2] = {slurp(root / (name + "0.log")), slurp(root / (name + "1.log"))};
        bool same = codes[0] == codes[1] && trees[0] == trees[1] && logs[0] == logs[1] && !trees[0].empty() &&
                    codes[0] == 0;
        ok = ok && same;
        detail += fmtn("%s%s: %zu files %s (exit %d)", detail.empty() ? "" : "; ", name.c_str(), trees[0].size(),
                       same ? "identical" : "DIFFER", codes[0]);
    }
    return {ok, detail};
}

}  // namespace

int main(int argc, char **argv) {
    std::string cli = argc > 1 ? argv[1] : "";
    std::set<int> only;
    for (int i = 2; i < argc; ++i) only.insert(std::atoi(argv[i]));

    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"ideal-gate fidelity", ideal_gate_fidelity},
        {"P1 minima at n / tau", p1_minima},
        {"compensated symmetry", compensated_symmetry},
        {"residual-shift asymmetry", residual_asymmetry},
        {"noise calibration", noise_calibration},
        {"transport-dynamic parity with stationary", transport_parity},
        {"Stark compensation scale", stark_scale},
        {"Doppler flattening", doppler_flattening},
        {"confinement flattening", confinement_flattening},
        {"Doppler arithmetic", doppler_arithmetic},
        {"oracle equivalence", oracle_equivalence},
        {"determinism", [&] { return cli_determinism(cli); }},
    };

    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        int n = static_cast<int>(i) + 1;
        if (!only.empty() && !only.count(n)) continue;
        Outcome o;
        auto t0 = std::chrono::steady_clock::now();
        try {
            o = criteria[i].second();
        } catch (const std::exception &e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        if (!o.pass) ++failures;
        std::printf("%s %2d %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", n, criteria[i].first.c_str(),
                    o.detail.c_str(), seconds_since(t0));
        std::fflush(stdout);
    }
    std::printf("%d of %d criteria failed\n", failures, only.empty() ? static_cast<int>(criteria.size())
                                                                     : static_cast<int>(only.size()));
    return failures == 0 ? 0 : 1;
}
