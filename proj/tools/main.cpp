// tgate: command-line front end for waveform building, gate calibration,
// figure-data scans and the oracle self-test.
#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <iostream>
#include <optional>
#include <random>

#include "config.hpp"
#include "oracles.hpp"
#include "output.hpp"
#include "tgate/error.hpp"
#include "tgate/numerics.hpp"
#include "tgate/pipeline.hpp"

using namespace tgate;
using namespace tgate::cli;
using nlohmann::json;

namespace {

int exit_code(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Config:
        case ErrorKind::InvalidArgument:
        case ErrorKind::OutOfRange:
            return 2;
        case ErrorKind::CalibrationFailure:
        case ErrorKind::RescanRequired:
        case ErrorKind::InfeasibleCompensation:
        case ErrorKind::EstimationFailure:
        case ErrorKind::NoSolution:
        case ErrorKind::InfeasibleKeyframe:
        case ErrorKind::ClampViolation:
        case ErrorKind::TrajectoryFailure:
        case ErrorKind::Resolution:
            return 3;
        case ErrorKind::IntegrationFailure:
        case ErrorKind::CutoffTooSmall:
            return 4;
        default:
            return 1;
    }
}

struct Invocation {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<long> shots;
    std::string out = "out";
    std::string mode;
};

ExperimentConfig resolve_config(const Invocation &inv) {
    ExperimentConfig c;
    if (inv.config_path.empty()) {
        c = default_config();
        finalize(c);
    } else {
        c = load_config(inv.config_path);
    }
    if (inv.seed) c.pipeline.seed = *inv.seed;
    if (inv.shots) {
        if (*inv.shots < 0) throw Error(ErrorKind::Config, "--shots must be >= 0");
        c.pipeline.shots = *inv.shots;
    }
    if (!inv.mode.empty()) {
        try {
            c.scan.mode = parse_gate_mode(inv.mode);
        } catch (const Error &e) {
            throw Error(ErrorKind::Config, std::string("--mode: ") + e.what());
        }
    }
    return c;
}

double khz_of(double omega) {
    return units::to_khz(omega);
}

// --- table builders --------------------------------------------------------

Table scan_table(const ScanResult &scan, const std::string &title) {
    Table t(title + " (" + scan.parameter + ")",
            {scan.parameter + "_khz", "p0", "p1", "p2", "p0_err", "p1_err", "p2_err", "p0_expected",
             "p1_expected", "p2_expected", "n0", "n1", "n2", "shots"});
    for (const auto &pt : scan.points) {
        Populations m = pt.measured();
        Populations u{0.0, 0.0, 0.0};
        double n0 = 0, n1 = 0, n2 = 0, shots = 0;
        if (pt.record) {
            u = pt.record->uncertainty();
            n0 = static_cast<double>(pt.record->n0);
            n1 = static_cast<double>(pt.record->n1);
            n2 = static_cast<double>(pt.record->n2);
            shots = static_cast<double>(pt.record->shots);
        }
        t.add({khz_of(pt.value), m.p0, m.p1, m.p2, u.p0, u.p1, u.p2, pt.expected.p0, pt.expected.p1,
               pt.expected.p2, n0, n1, n2, shots});
    }
    return t;
}

Table spectrum_table(const SpectroscopyResult &r, const std::string &title) {
    Table t(title, {"detuning_khz", "excitation", "excitation_err"});
    auto ex = r.excitation();
    for (std::size_t i = 0; i < r.detunings.size(); ++i) {
        t.add({khz_of(r.detunings[i]), ex[i], r.bright_error[i]});
    }
    return t;
}

Table trajectory_table(const Plant &plant, const Waveform &wf, const std::string &title) {
    auto traj = extract_trajectory(plant.trap, wf);
    Table t(title, {"time_us", "position_um", "velocity_m_s", "omega_com_mhz", "doppler_khz"});
    for (std::size_t i = 0; i < traj.time.size(); ++i) {
        t.add({traj.time[i] / units::us, traj.position[i], traj.velocity[i],
               units::to_mhz(traj.omega_com[i]), khz_of(doppler_shift(plant.beam, traj.velocity[i]))});
    }
    return t;
}

Table parity_table(const ParityFit &fit) {
    Table t("parity scan", {"phase_rad", "parity", "n0", "n1", "n2", "shots"});
    for (const auto &pt : fit.points) {
        t.add({pt.phase, pt.parity, static_cast<double>(pt.record.n0), static_cast<double>(pt.record.n1),
               static_cast<double>(pt.record.n2), static_cast<double>(pt.record.shots)});
    }
    return t;
}

double fitted_width(const SpectroscopyResult &r) {
    return r.fit ? r.fit->width : 0.0;
}

// --- commands --------------------------------------------------------------

json write_build(const ExperimentConfig &c, const WaveformBuild &b, OutputDir &out) {
    save_waveform(out.path("waveform.txt").string(), b.waveform);
    out.record("waveform.txt");

    Table com("confinement profile per round", {"round", "position_um", "omega_com_mhz", "deviation_rel"});
    for (std::size_t r = 0; r < b.confinement.rounds.size(); ++r) {
        for (const auto &p : b.confinement.rounds[r].profile) {
            com.add({static_cast<double>(r), p.position, units::to_mhz(p.omega),
                     p.omega / c.pipeline.plant.omega_com - 1.0});
        }
    }
    out.write_table("com_profile.csv", com);

    Table dop("segment Doppler shift per round",
              {"round", "segment", "doppler_khz", "doppler_err_khz", "stretch_factor"});
    for (std::size_t r = 0; r < b.doppler.rounds.size(); ++r) {
        const auto &round = b.doppler.rounds[r];
        for (std::size_t k = 0; k < round.segment_doppler.size(); ++k) {
            double f = k < round.factors.size() ? round.factors[k] : 1.0;
            dop.add({static_cast<double>(r), static_cast<double>(k), khz_of(round.segment_doppler[k]),
                     khz_of(round.segment_error[k]), f});
        }
    }
    out.write_table("doppler_profile.csv", dop);
    out.write_table("spectrum_before.csv", spectrum_table(b.spectrum_before, "full-transit spectrum, uncorrected"));
    out.write_table("spectrum_after.csv", spectrum_table(b.spectrum_after, "full-transit spectrum, corrected"));
    const Plant &plant = c.pipeline.plant;
    out.write_table("trajectory_before.csv", trajectory_table(plant, b.initial, "trajectory, uncorrected"));
    out.write_table("trajectory_after.csv", trajectory_table(plant, b.waveform, "trajectory, corrected"));

    const auto &rounds = b.doppler.rounds;
    json summary = {
        {"confinement_deviation_initial_rel", b.confinement.rounds.front().max_deviation},
        {"confinement_deviation_final_rel", b.confinement.rounds.back().max_deviation},
        {"confinement_rounds", b.confinement.rounds.size()},
        {"doppler_spread_initial_khz", khz_of(rounds.front().spread)},
        {"doppler_spread_final_khz", khz_of(rounds.back().spread)},
        {"doppler_rounds", rounds.size()},
        {"doppler_target_khz", khz_of(b.doppler.target)},
        {"multimodal_before", b.spectrum_before.multimodal},
        {"multimodal_after", b.spectrum_after.multimodal},
        {"fitted_width_after_khz", khz_of(fitted_width(b.spectrum_after))},
        {"duration_us", b.waveform.duration() / units::us},
    };
    json report = to_json(b);
    report["summary"] = summary;
    out.write_json("build_report.json", report);
    return summary;
}

json cmd_build_waveform(const ExperimentConfig &c, OutputDir &out) {
    auto b = build_transport_waveform(c.pipeline);
    json s = write_build(c, b, out);
    std::printf("confinement deviation %.4f -> %.4f in %d rounds\n",
                s["confinement_deviation_initial_rel"].get<double>(),
                s["confinement_deviation_final_rel"].get<double>(), s["confinement_rounds"].get<int>());
    std::printf("segment Doppler spread %.2f kHz -> %.2f kHz (target %.2f kHz)\n",
                s["doppler_spread_initial_khz"].get<double>(), s["doppler_spread_final_khz"].get<double>(),
                s["doppler_target_khz"].get<double>());
    std::printf("full-transit spectrum %s -> %s\n", b.spectrum_before.multimodal ? "multimodal" : "single peak",
                b.spectrum_after.multimodal ? "multimodal" : "single peak");
    return s;
}

Waveform transport_waveform(const ExperimentConfig &c, OutputDir &out, json &summary) {
    if (!c.waveform_path.empty()) return load_waveform(c.waveform_path);
    auto b = build_transport_waveform(c.pipeline);
    summary["waveform_build"] = write_build(c, b, out);
    return b.waveform;
}

json gate_summary(const GateRun &run) {
    const auto &f = run.fidelity;
    json s = {{"mode", to_string(run.mode)},
              {"fidelity", f.sampled.fidelity},
              {"fidelity_err", f.sampled.fidelity_error},
              {"ensemble_fidelity", f.ensemble_fidelity},
              {"p0", f.sampled.p0},
              {"p2", f.sampled.p2},
              {"parity_amplitude", f.sampled.parity_amplitude},
              {"delta_m_khz", khz_of(run.setup.params.delta_m)},
              {"delta_g_khz", khz_of(run.setup.params.delta_g)},
              {"rabi_scale", run.setup.params.rabi_scale},
              {"stark_coeff_s", run.stark_coeff}};
    if (run.compensation) {
        s["residual_stark_hz"] = run.compensation->residual / units::two_pi;
        s["residual_stark_abs_mean_hz"] = run.compensation->residual_abs_mean / units::two_pi;
    }
    return s;
}

json cmd_run_gate(const ExperimentConfig &c, GateMode mode, OutputDir &out) {
    json summary;
    std::optional<Waveform> wf;
    if (mode != GateMode::Stationary) wf = transport_waveform(c, out, summary);
    auto run = run_gate(c.pipeline, mode, wf ? &*wf : nullptr);
    if (run.compensation) {
        save_waveform(out.path("waveform_compensated.txt").string(), run.compensation->waveform);
        out.record("waveform_compensated.txt");
    }
    for (std::size_t i = 0; i < run.scans.size(); ++i) {
        out.write_table("scan_" + std::to_string(i) + ".csv",
                        scan_table(run.scans[i], "calibration scan " + std::to_string(i)));
    }
    out.write_table("parity.csv", parity_table(run.fidelity.parity));
    json gs = gate_summary(run);
    json report = to_json(run);
    report["summary"] = gs;
    out.write_json("gate_report.json", report);
    summary["gate"] = gs;
    std::printf("%s: F = %.4f +- %.4f (ensemble %.4f), delta_m = %.3f kHz, delta_g = %.3f kHz, rabi_scale = %.4f\n",
                to_string(mode).c_str(), run.fidelity.sampled.fidelity, run.fidelity.sampled.fidelity_error,
                run.fidelity.ensemble_fidelity, khz_of(run.setup.params.delta_m),
                khz_of(run.setup.params.delta_g), run.setup.params.rabi_scale);
    return summary;
}

json cmd_scan(const ExperimentConfig &c, OutputDir &out) {
    auto grid = c.scan.grid.values();
    json summary;
    // Calibrate the gate first; the final fidelity estimate is not needed.
    ExperimentConfig cal = c;
    cal.pipeline.fidelity_draws = 1;
    std::optional<Waveform> wf;
    if (c.scan.mode != GateMode::Stationary) wf = transport_waveform(cal, out, summary);
    auto run = run_gate(cal.pipeline, c.scan.mode, wf ? &*wf : nullptr);

    Plant plant = noisy_plant(c.pipeline);
    plant.beam.stark_coeff = run.stark_coeff;
    GateSetup setup = run.setup;
    // Light shift the calibration left in: the tones sit below the shifted resonance.
    setup.params.delta_g -= units::two_pi * c.scan.residual_stark_hz;

    ScanOptions so;
    so.measure.shots = c.pipeline.shots;
    so.measure.seed = stream_rng(c.pipeline.seed, 0, 0x5ca9)();
    so.quadrature_nodes = c.pipeline.quadrature_nodes;
    ScanResult scan = c.scan.kind == ScanKind::ModeDetuning ? scan_mode_detuning(plant, setup, grid, so)
                                                            : scan_global_detuning(plant, setup, grid, so);
    out.write_table("scan.csv", scan_table(scan, "population scan, " + to_string(c.scan.mode)));

    json s = {{"kind", to_string(c.scan.kind)},
              {"mode", to_string(c.scan.mode)},
              {"points", scan.points.size()},
              {"residual_stark_hz", c.scan.residual_stark_hz},
              {"calibrated", gate_summary(run)}};
    try {
        auto profile = asymmetry_profile(scan);
        Table t("asymmetry per |detuning|", {"abs_detuning_khz", "asymmetry"});
        for (const auto &[v, a] : profile) t.add({khz_of(v), a});
        out.write_table("asymmetry.csv", t);
        s["asymmetry_metric"] = asymmetry_metric(scan);
        s["asymmetry_metric_below_8khz"] = asymmetry_metric(scan, units::khz(8.0));
    } catch (const Error &e) {
        if (e.kind() != ErrorKind::InvalidArgument) throw;
        s["asymmetry_metric"] = nullptr;
    }
    json report = to_json(scan);
    report["summary"] = s;
    out.write_json("scan_report.json", report);
    summary["scan"] = s;
    std::printf("%s scan over %zu points (%s gate)", to_string(c.scan.kind).c_str(), scan.points.size(),
                to_string(c.scan.mode).c_str());
    if (s["asymmetry_metric"].is_number()) {
        std::printf(", asymmetry %.4f (|x| < 8 kHz: %.4f)", s["asymmetry_metric"].get<double>(),
                    s["asymmetry_metric_below_8khz"].get<double>());
    }
    std::printf("\n");
    return summary;
}

json cmd_calibrate(const ExperimentConfig &c, OutputDir &out) {
    const auto &p = c.pipeline;
    double sigma = calibrate_noise(p.ramsey_loss, p.ramsey_delay);
    Table ramsey("Ramsey contrast with the calibrated carrier noise", {"delay_us", "contrast"});
    for (int i = 0; i <= 16; ++i) {
        double delay = 20.0 * i;
        ramsey.add({delay, delay > 0 ? ramsey_contrast(sigma, delay * units::us) : 1.0});
    }
    out.write_table("ramsey.csv", ramsey);
    double achieved = 1.0 - ramsey_contrast(sigma, p.ramsey_delay);

    ExperimentConfig cal = c;
    cal.pipeline.fidelity_draws = 1;
    auto run = run_stationary(cal.pipeline);
    for (std::size_t i = 0; i < run.scans.size(); ++i) {
        out.write_table("scan_" + std::to_string(i) + ".csv",
                        scan_table(run.scans[i], "stationary calibration scan " + std::to_string(i)));
    }
    json s = {{"sigma_carrier_hz", sigma / units::two_pi},
              {"ramsey_contrast_loss", achieved},
              {"ramsey_delay_us", p.ramsey_delay / units::us},
              {"peak_rabi_khz", khz_of(p.plant.beam.peak_rabi)},
              {"stationary_delta_m_khz", khz_of(run.setup.params.delta_m)},
              {"stationary_delta_g_khz", khz_of(run.setup.params.delta_g)},
              {"stationary_rabi_scale", run.setup.params.rabi_scale}};
    json report = to_json(run);
    report.erase("fidelity");
    report["summary"] = s;
    out.write_json("calibration_report.json", report);
    std::printf("carrier noise sigma/2pi = %.2f Hz gives %.4f Ramsey contrast loss at %.0f us\n",
                sigma / units::two_pi, achieved, p.ramsey_delay / units::us);
    std::printf("stationary gate: delta_m = %.3f kHz, delta_g = %.3f kHz, rabi_scale = %.4f\n",
                khz_of(run.setup.params.delta_m), khz_of(run.setup.params.delta_g),
                run.setup.params.rabi_scale);
    return s;
}

json cmd_selftest(const ExperimentConfig &c, OutputDir &out) {
    Table t("oracle self-test", {"check", "value", "limit", "pass"});
    json results = json::array();
    bool all = true;
    auto record = [&](const std::string &name, double value, double limit, bool pass) {
        all = all && pass;
        t.add_cells({name, format_number(value), format_number(limit), pass ? "1" : "0"});
        results.push_back({{"check", name}, {"value", value}, {"limit", limit}, {"pass", pass}});
        std::printf("%s %s: %s (limit %s)\n", pass ? "PASS" : "FAIL", name.c_str(), format_number(value).c_str(),
                    format_number(limit).c_str());
    };

    // Propagator against 1 ns brute-force stepping.
    auto [spec, ops] = build_space(6);
    std::mt19937_64 rng(c.pipeline.seed);
    double worst = 0.0;
    for (int i = 0; i < 3; ++i) {
        auto d = oracle::random_drive(rng, 160e-6);
        Vector psi0 = oracle::random_state(spec, rng);
        Vector ref = oracle::brute_force(ops, d, psi0, 1e-9);
        auto got = propagate(QuantumState(spec, psi0), oracle::gate_params(d), oracle::envelopes(d), 1e-9);
        worst = std::max(worst, (got.amplitudes() - ref).lpNorm<Eigen::Infinity>());
    }
    record("propagator_vs_brute_force_max_error", worst, 1e-8, worst < 1e-8);

    // Analytic gate condition.
    GateParams gp;
    auto ref = analytic_ms_reference(gp);
    HilbertSpec big(15);
    auto final_state = propagate(QuantumState::basis(big, Spin::S, Spin::S, 0), gp,
                                 EnvelopeSet::constant(gp.tau, ref.ideal_rabi), 1e-10);
    double f = overlap_fidelity(final_state, bell_target());
    record("analytic_condition_fidelity", f, 0.9999, f > 0.9999);

    // Doppler arithmetic.
    double dd = khz_of(doppler_shift(BeamModel{}, 0.5));
    record("doppler_shift_0p5_m_s_khz", dd, 0.1, std::abs(dd - 485.0) < 0.1);

    // Ramsey calibration.
    double sigma = calibrate_noise(0.014, 160e-6);
    double loss = 1.0 - ramsey_contrast(sigma, 160e-6);
    record("ramsey_contrast_loss", loss, 1e-3, std::abs(loss - 0.014) < 1e-3);

    // Keyframe frequency on the ideal trap.
    TrapModel ideal({}, Imperfections::none());
    auto v = solve_keyframe(ideal, 0.0, units::mhz(1.41));
    double w = locate_well(ideal, v, 0.0, PotentialModel::Ideal).omega;
    double dev = std::abs(w / units::mhz(1.41) - 1.0);
    record("keyframe_frequency_rel_error", dev, 1e-4, dev < 1e-4);

    out.write_table("selftest.csv", t);
    json s = {{"checks", results}, {"all_passed", all}};
    if (!all) throw Error(ErrorKind::EstimationFailure, "self-test failed");
    return s;
}

}  // namespace

int main(int argc, char **argv) {
    CLI::App app{"Transport-gate simulator: waveform building, calibration, scans and self-test"};
    app.require_subcommand(1);
    app.fallthrough();
    Invocation inv;
    app.add_option("--config", inv.config_path, "JSON configuration file (defaults when absent)")
        ->check(CLI::ExistingFile);
    app.add_option("--seed", inv.seed, "Override run.seed");
    app.add_option("--out", inv.out, "Output directory")->capture_default_str();
    app.add_option("--shots", inv.shots, "Override run.shots (0 = expectation values)");

    auto *build = app.add_subcommand("build-waveform", "Solve, synthesize and flatten the transport waveform");
    auto *gate = app.add_subcommand("run-gate", "Calibrate a gate and estimate its Bell-state fidelity");
    gate->add_option("--mode", inv.mode, "stationary | transport-static | transport-dynamic")->required();
    auto *scan = app.add_subcommand("scan", "Population scan for figure data (grid from scan section)");
    scan->add_option("--mode", inv.mode, "Gate to calibrate before scanning (overrides scan.mode)");
    auto *calibrate = app.add_subcommand("calibrate", "Noise and stationary-gate calibration");
    auto *selftest = app.add_subcommand("selftest", "Run the oracle self-test");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        ExperimentConfig config = resolve_config(inv);
        std::string command = app.get_subcommands().front()->get_name();
        OutputDir out(inv.out, command, config_hash(config), config.pipeline.seed);
        json summary;
        if (build->parsed()) {
            summary = cmd_build_waveform(config, out);
        } else if (gate->parsed()) {
            summary = cmd_run_gate(config, config.scan.mode, out);
        } else if (scan->parsed()) {
            summary = cmd_scan(config, out);
        } else if (calibrate->parsed()) {
            summary = cmd_calibrate(config, out);
        } else if (selftest->parsed()) {
            summary = cmd_selftest(config, out);
        }
        out.write_manifest(to_json(config), summary);
        return 0;
    } catch (const Error &e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return exit_code(e.kind());
    } catch (const std::exception &e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
