#include "tgate/pipeline.hpp"

#include <algorithm>
#include <cmath>

#include "tgate/error.hpp"
#include "tgate/numerics.hpp"

namespace tgate {

namespace {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) {
    return stream_rng(seed, 0, salt)();
}

std::vector<double> khz_grid(double lo, double hi, double step) {
    return linear_grid(units::khz(lo), units::khz(hi), units::khz(step));
}

ScanOptions scan_options(const PipelineConfig &c, std::uint64_t salt) {
    ScanOptions o;
    o.measure.shots = c.shots;
    o.measure.seed = derive_seed(c.seed, salt);
    o.quadrature_nodes = c.quadrature_nodes;
    return o;
}

}  // namespace

double PipelineConfig::analytic_peak_rabi() const {
    GateParams p;
    p.tau = gate_time;
    p.delta_m = stationary_delta_m;
    p.eta_bm = plant.eta_bm;
    p.omega_bm = plant.omega_bm();
    auto ref = analytic_ms_reference(p);
    double d = plant.spacing();
    return ref.ideal_rabi / plant.beam.field(stationary_position - 0.5 * d);
}

PipelineConfig PipelineConfig::defaults() {
    PipelineConfig c;
    c.plant.trap = TrapModel({}, Imperfections::defaults());
    c.plant.beam.peak_rabi = c.analytic_peak_rabi();
    c.stationary_delta_m_grid = khz_grid(11.0, 14.0, 0.25);
    c.static_delta_m_grid = khz_grid(10.0, 17.0, 1.0);
    c.static_delta_g_grid = khz_grid(0.0, 8.0, 0.2);
    c.dynamic_delta_m_grid = khz_grid(-18.0, -11.0, 1.0);
    return c;
}

void PipelineConfig::validate() const {
    plant.beam.validate();
    if (!(plant.beam.peak_rabi > 0.0)) throw Error(ErrorKind::Config, "peak Rabi frequency must be > 0");
    if (!(gate_time > 0.0)) throw Error(ErrorKind::Config, "gate time must be > 0");
    if (!(region_end > region_start) || !(keyframe_spacing > 0.0)) {
        throw Error(ErrorKind::Config, "transport region must have positive length and spacing");
    }
    if (segments < 1) throw Error(ErrorKind::Config, "at least one segment is required");
    if (shots < 0 || doppler_shots < 0 || fidelity_draws < 1 || parity_phases < 4 || quadrature_nodes < 1) {
        throw Error(ErrorKind::Config, "shots >= 0, doppler shots >= 0, draws >= 1, phases >= 4 and nodes >= 1 required");
    }
    if (!(ramsey_loss >= 0.0 && ramsey_loss < 0.5) || !(ramsey_delay > 0.0)) {
        throw Error(ErrorKind::Config, "Ramsey loss must lie in [0, 0.5) with a positive delay");
    }
    if (!(stark_difference >= 0.0)) throw Error(ErrorKind::Config, "Stark difference must be >= 0");
    if (static_rounds < 1 || dynamic_rounds < 1) throw Error(ErrorKind::Config, "rounds must be >= 1");
}

Plant noisy_plant(const PipelineConfig &config) {
    Plant plant = config.plant;
    plant.noise.sigma_carrier = calibrate_noise(config.ramsey_loss, config.ramsey_delay);
    plant.noise.seed = derive_seed(config.seed, 0x7015e);
    return plant;
}

// ---------------------------------------------------------------------------

WaveformBuild build_transport_waveform(const PipelineConfig &config) {
    config.validate();
    const Plant &plant = config.plant;
    TrapModel model(plant.trap.basis(), Imperfections::none(), plant.trap.mass());
    std::vector<double> positions;
    auto n = static_cast<int>(std::lround((config.region_end - config.region_start) / config.keyframe_spacing));
    for (int i = 0; i <= n; ++i) positions.push_back(config.region_start + i * config.keyframe_spacing);
    auto keyframes = solve_keyframes(model, positions, plant.omega_com);
    auto initial = synthesize_waveform(plant.trap, keyframes, config.gate_time, config.segments);

    SpectroscopyOptions probe = config.doppler.probe;
    double target = nominal_doppler(plant, initial);
    probe.detunings = detuning_grid(target, units::khz(100.0), units::khz(1.0));
    probe.measure.shots = config.shots;
    probe.measure.seed = derive_seed(config.seed, 0xf011);
    auto before = carrier_spectroscopy(plant, extract_trajectory(plant.trap, initial), 0.0,
                                       initial.duration(), probe);

    ConfinementOptions co = config.confinement;
    co.profile.seed = derive_seed(config.seed, 0xc0f1);
    auto confinement = flatten_confinement(plant, initial, co);

    DopplerOptions dopts = config.doppler;
    dopts.probe.measure.shots = config.shots > 0 ? config.doppler_shots : 0;
    dopts.probe.measure.seed = derive_seed(config.seed, 0xd0b1);
    auto doppler = flatten_doppler(plant, confinement.waveform, dopts);

    probe.measure.seed = derive_seed(config.seed, 0xf012);
    auto after = carrier_spectroscopy(plant, extract_trajectory(plant.trap, doppler.waveform), 0.0,
                                      doppler.waveform.duration(), probe);
    Waveform final_wf = doppler.waveform;
    return {std::move(initial), std::move(final_wf), std::move(confinement), std::move(doppler),
            std::move(before), std::move(after)};
}

// ---------------------------------------------------------------------------

FidelityReport measure_fidelity(const Plant &plant, const GateSetup &setup, int draws, long shots,
                                int parity_phases, std::uint64_t seed) {
    HilbertSpec spec(plant.fock_cutoff);
    NoiseModel noise = plant.noise;
    noise.seed = seed;
    ShotOptions so;
    so.nbar = plant.nbar;
    auto ensemble = run_shots(spec, setup.params, setup.envelopes, noise, draws, so);

    FidelityReport r;
    std::vector<QuantumState> states;
    states.reserve(ensemble.size());
    for (const auto &s : ensemble) {
        auto p = populations(s.state);
        r.ensemble.p0 += p.p0;
        r.ensemble.p1 += p.p1;
        r.ensemble.p2 += p.p2;
        states.push_back(s.state);
    }
    double inv = 1.0 / static_cast<double>(ensemble.size());
    r.ensemble.p0 *= inv;
    r.ensemble.p1 *= inv;
    r.ensemble.p2 *= inv;

    ParityOptions po;
    po.phases = parity_phases;
    po.analysis_time = setup.analysis_time;
    po.shots_per_phase = 0;
    auto exact = parity_scan(ensemble, po);
    r.ensemble_fidelity = 0.5 * (r.ensemble.p0 + r.ensemble.p2 + exact.amplitude);

    long n = shots > 0 ? shots : 0;
    if (n > 0) {
        po.shots_per_phase = n;
        po.seed = derive_seed(seed, 0x9a41);
        r.parity = parity_scan(ensemble, po);
        auto record = sample_shots(states, n, derive_seed(seed, 0x9a42));
        r.sampled = bell_fidelity(record, r.parity.amplitude, r.parity.amplitude_error);
    } else {
        r.parity = exact;
        r.sampled.p0 = r.ensemble.p0;
        r.sampled.p2 = r.ensemble.p2;
        r.sampled.parity_amplitude = exact.amplitude;
        r.sampled.fidelity = r.ensemble_fidelity;
    }
    return r;
}

std::string to_string(GateMode mode) {
    switch (mode) {
        case GateMode::Stationary:
            return "stationary";
        case GateMode::TransportStatic:
            return "transport-static";
        case GateMode::TransportDynamic:
            return "transport-dynamic";
    }
    return "unknown";
}

GateMode parse_gate_mode(const std::string &text) {
    if (text == "stationary") return GateMode::Stationary;
    if (text == "transport-static") return GateMode::TransportStatic;
    if (text == "transport-dynamic") return GateMode::TransportDynamic;
    throw Error(ErrorKind::Config, "unknown gate mode '" + text + "'");
}

// ---------------------------------------------------------------------------

namespace {

SidebandOptions sideband_options(const PipelineConfig &c, double center, double half, double step,
                                 std::uint64_t salt) {
    SidebandOptions o;
    o.offsets = linear_grid(center - half, center + half, step);
    o.scan = scan_options(c, salt);
    return o;
}

// Rabi scale of the last balance, or the analytic constant-envelope value.
double stationary_guess(const Plant &plant, const GateParams &p, double position) {
    auto ref = analytic_ms_reference(p);
    double d = plant.spacing();
    double o = plant.beam.peak_rabi * 0.5 *
               (plant.beam.field(position - 0.5 * d) + plant.beam.field(position + 0.5 * d));
    return ref.ideal_rabi / o;
}

}  // namespace

GateRun run_stationary(const PipelineConfig &config) {
    config.validate();
    GateRun run;
    run.mode = GateMode::Stationary;
    Plant plant = noisy_plant(config);
    run.sigma_carrier = plant.noise.sigma_carrier;
    run.stark_coeff = plant.beam.stark_coeff;

    GateParams p;
    p.tau = config.gate_time;
    p.delta_m = config.stationary_delta_m;
    p.spin_phase = bell_spin_phase(p.delta_m);
    double scale = stationary_guess(plant, p, config.stationary_position);
    p.rabi_scale = scale;

    // Bare sidebands at reduced power over the gate duration.
    GateSetup base = stationary_gate(plant, p, config.stationary_position);
    run.sidebands.push_back(calibrate_sidebands(
        plant, base, sideband_options(config, 0.0, units::khz(15.0), units::khz(1.0), 0x5b01)));
    double bare = run.sidebands.back().mean_center();

    // Light-shifted sidebands at gate power with a pi-length probe.
    GateParams probe = p;
    probe.tau = stationary_probe_duration(plant, scale, config.stationary_position);
    GateSetup full = stationary_gate(plant, probe, config.stationary_position);
    double stark = full.envelopes.stark().front() * scale * scale;
    auto opts = sideband_options(config, bare + stark, units::khz(15.0), units::khz(1.0), 0x5b02);
    opts.rabi_scale = scale;
    run.sidebands.push_back(calibrate_sidebands(plant, full, opts));
    p.delta_g = run.sidebands.back().mean_center() - bare;
    run.segment_stark = {stark};

    GateSetup setup = stationary_gate(plant, p, config.stationary_position);
    run.scans.push_back(scan_mode_detuning(plant, setup, config.stationary_delta_m_grid,
                                           scan_options(config, 0x5c01)));
    setup.params.delta_m = refine_p1_minimum(run.scans.back());
    setup.params.spin_phase = bell_spin_phase(setup.params.delta_m);
    run.balance = balance_power(plant, setup, scan_options(config, 0xba01), scale);
    setup.params.rabi_scale = run.balance.rabi_scale;
    run.setup = setup;
    run.fidelity = measure_fidelity(plant, setup, config.fidelity_draws, config.shots,
                                    config.parity_phases, derive_seed(config.seed, 0xf1d0));
    return run;
}

namespace {

struct TransportContext {
    Plant plant;
    Trajectory traj;
    double nominal = 0.0;
};

TransportContext transport_context(const PipelineConfig &config, const Waveform &wf) {
    TransportContext ctx{noisy_plant(config), extract_trajectory(config.plant.trap, wf), 0.0};
    ctx.nominal = nominal_doppler(ctx.plant, wf);
    return ctx;
}

// Reference Doppler shift from the bare sidebands at reduced power.
double bare_doppler(const PipelineConfig &config, GateRun &run, const Plant &plant,
                    const Trajectory &traj, double duration, double nominal, std::uint64_t salt) {
    GateParams p;
    GateSetup base = transport_gate(plant, traj, duration, p, 0.0);
    run.sidebands.push_back(calibrate_sidebands(
        plant, base, sideband_options(config, nominal, units::khz(15.0), units::khz(1.0), salt)));
    return run.sidebands.back().mean_center();
}

constexpr double kTransportGuess = 1.8;


double nearest_scale(const BalancedScan &bs, double value, double fallback) {
    double best = fallback, dist = INFINITY;
    for (std::size_t i = 0; i < bs.rabi_scales.size(); ++i) {
        double d = std::abs(bs.scan.points[i].value - value);
        if (bs.rabi_scales[i] > 0.0 && d < dist) {
            dist = d;
            best = bs.rabi_scales[i];
        }
    }
    return best;
}

}  // namespace

GateRun run_transport_static(const PipelineConfig &config, const Waveform &wf) {
    config.validate();
    GateRun run;
    run.mode = GateMode::TransportStatic;
    auto ctx = transport_context(config, wf);
    Plant &plant = ctx.plant;
    run.sigma_carrier = plant.noise.sigma_carrier;
    auto windows = segment_windows(wf);

    double scale = kTransportGuess;
    double kappa_scale = scale;
    if (config.stark_difference > 0.0) {
        plant.beam.stark_coeff =
            calibrate_stark_coefficient(plant, wf, ctx.traj, scale, config.stark_difference);
    }
    run.doppler_reference = bare_doppler(config, run, plant, ctx.traj, wf.duration(), ctx.nominal, 0x5b11);

    GateParams p;
    p.delta_m = config.static_delta_m_grid[config.static_delta_m_grid.size() / 2];
    p.spin_phase = bell_spin_phase(p.delta_m);
    p.rabi_scale = scale;
    GateSetup setup = transport_gate(plant, ctx.traj, wf.duration(), p, run.doppler_reference);
    for (int round = 0; round < config.static_rounds; ++round) {
        std::uint64_t salt = 0x100 * static_cast<std::uint64_t>(round + 1);
        run.scans.push_back(scan_global_detuning(plant, setup, config.static_delta_g_grid,
                                                 scan_options(config, salt + 2)));
        setup.params.delta_g = refine_p1_minimum(run.scans.back());
        auto bs = scan_balanced_mode_detuning(plant, setup, config.static_delta_m_grid,
                                              scan_options(config, salt + 1), scale);
        run.scans.push_back(bs.scan);
        setup.params.delta_m = usable_p1_minimum(run.scans.back(), config.shots);
        setup.params.spin_phase = bell_spin_phase(setup.params.delta_m);
        scale = nearest_scale(bs, setup.params.delta_m, scale);
        run.balance = balance_power(plant, setup, scan_options(config, salt + 3), scale);
        double next = run.balance.rabi_scale;
        // The light shift is a property of the beam: fixed kappa * scale^2.
        if (config.stark_difference > 0.0) {
            plant.beam.stark_coeff *= (kappa_scale / next) * (kappa_scale / next);
        }
        kappa_scale = next;
        scale = next;
        setup = transport_gate(plant, ctx.traj, wf.duration(), setup.params, run.doppler_reference);
        setup.params.rabi_scale = scale;
    }
    run.stark_coeff = plant.beam.stark_coeff;
    auto per_kappa = segment_stark_profile(plant, ctx.traj, windows, scale);
    for (double s : per_kappa) run.segment_stark.push_back(s * plant.beam.stark_coeff);
    if (config.stark_difference > 0.0) {
        // Rebalance once with the final light-shift strength.
        run.balance = balance_power(plant, setup, scan_options(config, 0xba11), scale);
        setup.params.rabi_scale = run.balance.rabi_scale;
    }
    run.setup = setup;
    run.fidelity = measure_fidelity(plant, setup, config.fidelity_draws, config.shots,
                                    config.parity_phases, derive_seed(config.seed, 0xf1d0));
    return run;
}

GateRun run_transport_dynamic(const PipelineConfig &config, const Waveform &wf) {
    config.validate();
    GateRun run;
    run.mode = GateMode::TransportDynamic;
    auto ctx = transport_context(config, wf);
    Plant &plant = ctx.plant;
    run.sigma_carrier = plant.noise.sigma_carrier;

    double scale = kTransportGuess;
    double kappa_scale = scale;
    if (config.stark_difference > 0.0) {
        plant.beam.stark_coeff =
            calibrate_stark_coefficient(plant, wf, ctx.traj, scale, config.stark_difference);
    }
    run.doppler_reference = bare_doppler(config, run, plant, ctx.traj, wf.duration(), ctx.nominal, 0x5b21);

    GateParams p;
    p.delta_m = config.dynamic_delta_m_grid[config.dynamic_delta_m_grid.size() / 2];
    p.spin_phase = bell_spin_phase(p.delta_m);
    p.rabi_scale = scale;
    GateSetup setup = run.setup;
    for (int round = 0; round < config.dynamic_rounds; ++round) {
        std::uint64_t salt = 0x200 * static_cast<std::uint64_t>(round + 1);
        StarkCompensationOptions so;
        so.rabi_scale = scale;
        so.doppler_reference = run.doppler_reference;
        run.compensation = dynamic_stark_compensation(plant, wf, so);
        const Waveform &cw = run.compensation->waveform;
        auto traj = extract_trajectory(plant.trap, cw);
        setup = transport_gate(plant, traj, cw.duration(), p, run.doppler_reference);
        auto bs = scan_balanced_mode_detuning(plant, setup, config.dynamic_delta_m_grid,
                                              scan_options(config, salt + 1), scale);
        run.scans.push_back(bs.scan);
        setup.params.delta_m = usable_p1_minimum(run.scans.back(), config.shots);
        setup.params.spin_phase = bell_spin_phase(setup.params.delta_m);
        scale = nearest_scale(bs, setup.params.delta_m, scale);
        run.balance = balance_power(plant, setup, scan_options(config, salt + 3), scale);
        double next = run.balance.rabi_scale;
        if (config.stark_difference > 0.0) {
            plant.beam.stark_coeff *= (kappa_scale / next) * (kappa_scale / next);
        }
        kappa_scale = next;
        scale = next;
        p = setup.params;
        p.rabi_scale = scale;
    }
    // Final compensation at the balanced power.
    StarkCompensationOptions so;
    so.rabi_scale = scale;
    so.doppler_reference = run.doppler_reference;
    run.compensation = dynamic_stark_compensation(plant, wf, so);
    const Waveform &cw = run.compensation->waveform;
    auto traj = extract_trajectory(plant.trap, cw);
    setup = transport_gate(plant, traj, cw.duration(), p, run.doppler_reference);
    run.balance = balance_power(plant, setup, scan_options(config, 0xba21), scale);
    setup.params.rabi_scale = run.balance.rabi_scale;
    run.stark_coeff = plant.beam.stark_coeff;
    run.segment_stark = run.compensation->segment_stark;
    run.setup = setup;
    run.fidelity = measure_fidelity(plant, setup, config.fidelity_draws, config.shots,
                                    config.parity_phases, derive_seed(config.seed, 0xf1d0));
    return run;
}

GateRun run_gate(const PipelineConfig &config, GateMode mode, const Waveform *waveform) {
    if (mode == GateMode::Stationary) return run_stationary(config);
    if (waveform == nullptr) throw Error(ErrorKind::InvalidArgument, "transport gate needs a waveform");
    if (mode == GateMode::TransportStatic) return run_transport_static(config, *waveform);
    return run_transport_dynamic(config, *waveform);
}

// ---------------------------------------------------------------------------

nlohmann::json to_json(const WaveformBuild &b) {
    return {{"confinement", to_json(b.confinement)},
            {"doppler", to_json(b.doppler)},
            {"spectrum_before", to_json(b.spectrum_before)},
            {"spectrum_after", to_json(b.spectrum_after)},
            {"duration_s", b.waveform.duration()}};
}

nlohmann::json to_json(const FidelityReport &r) {
    return {{"sampled", to_json(r.sampled)},
            {"ensemble_fidelity", r.ensemble_fidelity},
            {"ensemble_populations", to_json(r.ensemble)},
            {"parity", to_json(r.parity)}};
}

nlohmann::json to_json(const GateRun &run) {
    nlohmann::json sidebands = nlohmann::json::array();
    for (const auto &s : run.sidebands) {
        sidebands.push_back({{"blue", to_json(s.blue)},
                             {"red", to_json(s.red)},
                             {"mean_center_rad_s", s.mean_center()}});
    }
    nlohmann::json scans = nlohmann::json::array();
    for (const auto &s : run.scans) scans.push_back(to_json(s));
    const auto &p = run.setup.params;
    nlohmann::json j = {{"mode", to_string(run.mode)},
                        {"sigma_carrier_rad_s", run.sigma_carrier},
                        {"stark_coeff_s", run.stark_coeff},
                        {"doppler_reference_rad_s", run.doppler_reference},
                        {"segment_stark_rad_s", run.segment_stark},
                        {"sidebands", sidebands},
                        {"scans", scans},
                        {"balance", to_json(run.balance)},
                        {"gate",
                         {{"tau_s", p.tau},
                          {"delta_m_rad_s", p.delta_m},
                          {"delta_g_rad_s", p.delta_g},
                          {"rabi_scale", p.rabi_scale},
                          {"spin_phase_rad", p.spin_phase}}},
                        {"fidelity", to_json(run.fidelity)}};
    if (run.compensation) j["compensation"] = to_json(*run.compensation);
    return j;
}

}  // namespace tgate
