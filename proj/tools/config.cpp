#include "config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "tgate/error.hpp"
#include "tgate/numerics.hpp"

namespace tgate::cli {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string &msg) {
    throw Error(ErrorKind::Config, msg);
}

// Reads the keys of one JSON object and rejects anything it did not ask for.
class Section {
public:
    Section(const json &j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) fail(path_ + " must be an object");
    }

    void number(const char *key, double &out) {
        if (const json *v = get(key)) {
            if (!v->is_number()) fail(where(key) + " must be a number");
            out = v->get<double>();
            if (!std::isfinite(out)) fail(where(key) + " must be finite");
        }
    }
    void integer(const char *key, int &out) {
        if (const json *v = get(key)) {
            if (!v->is_number_integer()) fail(where(key) + " must be an integer");
            out = v->get<int>();
        }
    }
    void integer(const char *key, long &out) {
        if (const json *v = get(key)) {
            if (!v->is_number_integer()) fail(where(key) + " must be an integer");
            out = v->get<long>();
        }
    }
    void unsigned_integer(const char *key, std::uint64_t &out) {
        if (const json *v = get(key)) {
            if (!v->is_number_unsigned()) fail(where(key) + " must be a non-negative integer");
            out = v->get<std::uint64_t>();
        }
    }
    void text(const char *key, std::string &out) {
        if (const json *v = get(key)) {
            if (!v->is_string()) fail(where(key) + " must be a string");
            out = v->get<std::string>();
        }
    }
    const json *array(const char *key) {
        const json *v = get(key);
        if (v && !v->is_array()) fail(where(key) + " must be an array");
        return v;
    }
    const json *object(const char *key) {
        const json *v = get(key);
        if (v && !v->is_object()) fail(where(key) + " must be an object");
        return v;
    }
    std::string where(const std::string &key) const {
        return path_ + "." + key;
    }

    void finish() const {
        for (const auto &item : j_.items()) {
            if (!seen_.count(item.key())) fail("unknown key " + where(item.key()));
        }
    }

private:
    const json *get(const char *key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    const json &j_;
    std::string path_;
    std::set<std::string> seen_;
};

void read_grid(Section &parent, const char *key, GridSpec &grid) {
    if (const json *g = parent.object(key)) {
        Section s(*g, parent.where(key));
        s.number("start", grid.start_khz);
        s.number("stop", grid.stop_khz);
        s.number("step", grid.step_khz);
        s.finish();
    }
}

json grid_json(const GridSpec &g) {
    return {{"start", g.start_khz}, {"stop", g.stop_khz}, {"step", g.step_khz}};
}

ScanKind parse_scan_kind(const std::string &s) {
    if (s == "mode-detuning") return ScanKind::ModeDetuning;
    if (s == "global-detuning") return ScanKind::GlobalDetuning;
    fail("scan.kind must be mode-detuning or global-detuning, got '" + s + "'");
}

}  // namespace

std::vector<double> GridSpec::values() const {
    if (!(step_khz > 0.0) || !(stop_khz >= start_khz)) {
        fail("grid needs step > 0 and stop >= start");
    }
    return linear_grid(units::khz(start_khz), units::khz(stop_khz), units::khz(step_khz));
}

std::string to_string(ScanKind kind) {
    return kind == ScanKind::ModeDetuning ? "mode-detuning" : "global-detuning";
}

ExperimentConfig default_config() {
    ExperimentConfig c;
    c.pipeline = PipelineConfig::defaults();
    c.stationary_delta_m = {11.0, 14.0, 0.25};
    c.static_delta_m = {10.0, 17.0, 1.0};
    c.static_delta_g = {0.0, 8.0, 0.2};
    c.dynamic_delta_m = {-18.0, -11.0, 1.0};
    return c;
}

ExperimentConfig parse_config(const json &doc) {
    ExperimentConfig c = default_config();
    PipelineConfig &p = c.pipeline;
    Section root(doc, "config");

    ElectrodeBasis basis = p.plant.trap.basis();
    Imperfections imp = p.plant.trap.imperfections();
    if (const json *t = root.object("trap")) {
        Section s(*t, "trap");
        s.integer("electrode_count", basis.count);
        s.number("electrode_pitch_um", basis.pitch);
        s.number("electrode_width_um", basis.width);
        s.number("electrode_amplitude_v_per_v", basis.amplitude);
        double omega_mhz = units::to_mhz(p.plant.omega_com);
        s.number("omega_com_mhz", omega_mhz);
        p.plant.omega_com = units::mhz(omega_mhz);
        s.number("eta_bm", p.plant.eta_bm);
        s.integer("fock_cutoff", p.plant.fock_cutoff);
        s.number("nbar", p.plant.nbar);
        s.number("region_start_um", p.region_start);
        s.number("region_end_um", p.region_end);
        s.number("keyframe_spacing_um", p.keyframe_spacing);
        s.integer("segments", p.segments);
        if (const json *im = s.object("imperfections")) {
            Section si(*im, "trap.imperfections");
            si.number("gain_ripple_rel", imp.gain_ripple);
            si.number("gain_period_electrodes", imp.gain_period);
            si.number("gain_phase_rad", imp.gain_phase);
            double tau_us = imp.filter_tau / units::us;
            si.number("filter_tau_us", tau_us);
            imp.filter_tau = tau_us * units::us;
            if (const json *arr = si.array("stray")) {
                imp.stray.clear();
                for (std::size_t i = 0; i < arr->size(); ++i) {
                    Section e((*arr)[i], "trap.imperfections.stray[" + std::to_string(i) + "]");
                    StrayComponent sc;
                    e.number("amplitude_v", sc.amplitude);
                    e.number("wavelength_um", sc.wavelength);
                    e.number("phase_rad", sc.phase);
                    e.finish();
                    imp.stray.push_back(sc);
                }
            }
            if (const json *arr = si.array("patches")) {
                imp.patches.clear();
                for (std::size_t i = 0; i < arr->size(); ++i) {
                    Section e((*arr)[i], "trap.imperfections.patches[" + std::to_string(i) + "]");
                    PatchEdge pe;
                    e.number("position_um", pe.position);
                    e.number("width_um", pe.width);
                    e.number("curvature_v_per_um2", pe.curvature);
                    e.finish();
                    imp.patches.push_back(pe);
                }
            }
            si.finish();
        }
        s.finish();
    }

    if (const json *b = root.object("beam")) {
        Section s(*b, "beam");
        BeamModel &beam = p.plant.beam;
        double nm = beam.wavelength * 1e9;
        s.number("wavelength_nm", nm);
        beam.wavelength = nm * 1e-9;
        double deg = beam.axis_angle * 180.0 / units::pi;
        s.number("axis_angle_deg", deg);
        beam.axis_angle = deg * units::pi / 180.0;
        s.number("waist_um", beam.waist);
        s.number("center_um", beam.center);
        s.number("peak_rabi_khz", c.peak_rabi_khz);
        s.number("stark_coeff_s", beam.stark_coeff);
        double diff_khz = units::to_khz(p.stark_difference);
        s.number("stark_difference_khz", diff_khz);
        p.stark_difference = units::khz(diff_khz);
        s.finish();
    }

    if (const json *g = root.object("gate")) {
        Section s(*g, "gate");
        double tau_us = p.gate_time / units::us;
        s.number("duration_us", tau_us);
        p.gate_time = tau_us * units::us;
        s.integer("loops", c.loops);
        s.number("stationary_position_um", p.stationary_position);
        read_grid(s, "stationary_delta_m_khz", c.stationary_delta_m);
        read_grid(s, "static_delta_m_khz", c.static_delta_m);
        read_grid(s, "static_delta_g_khz", c.static_delta_g);
        read_grid(s, "dynamic_delta_m_khz", c.dynamic_delta_m);
        s.integer("static_rounds", p.static_rounds);
        s.integer("dynamic_rounds", p.dynamic_rounds);
        s.integer("quadrature_nodes", p.quadrature_nodes);
        s.integer("fidelity_draws", p.fidelity_draws);
        s.integer("parity_phases", p.parity_phases);
        s.finish();
    }

    if (const json *n = root.object("noise")) {
        Section s(*n, "noise");
        s.number("ramsey_contrast_loss", p.ramsey_loss);
        double delay_us = p.ramsey_delay / units::us;
        s.number("ramsey_delay_us", delay_us);
        p.ramsey_delay = delay_us * units::us;
        s.finish();
    }

    if (const json *k = root.object("calibration")) {
        Section s(*k, "calibration");
        s.number("com_noise_rel", p.confinement.profile.noise);
        s.integer("com_repeats", p.confinement.profile.repeats);
        s.number("confinement_tolerance_rel", p.confinement.tolerance);
        s.integer("confinement_max_rounds", p.confinement.max_rounds);
        double tol_khz = units::to_khz(p.doppler.tolerance);
        s.number("doppler_tolerance_khz", tol_khz);
        p.doppler.tolerance = units::khz(tol_khz);
        s.integer("doppler_max_rounds", p.doppler.max_rounds);
        s.integer("doppler_shots", p.doppler_shots);
        s.finish();
    }

    if (const json *r = root.object("run")) {
        Section s(*r, "run");
        s.unsigned_integer("seed", p.seed);
        s.integer("shots", p.shots);
        s.text("waveform", c.waveform_path);
        s.finish();
    }

    if (const json *sc = root.object("scan")) {
        Section s(*sc, "scan");
        std::string kind = to_string(c.scan.kind);
        s.text("kind", kind);
        c.scan.kind = parse_scan_kind(kind);
        std::string mode = to_string(c.scan.mode);
        s.text("mode", mode);
        try {
            c.scan.mode = parse_gate_mode(mode);
        } catch (const Error &e) {
            fail(std::string("scan.mode: ") + e.what());
        }
        read_grid(s, "grid_khz", c.scan.grid);
        s.number("residual_stark_hz", c.scan.residual_stark_hz);
        s.finish();
    }
    root.finish();

    try {
        p.plant.trap = TrapModel(basis, imp, p.plant.trap.mass());
    } catch (const Error &e) {
        fail(std::string("trap: ") + e.what());
    }
    finalize(c);
    return c;
}

void finalize(ExperimentConfig &c) {
    PipelineConfig &p = c.pipeline;
    if (c.loops < 1) fail("gate.loops must be >= 1");
    if (!(p.gate_time > 0.0)) fail("gate.duration_us must be > 0");
    p.stationary_delta_m = units::two_pi * c.loops / p.gate_time;
    if (c.peak_rabi_khz < 0.0) fail("beam.peak_rabi_khz must be >= 0");
    try {
        p.plant.beam.validate();
        p.plant.beam.peak_rabi =
            c.peak_rabi_khz > 0.0 ? units::khz(c.peak_rabi_khz) : p.analytic_peak_rabi();
    } catch (const Error &e) {
        fail(std::string("beam: ") + e.what());
    }
    if (p.plant.fock_cutoff < 1) fail("trap.fock_cutoff must be >= 1");
    if (!(p.plant.nbar >= 0.0)) fail("trap.nbar must be >= 0");
    if (!(p.plant.omega_com > 0.0)) fail("trap.omega_com_mhz must be > 0");
    p.stationary_delta_m_grid = c.stationary_delta_m.values();
    p.static_delta_m_grid = c.static_delta_m.values();
    p.static_delta_g_grid = c.static_delta_g.values();
    p.dynamic_delta_m_grid = c.dynamic_delta_m.values();
    for (const auto *g : {&p.stationary_delta_m_grid, &p.static_delta_m_grid, &p.static_delta_g_grid,
                          &p.dynamic_delta_m_grid}) {
        if (g->size() < 3) fail("calibration grids need at least 3 points");
    }
    p.validate();
}

ExperimentConfig load_config(const std::string &path) {
    std::ifstream in(path);
    if (!in) fail("cannot open config file " + path);
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error &e) {
        fail("config file " + path + " is not valid JSON: " + e.what());
    }
    return parse_config(doc);
}

json to_json(const ExperimentConfig &c) {
    const PipelineConfig &p = c.pipeline;
    const auto &basis = p.plant.trap.basis();
    const auto &imp = p.plant.trap.imperfections();
    json stray = json::array();
    for (const auto &s : imp.stray) {
        stray.push_back({{"amplitude_v", s.amplitude}, {"wavelength_um", s.wavelength}, {"phase_rad", s.phase}});
    }
    json patches = json::array();
    for (const auto &e : imp.patches) {
        patches.push_back({{"position_um", e.position},
                           {"width_um", e.width},
                           {"curvature_v_per_um2", e.curvature}});
    }
    const BeamModel &beam = p.plant.beam;
    return {
        {"trap",
         {{"electrode_count", basis.count},
          {"electrode_pitch_um", basis.pitch},
          {"electrode_width_um", basis.width},
          {"electrode_amplitude_v_per_v", basis.amplitude},
          {"omega_com_mhz", units::to_mhz(p.plant.omega_com)},
          {"eta_bm", p.plant.eta_bm},
          {"fock_cutoff", p.plant.fock_cutoff},
          {"nbar", p.plant.nbar},
          {"region_start_um", p.region_start},
          {"region_end_um", p.region_end},
          {"keyframe_spacing_um", p.keyframe_spacing},
          {"segments", p.segments},
          {"imperfections",
           {{"gain_ripple_rel", imp.gain_ripple},
            {"gain_period_electrodes", imp.gain_period},
            {"gain_phase_rad", imp.gain_phase},
            {"filter_tau_us", imp.filter_tau / units::us},
            {"stray", stray},
            {"patches", patches}}}}},
        {"beam",
         {{"wavelength_nm", beam.wavelength * 1e9},
          {"axis_angle_deg", beam.axis_angle * 180.0 / units::pi},
          {"waist_um", beam.waist},
          {"center_um", beam.center},
          {"peak_rabi_khz", c.peak_rabi_khz},
          {"stark_coeff_s", beam.stark_coeff},
          {"stark_difference_khz", units::to_khz(p.stark_difference)}}},
        {"gate",
         {{"duration_us", p.gate_time / units::us},
          {"loops", c.loops},
          {"stationary_position_um", p.stationary_position},
          {"stationary_delta_m_khz", grid_json(c.stationary_delta_m)},
          {"static_delta_m_khz", grid_json(c.static_delta_m)},
          {"static_delta_g_khz", grid_json(c.static_delta_g)},
          {"dynamic_delta_m_khz", grid_json(c.dynamic_delta_m)},
          {"static_rounds", p.static_rounds},
          {"dynamic_rounds", p.dynamic_rounds},
          {"quadrature_nodes", p.quadrature_nodes},
          {"fidelity_draws", p.fidelity_draws},
          {"parity_phases", p.parity_phases}}},
        {"noise", {{"ramsey_contrast_loss", p.ramsey_loss}, {"ramsey_delay_us", p.ramsey_delay / units::us}}},
        {"calibration",
         {{"com_noise_rel", p.confinement.profile.noise},
          {"com_repeats", p.confinement.profile.repeats},
          {"confinement_tolerance_rel", p.confinement.tolerance},
          {"confinement_max_rounds", p.confinement.max_rounds},
          {"doppler_tolerance_khz", units::to_khz(p.doppler.tolerance)},
          {"doppler_max_rounds", p.doppler.max_rounds},
          {"doppler_shots", p.doppler_shots}}},
        {"run", {{"seed", p.seed}, {"shots", p.shots}, {"waveform", c.waveform_path}}},
        {"scan",
         {{"kind", to_string(c.scan.kind)},
          {"mode", to_string(c.scan.mode)},
          {"grid_khz", grid_json(c.scan.grid)},
          {"residual_stark_hz", c.scan.residual_stark_hz}}},
    };
}

std::string config_hash(const ExperimentConfig &config) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a64(to_json(config).dump())));
    return buf;
}

}  // namespace tgate::cli
