#include "tgate/calib.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <boost/math/tools/roots.hpp>
#include <unsupported/Eigen/NonLinearOptimization>

#include "tgate/error.hpp"
#include "tgate/numerics.hpp"

namespace tgate {

double Plant::omega_bm() const {
    return std::sqrt(3.0) * omega_com;
}

double Plant::spacing() const {
    return ion_spacing(omega_com, trap.mass());
}

namespace {

std::uint64_t point_seed(std::uint64_t seed, std::size_t index, std::uint64_t salt) {
    return stream_rng(seed, index, salt)();
}

std::string khz_text(double omega) {
    std::ostringstream s;
    s.precision(4);
    s << units::to_khz(omega) << " kHz";
    return s.str();
}

}  // namespace

// ---------------------------------------------------------------------------
// Peak fitting

namespace {

// Residuals of a + A exp(-(u - c)^2 / (2 w^2)) in normalized coordinates.
struct GaussianResidual {
    const std::vector<double> &u;
    const std::vector<double> &y;

    int inputs() const {
        return 4;
    }
    int values() const {
        return static_cast<int>(u.size());
    }
    int operator()(const Eigen::VectorXd &p, Eigen::VectorXd &f) const {
        for (std::size_t i = 0; i < u.size(); ++i) {
            double z = (u[i] - p[1]) / p[2];
            f[static_cast<Eigen::Index>(i)] = p[3] + p[0] * std::exp(-0.5 * z * z) - y[i];
        }
        return 0;
    }
    int df(const Eigen::VectorXd &p, Eigen::MatrixXd &j) const {
        for (std::size_t i = 0; i < u.size(); ++i) {
            auto r = static_cast<Eigen::Index>(i);
            double z = (u[i] - p[1]) / p[2];
            double g = std::exp(-0.5 * z * z);
            j(r, 0) = g;
            j(r, 1) = p[0] * g * z / p[2];
            j(r, 2) = p[0] * g * z * z / p[2];
            j(r, 3) = 1.0;
        }
        return 0;
    }
};

}  // namespace

std::optional<GaussianFit> fit_gaussian(const std::vector<double> &x, const std::vector<double> &y) {
    if (x.size() != y.size() || x.size() < 6) return std::nullopt;
    auto [xmin_it, xmax_it] = std::minmax_element(x.begin(), x.end());
    double lo = *xmin_it, hi = *xmax_it;
    double mid = 0.5 * (lo + hi), half = 0.5 * (hi - lo);
    if (!(half > 0.0)) return std::nullopt;
    std::vector<double> u(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) u[i] = (x[i] - mid) / half;

    auto peak = std::max_element(y.begin(), y.end()) - y.begin();
    double base = *std::min_element(y.begin(), y.end());
    double amp = y[static_cast<std::size_t>(peak)] - base;
    if (!(amp > 0.0)) return std::nullopt;
    // Width from the area above the baseline.
    double area = 0.0;
    for (std::size_t i = 1; i < u.size(); ++i) {
        area += 0.5 * (y[i] + y[i - 1] - 2.0 * base) * std::abs(u[i] - u[i - 1]);
    }
    double spacing = 2.0 / static_cast<double>(u.size() - 1);
    double width = std::clamp(area / (amp * std::sqrt(2.0 * units::pi)), spacing, 1.0);

    Eigen::VectorXd p(4);
    p << amp, u[static_cast<std::size_t>(peak)], width, base;
    GaussianResidual functor{u, y};
    Eigen::LevenbergMarquardt<GaussianResidual> lm(functor);
    lm.parameters.maxfev = 2000;
    lm.minimize(p);

    if (!p.allFinite() || !(p[0] > 0.0)) return std::nullopt;
    p[2] = std::abs(p[2]);
    if (p[1] < -1.0 || p[1] > 1.0 || !(p[2] > 1e-6)) return std::nullopt;

    Eigen::VectorXd f(static_cast<Eigen::Index>(u.size()));
    functor(p, f);
    double rss = f.squaredNorm();
    double dof = static_cast<double>(u.size()) - 4.0;
    Eigen::MatrixXd j(static_cast<Eigen::Index>(u.size()), 4);
    functor.df(p, j);
    Eigen::Matrix4d cov = (j.transpose() * j).inverse() * (rss / dof);

    GaussianFit fit;
    fit.amplitude = p[0];
    fit.center = mid + p[1] * half;
    fit.width = p[2] * half;
    fit.offset = p[3];
    fit.center_error = std::sqrt(std::max(cov(1, 1), 0.0)) * half;
    fit.residual_rms = std::sqrt(rss / static_cast<double>(u.size()));
    return fit;
}

// ---------------------------------------------------------------------------
// Carrier spectroscopy

std::vector<double> SpectroscopyResult::excitation() const {
    std::vector<double> out(bright.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 - bright[i];
    return out;
}

std::vector<double> detuning_grid(double center, double half_width, double step) {
    if (!(step > 0.0) || !(half_width >= 0.0)) {
        throw Error(ErrorKind::InvalidArgument, "detuning grid needs step > 0");
    }
    int n = static_cast<int>(std::floor(half_width / step + 1e-9));
    std::vector<double> out;
    for (int i = -n; i <= n; ++i) out.push_back(center + i * step);
    return out;
}

namespace {

// Per-step drive of both ions at unit probe Rabi frequency.
struct ProbeTrack {
    double step = 0.0;
    std::vector<double> field_1, field_2;  // beam field at each ion
    std::vector<double> doppler;           // rad/s
};

struct ProbeOutcome {
    double probe_rabi = 0.0;
    double max_stark = 0.0;
    std::vector<Populations> populations;
};

double excite(const ProbeTrack &track, double rabi, double kappa, bool first, double detuning) {
    const auto &field = first ? track.field_1 : track.field_2;
    std::complex<double> cs(1.0, 0.0), cd(0.0, 0.0);
    for (std::size_t i = 0; i < field.size(); ++i) {
        double omega = rabi * field[i];
        double delta = detuning - track.doppler[i] - kappa * omega * omega;
        // exp(-i dt ((omega/2) sx - (delta/2) sz)) in the rotating frame.
        double hx = 0.5 * omega, hz = -0.5 * delta;
        double norm = std::hypot(hx, hz);
        double angle = norm * track.step;
        double c = std::cos(angle);
        double s = norm > 0.0 ? std::sin(angle) / norm : track.step;
        std::complex<double> i_unit(0.0, 1.0);
        std::complex<double> ns = (c - i_unit * s * hz) * cs - i_unit * s * hx * cd;
        std::complex<double> nd = -i_unit * s * hx * cs + (c + i_unit * s * hz) * cd;
        cs = ns;
        cd = nd;
    }
    return std::norm(cd);
}

ProbeOutcome run_probe(const Plant &plant, const ProbeTrack &track,
                       const SpectroscopyOptions &options) {
    if (options.detunings.empty()) {
        throw Error(ErrorKind::InvalidArgument, "spectroscopy needs at least one detuning");
    }
    double area_1 = 0.0, area_2 = 0.0, peak_field = 0.0;
    for (std::size_t i = 0; i < track.field_1.size(); ++i) {
        area_1 += track.field_1[i] * track.step;
        area_2 += track.field_2[i] * track.step;
        peak_field = std::max({peak_field, track.field_1[i], track.field_2[i]});
    }
    double area = std::max(area_1, area_2);
    if (!(area > 0.0)) throw Error(ErrorKind::InvalidArgument, "probe window sees no light");
    double kappa = plant.beam.stark_coeff;
    double rabi = options.probe_area / area;
    // Lower the power when the light shift would break the probe condition.
    if (kappa > 0.0) {
        double limit = std::sqrt(0.9 * options.max_stark / kappa) / peak_field;
        rabi = std::min(rabi, limit);
    }
    ProbeOutcome out;
    out.probe_rabi = rabi;
    double peak = rabi * peak_field;
    out.max_stark = kappa * peak * peak;
    out.populations.resize(options.detunings.size());
    parallel_for(options.detunings.size(), [&](std::size_t j) {
        double d = options.detunings[j];
        double p1 = excite(track, rabi, kappa, true, d);
        double p2 = excite(track, rabi, kappa, false, d);
        out.populations[j] = {p1 * p2, p1 * (1.0 - p2) + p2 * (1.0 - p1), (1.0 - p1) * (1.0 - p2)};
    });
    return out;
}

SpectroscopyResult finish_spectroscopy(const ProbeOutcome &probe, const SpectroscopyOptions &options) {
    SpectroscopyResult res;
    res.detunings = options.detunings;
    res.probe_rabi = probe.probe_rabi;
    res.max_stark = probe.max_stark;
    long shots = options.measure.shots;
    double shot_var = 0.0;
    for (std::size_t j = 0; j < probe.populations.size(); ++j) {
        const auto &p = probe.populations[j];
        double bright, err = 0.0;
        if (shots > 0) {
            auto rec = sample_populations(p, shots, point_seed(options.measure.seed, j, 0x5bec));
            auto q = rec.populations();
            bright = 0.5 * q.p1 + q.p2;
            double second = 0.25 * q.p1 + q.p2;  // E[(bright ions / 2)^2]
            err = std::sqrt(std::max(second - bright * bright, 0.0) / static_cast<double>(shots));
            res.records.push_back(rec);
        } else {
            bright = 0.5 * p.p1 + p.p2;
        }
        shot_var += err * err;
        res.bright.push_back(bright);
        res.bright_error.push_back(err);
    }
    double shot_floor = std::sqrt(shot_var / static_cast<double>(probe.populations.size()));
    auto fit = fit_gaussian(res.detunings, res.excitation());
    // A pulse lineshape is not exactly Gaussian; allow a residual that scales with the peak.
    res.noise_floor = std::hypot(shot_floor, options.model_floor * (fit ? fit->amplitude : 0.0));
    if (!fit || fit->residual_rms > 3.0 * res.noise_floor) {
        res.multimodal = true;
    } else {
        res.fit = fit;
    }
    return res;
}

}  // namespace

SpectroscopyResult carrier_spectroscopy(const Plant &plant, const Trajectory &traj, double t_start,
                                        double t_end, const SpectroscopyOptions &options) {
    if (!(t_end > t_start) || !(options.step > 0.0)) {
        throw Error(ErrorKind::InvalidArgument, "probe window must have positive length");
    }
    if (t_start < traj.time.front() - 1e-12 || t_end > traj.time.back() + 1e-12) {
        throw Error(ErrorKind::OutOfRange, "probe window not covered by the trajectory");
    }
    auto steps = static_cast<std::size_t>(std::ceil((t_end - t_start) / options.step - 1e-9));
    ProbeTrack track;
    track.step = (t_end - t_start) / static_cast<double>(steps);
    auto spacing = traj.ion_spacing(plant.trap.mass());
    auto doppler = doppler_envelope(traj, plant.beam);
    for (std::size_t i = 0; i < steps; ++i) {
        double t = t_start + (static_cast<double>(i) + 0.5) * track.step;
        double x = interp_linear(traj.time, traj.position, t);
        double d = interp_linear(traj.time, spacing, t);
        track.field_1.push_back(plant.beam.field(x - 0.5 * d));
        track.field_2.push_back(plant.beam.field(x + 0.5 * d));
        track.doppler.push_back(interp_linear(traj.time, doppler, t));
    }
    return finish_spectroscopy(run_probe(plant, track, options), options);
}

SpectroscopyResult carrier_spectroscopy_static(const Plant &plant, double position,
                                               double duration, const SpectroscopyOptions &options) {
    if (!(duration > 0.0) || !(options.step > 0.0)) {
        throw Error(ErrorKind::InvalidArgument, "probe duration must be > 0");
    }
    auto steps = static_cast<std::size_t>(std::ceil(duration / options.step - 1e-9));
    ProbeTrack track;
    track.step = duration / static_cast<double>(steps);
    double d = plant.spacing();
    track.field_1.assign(steps, plant.beam.field(position - 0.5 * d));
    track.field_2.assign(steps, plant.beam.field(position + 0.5 * d));
    track.doppler.assign(steps, 0.0);
    return finish_spectroscopy(run_probe(plant, track, options), options);
}

SpectroscopyResult segment_spectroscopy(const Plant &plant, const Waveform &wf,
                                        const Trajectory &traj, std::size_t segment,
                                        const SpectroscopyOptions &options) {
    if (segment >= wf.segments().size()) {
        throw Error(ErrorKind::OutOfRange, "segment index outside the waveform");
    }
    auto res = carrier_spectroscopy(plant, traj, wf.segment_start(segment), wf.segment_end(segment),
                                    options);
    if (res.multimodal) {
        throw Error(ErrorKind::CalibrationFailure,
                    "segment " + std::to_string(segment) + " spectrum is not single-peaked");
    }
    return res;
}

// ---------------------------------------------------------------------------
// Confinement

std::vector<ComPoint> measure_com_profile(const Plant &plant, const Waveform &wf,
                                          const ComProfileOptions &options) {
    if (options.repeats < 1 || !(options.noise >= 0.0)) {
        throw Error(ErrorKind::InvalidArgument, "profile needs repeats >= 1 and noise >= 0");
    }
    auto positions = options.positions;
    if (positions.empty()) {
        for (int i = 0; i <= 16; ++i) positions.push_back(-40.0 + 5.0 * i);
    }
    std::vector<ComPoint> out(positions.size());
    for (std::size_t i = 0; i < positions.size(); ++i) {
        out[i].position = positions[i];
        try {
            Voltages v = wf.path_voltages(wf.path_index(positions[i]));
            auto well = locate_well(plant.trap, v, positions[i], PotentialModel::Perturbed);
            auto rng = stream_rng(options.seed, i, 0xc0f1);
            std::normal_distribution<double> noise(0.0, 1.0);
            double sum = 0.0;
            for (int r = 0; r < options.repeats; ++r) {
                sum += well.omega * (1.0 + options.noise * noise(rng));
            }
            out[i].omega = sum / options.repeats;
        } catch (const Error &e) {
            out[i].error = e.what();
        }
    }
    return out;
}

double max_relative_deviation(const std::vector<ComPoint> &profile, double omega_target) {
    double dev = 0.0;
    for (const auto &p : profile) {
        if (!p.error.empty()) {
            throw Error(ErrorKind::CalibrationFailure,
                        "no well at " + std::to_string(p.position) + " um: " + p.error);
        }
        dev = std::max(dev, std::abs(p.omega / omega_target - 1.0));
    }
    return dev;
}

ScaleProfile confinement_factors(const std::vector<ComPoint> &profile, double omega_target) {
    ScaleProfile out;
    for (const auto &p : profile) {
        if (!p.error.empty()) {
            throw Error(ErrorKind::CalibrationFailure,
                        "no well at " + std::to_string(p.position) + " um: " + p.error);
        }
        double r = omega_target / p.omega;
        out.positions.push_back(p.position);
        out.factors.push_back(r * r);
    }
    return out;
}

ConfinementResult flatten_confinement(const Plant &plant, const Waveform &wf,
                                      const ConfinementOptions &options) {
    ConfinementResult res{wf, {}, false};
    for (int round = 0; round <= options.max_rounds; ++round) {
        auto profile_opts = options.profile;
        profile_opts.seed = options.profile.seed + static_cast<std::uint64_t>(round) * 7919u;
        auto profile = measure_com_profile(plant, res.waveform, profile_opts);
        double dev = max_relative_deviation(profile, plant.omega_com);
        res.rounds.push_back({profile, dev});
        if (dev < options.tolerance) {
            res.converged = true;
            return res;
        }
        if (round == options.max_rounds) break;
        res.waveform =
            apply_confinement_scaling(res.waveform, confinement_factors(profile, plant.omega_com));
    }
    std::ostringstream msg;
    msg << "confinement deviation " << res.rounds.back().max_deviation * 100.0
        << " % after " << options.max_rounds << " rounds";
    throw Error(ErrorKind::CalibrationFailure, msg.str());
}

// ---------------------------------------------------------------------------
// Doppler

double nominal_doppler(const Plant &plant, const Waveform &wf) {
    const auto &kf = wf.keyframes();
    double length = std::abs(kf.back().position - kf.front().position) * 1e-6;
    return doppler_shift(plant.beam, length / wf.duration());
}

DopplerOptions default_doppler_options() {
    DopplerOptions opts;
    opts.probe.detunings = detuning_grid(0.0, units::khz(150.0), units::khz(5.0));
    return opts;
}

DopplerRound measure_segment_doppler(const Plant &plant, const Waveform &wf,
                                     const Trajectory &traj, const DopplerOptions &options,
                                     double target) {
    DopplerRound round;
    for (std::size_t k = 0; k < wf.segments().size(); ++k) {
        auto probe = options.probe;
        for (double &d : probe.detunings) d += target;
        probe.measure.seed = point_seed(options.probe.measure.seed, k, 0xd0b1);
        auto res = segment_spectroscopy(plant, wf, traj, k, probe);
        round.segment_doppler.push_back(res.fit->center);
        round.segment_error.push_back(res.fit->center_error);
    }
    auto [lo, hi] = std::minmax_element(round.segment_doppler.begin(), round.segment_doppler.end());
    round.spread = *hi - *lo;
    return round;
}

DopplerResult flatten_doppler(const Plant &plant, const Waveform &wf, const DopplerOptions &options) {
    if (options.probe.detunings.empty()) {
        throw Error(ErrorKind::InvalidArgument, "Doppler flattening needs a detuning grid");
    }
    DopplerResult res{wf, options.target > 0.0 ? options.target : nominal_doppler(plant, wf), {},
                      false};
    for (int round = 0; round <= options.max_rounds; ++round) {
        auto traj = extract_trajectory(plant.trap, res.waveform, options.trajectory);
        auto opts = options;
        opts.probe.measure.seed = options.probe.measure.seed + static_cast<std::uint64_t>(round) * 104729u;
        auto m = measure_segment_doppler(plant, res.waveform, traj, opts, res.target);
        bool done = m.spread <= options.tolerance;
        if (!done && round < options.max_rounds) {
            for (double d : m.segment_doppler) m.factors.push_back(d / res.target);
        }
        res.rounds.push_back(m);
        if (done) {
            res.converged = true;
            return res;
        }
        if (round == options.max_rounds) break;
        res.waveform = retime_segments(res.waveform, res.rounds.back().factors);
    }
    std::ostringstream msg;
    msg << "segment Doppler spread " << khz_text(res.rounds.back().spread) << " after "
        << options.max_rounds << " rounds; segments:";
    for (double d : res.rounds.back().segment_doppler) msg << ' ' << khz_text(d);
    throw Error(ErrorKind::CalibrationFailure, msg.str());
}

// ---------------------------------------------------------------------------
// Gate setups and scans

GateSetup stationary_gate(const Plant &plant, const GateParams &params, double position) {
    GateSetup s{params, stationary_envelopes(plant.beam, params.tau, position, plant.spacing()),
                params.tau};
    s.params.omega_bm = plant.omega_bm();
    s.params.eta_bm = plant.eta_bm;
    return s;
}

GateSetup transport_gate(const Plant &plant, const Trajectory &traj, double duration,
                         const GateParams &params, double doppler_reference) {
    GateSetup s{params, transport_envelopes(traj, plant.beam, 0.0, duration, doppler_reference),
                duration};
    s.params.tau = duration;
    s.params.omega_bm = plant.omega_bm();
    s.params.eta_bm = plant.eta_bm;
    return s;
}

Populations gate_populations(const Plant &plant, const GateSetup &setup, const ScanOptions &options) {
    HilbertSpec spec(plant.fock_cutoff);
    AverageOptions avg;
    avg.quadrature_nodes = options.quadrature_nodes;
    avg.nbar = plant.nbar;
    avg.tol = options.tol;
    return expected_populations(spec, setup.params, setup.envelopes, plant.noise, avg);
}

namespace {

ScanResult run_scan(const Plant &plant, const GateSetup &setup, const std::vector<double> &grid,
                    const ScanOptions &options, const std::string &name,
                    void (*apply)(GateParams &, double)) {
    if (grid.empty()) throw Error(ErrorKind::InvalidArgument, "empty scan grid");
    ScanResult res;
    res.parameter = name;
    res.points.resize(grid.size());
    std::vector<GateSetup> setups(grid.size(), setup);
    for (std::size_t i = 0; i < grid.size(); ++i) apply(setups[i].params, grid[i]);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        res.points[i].value = grid[i];
        res.points[i].expected = gate_populations(plant, setups[i], options);
        if (options.measure.shots > 0) {
            res.points[i].record = sample_populations(
                res.points[i].expected, options.measure.shots,
                point_seed(options.measure.seed, i, 0x5ca7));
        }
    }
    const auto &p = setup.params;
    res.fixed = {{"tau_s", p.tau},
                 {"delta_m_rad_s", p.delta_m},
                 {"delta_g_rad_s", p.delta_g},
                 {"rabi_scale", p.rabi_scale},
                 {"shots", static_cast<double>(options.measure.shots)}};
    return res;
}

}  // namespace

ScanResult scan_mode_detuning(const Plant &plant, const GateSetup &setup,
                              const std::vector<double> &grid, const ScanOptions &options) {
    return run_scan(plant, setup, grid, options, "delta_m", [](GateParams &p, double v) {
        p.delta_m = v;
        p.spin_phase = bell_spin_phase(v);
    });
}

ScanResult scan_global_detuning(const Plant &plant, const GateSetup &setup,
                                const std::vector<double> &grid, const ScanOptions &options) {
    return run_scan(plant, setup, grid, options, "delta_g",
                    [](GateParams &p, double v) { p.delta_g = v; });
}

double refine_p1_minimum(const ScanResult &scan) {
    const auto &pts = scan.points;
    if (pts.size() < 3) throw Error(ErrorKind::InvalidArgument, "need at least 3 scan points");
    std::size_t best = 0;
    for (std::size_t i = 1; i < pts.size(); ++i) {
        if (pts[i].measured().p1 < pts[best].measured().p1) best = i;
    }
    if (best == 0 || best + 1 == pts.size()) {
        throw Error(ErrorKind::RescanRequired,
                    "P1 minimum at the edge of the " + scan.parameter + " grid");
    }
    double x0 = pts[best - 1].value, x1 = pts[best].value, x2 = pts[best + 1].value;
    double y0 = pts[best - 1].measured().p1, y1 = pts[best].measured().p1,
           y2 = pts[best + 1].measured().p1;
    double denom = (x0 - x1) * (x0 - x2) * (x1 - x2);
    double a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / denom;
    double b = (x2 * x2 * (y0 - y1) + x1 * x1 * (y2 - y0) + x0 * x0 * (y1 - y2)) / denom;
    if (!(a > 0.0)) return x1;
    return std::clamp(-b / (2.0 * a), x0, x2);
}

double usable_p1_minimum(const ScanResult &scan, long shots) {
    const auto &pts = scan.points;
    if (pts.size() < 3) throw Error(ErrorKind::InvalidArgument, "need at least 3 scan points");
    double lowest = 1.0;
    for (const auto &pt : pts) lowest = std::min(lowest, pt.measured().p1);
    double tol = 1e-3;
    if (shots > 0) {
        double n = static_cast<double>(shots);
        tol = 2.0 * std::sqrt(std::max(lowest, 1.0 / n) / n);
    }
    std::vector<std::size_t> order(pts.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return std::abs(pts[a].value) < std::abs(pts[b].value);
    });
    for (std::size_t i : order) {
        if (pts[i].measured().p1 > lowest + tol) continue;
        if (i == 0 || i + 1 == pts.size()) {
            throw Error(ErrorKind::RescanRequired,
                        "usable P1 minimum at the edge of the " + scan.parameter + " grid");
        }
        return pts[i].value;
    }
    throw Error(ErrorKind::CalibrationFailure, "empty P1 scan");
}

std::vector<double> linear_grid(double lo, double hi, double step) {
    if (!(step > 0.0) || hi < lo) throw Error(ErrorKind::InvalidArgument, "invalid grid bounds");
    auto n = static_cast<long>(std::floor((hi - lo) / step + 1e-9));
    std::vector<double> out;
    for (long i = 0; i <= n; ++i) out.push_back(lo + static_cast<double>(i) * step);
    return out;
}

BalanceResult balance_power(const Plant &plant, const GateSetup &setup, const ScanOptions &options,
                            double guess) {
    BalanceResult res;
    auto imbalance = [&](double scale) {
        GateSetup s = setup;
        s.params.rabi_scale = scale;
        ++res.evaluations;
        auto p = gate_populations(plant, s, options);
        return p.p0 - p.p2;
    };
    double lo = guess > 0.0 ? 0.5 * guess : 0.1 * setup.params.rabi_scale;
    double f_lo = imbalance(lo);
    for (int i = 0; i < 8 && f_lo >= 0.0; ++i) {
        lo *= 0.5;
        f_lo = imbalance(lo);
    }
    if (f_lo >= 0.0) {
        throw Error(ErrorKind::CalibrationFailure, "P0 exceeds P2 even at low power");
    }
    double hi = lo, f_hi = f_lo;
    for (int i = 0; i < 24 && f_hi < 0.0; ++i) {
        lo = hi;
        f_lo = f_hi;
        hi *= 1.1;
        f_hi = imbalance(hi);
    }
    if (f_hi < 0.0) {
        throw Error(ErrorKind::CalibrationFailure, "no P0 = P2 crossing found in the power bracket");
    }
    boost::uintmax_t max_iter = 60;
    auto root = boost::math::tools::toms748_solve(imbalance, lo, hi, f_lo, f_hi,
                                                  boost::math::tools::eps_tolerance<double>(32),
                                                  max_iter);
    res.rabi_scale = 0.5 * (root.first + root.second);
    GateSetup s = setup;
    s.params.rabi_scale = res.rabi_scale;
    res.populations = gate_populations(plant, s, options);
    double limit = options.measure.shots > 0 ? 2.0 / std::sqrt(static_cast<double>(options.measure.shots))
                                             : 1e-3;
    if (std::abs(res.populations.p0 - res.populations.p2) >= limit) {
        throw Error(ErrorKind::CalibrationFailure, "power balance did not converge");
    }
    return res;
}

BalancedScan scan_balanced_mode_detuning(const Plant &plant, const GateSetup &setup,
                                         const std::vector<double> &grid, const ScanOptions &options,
                                         double guess) {
    if (grid.empty()) throw Error(ErrorKind::InvalidArgument, "empty scan grid");
    BalancedScan res;
    res.scan.parameter = "delta_m_balanced";
    double start = guess > 0.0 ? guess : setup.params.rabi_scale;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        GateSetup s = setup;
        s.params.delta_m = grid[i];
        s.params.spin_phase = bell_spin_phase(grid[i]);
        ScanPoint pt;
        pt.value = grid[i];
        double scale = 0.0;
        try {
            auto b = balance_power(plant, s, options, start);
            scale = b.rabi_scale;
            pt.expected = b.populations;
        } catch (const Error &e) {
            if (e.kind() != ErrorKind::CalibrationFailure) throw;
            pt.expected = Populations{0.0, 1.0, 0.0};
        }
        if (options.measure.shots > 0) {
            pt.record = sample_populations(pt.expected, options.measure.shots,
                                           point_seed(options.measure.seed, i, 0xba5c));
        }
        res.scan.points.push_back(pt);
        res.rabi_scales.push_back(scale);
    }
    const auto &p = setup.params;
    res.scan.fixed = {{"tau_s", p.tau},
                      {"delta_g_rad_s", p.delta_g},
                      {"shots", static_cast<double>(options.measure.shots)}};
    return res;
}

// ---------------------------------------------------------------------------
// Sidebands

double stationary_probe_duration(const Plant &plant, double rabi_scale, double position) {
    double d = plant.spacing();
    double o1 = plant.beam.peak_rabi * plant.beam.field(position - 0.5 * d);
    double o2 = plant.beam.peak_rabi * plant.beam.field(position + 0.5 * d);
    double g = 0.5 * plant.eta_bm * std::hypot(o1, o2) * rabi_scale;
    if (!(g > 0.0)) throw Error(ErrorKind::InvalidArgument, "sideband probe sees no light");
    return units::pi / (2.0 * g);
}

double reduced_rabi_scale(const GateSetup &base, double max_stark, double cap) {
    const auto &stark = base.envelopes.stark();
    double peak = *std::max_element(stark.begin(), stark.end());
    if (!(peak > 0.0)) return cap;
    return std::min(cap, std::sqrt(max_stark / peak));
}

SidebandResult sideband_spectroscopy(const Plant &plant, const GateSetup &base, Sideband which,
                                     const SidebandOptions &options) {
    if (options.offsets.size() < 6) {
        throw Error(ErrorKind::InvalidArgument, "sideband scan needs at least 6 offsets");
    }
    SidebandResult res;
    res.sideband = which;
    res.offsets = options.offsets;
    double center = 0.5 * (options.offsets.front() + options.offsets.back());
    if (options.rabi_scale > 0.0) {
        res.rabi_scale = options.rabi_scale;
    } else {
        // Full transfer would need area pi/2 on the collective sideband.
        const auto &env = base.envelopes;
        const auto &t = env.time();
        double area = 0.0;
        for (std::size_t i = 1; i < t.size(); ++i) {
            double a = std::hypot(env.omega_1()[i - 1], env.omega_2()[i - 1]);
            double b = std::hypot(env.omega_1()[i], env.omega_2()[i]);
            area += 0.25 * plant.eta_bm * (a + b) * (t[i] - t[i - 1]);
        }
        res.rabi_scale = reduced_rabi_scale(base, options.max_stark, 0.5 * units::pi / area);
    }
    HilbertSpec spec(plant.fock_cutoff);
    AverageOptions avg;
    avg.quadrature_nodes = options.scan.quadrature_nodes;
    avg.nbar = plant.nbar;
    avg.tol = options.scan.tol;
    avg.initial_spin = which == Sideband::Blue ? SpinVector(1.0, 0.0, 0.0, 0.0)
                                               : SpinVector(0.0, 0.0, 0.0, 1.0);
    res.excitation.resize(options.offsets.size());
    res.excitation_error.assign(options.offsets.size(), 0.0);
    for (std::size_t i = 0; i < options.offsets.size(); ++i) {
        DriveTones tones;
        tones.eta = plant.eta_bm;
        tones.rabi_scale = res.rabi_scale;
        if (which == Sideband::Blue) {
            tones.blue_offset = options.offsets[i];
            tones.red_offset = center - options.other_tone_delta_m;
        } else {
            tones.red_offset = options.offsets[i];
            tones.blue_offset = center + options.other_tone_delta_m;
        }
        auto p = expected_populations(spec, tones, base.envelopes, base.envelopes.start(),
                                      base.envelopes.end(), plant.noise, avg);
        double stay = which == Sideband::Blue ? p.p2 : p.p0;
        if (options.scan.measure.shots > 0) {
            auto rec = sample_populations(p, options.scan.measure.shots,
                                          point_seed(options.scan.measure.seed, i, 0x51de));
            auto q = rec.populations();
            stay = which == Sideband::Blue ? q.p2 : q.p0;
            res.excitation_error[i] =
                std::sqrt(stay * (1.0 - stay) / static_cast<double>(options.scan.measure.shots));
        }
        res.excitation[i] = 1.0 - stay;
    }
    res.fit = fit_gaussian(res.offsets, res.excitation);
    if (!res.fit) {
        throw Error(ErrorKind::CalibrationFailure,
                    std::string(which == Sideband::Blue ? "blue" : "red") +
                        " sideband fit failed");
    }
    res.center = res.fit->center;
    return res;
}

SidebandPair calibrate_sidebands(const Plant &plant, const GateSetup &base,
                                 const SidebandOptions &options) {
    SidebandOptions red = options;
    red.scan.measure.seed = options.scan.measure.seed ^ 0x9e3779b97f4a7c15ull;
    return {sideband_spectroscopy(plant, base, Sideband::Blue, options),
            sideband_spectroscopy(plant, base, Sideband::Red, red)};
}

// ---------------------------------------------------------------------------
// Light shifts

std::vector<std::pair<double, double>> segment_windows(const Waveform &wf) {
    std::vector<std::pair<double, double>> out;
    for (std::size_t k = 0; k < wf.segments().size(); ++k) {
        out.emplace_back(wf.segment_start(k), wf.segment_end(k));
    }
    return out;
}

std::vector<double> segment_stark_profile(const Plant &plant, const Trajectory &traj,
                                          const std::vector<std::pair<double, double>> &windows,
                                          double rabi_scale) {
    auto rabi = rabi_envelopes(traj, plant.beam, 0.0, rabi_scale);
    std::vector<double> out;
    for (const auto &[t0, t1] : windows) {
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < traj.time.size(); ++i) {
            if (traj.time[i] < t0 || traj.time[i] > t1) continue;
            double w = 0.5 * (rabi.omega_1[i] * rabi.omega_1[i] + rabi.omega_2[i] * rabi.omega_2[i]);
            num += w * w;
            den += w;
        }
        out.push_back(den > 0.0 ? num / den : 0.0);
    }
    return out;
}

double calibrate_stark_coefficient(const Plant &plant, const Waveform &wf, const Trajectory &traj,
                                   double rabi_scale, double difference) {
    if (!(difference >= 0.0)) throw Error(ErrorKind::InvalidArgument, "difference must be >= 0");
    auto s = segment_stark_profile(plant, traj, segment_windows(wf), rabi_scale);
    auto [lo, hi] = std::minmax_element(s.begin(), s.end());
    if (!(*hi > *lo)) throw Error(ErrorKind::CalibrationFailure, "no light-shift contrast across segments");
    return difference / (*hi - *lo);
}

// ---------------------------------------------------------------------------
// Dynamic compensation

std::vector<double> segment_doppler(const Plant &plant, const Waveform &wf, const Trajectory &traj) {
    std::vector<double> out;
    for (std::size_t k = 0; k < wf.segments().size(); ++k) {
        double t0 = wf.segment_start(k), t1 = wf.segment_end(k);
        double x0 = interp_linear(traj.time, traj.position, t0);
        double x1 = interp_linear(traj.time, traj.position, t1);
        out.push_back(doppler_shift(plant.beam, (x1 - x0) * 1e-6 / (t1 - t0)));
    }
    return out;
}

CompensationResidual compensation_residual(const Plant &plant, const Waveform &wf,
                                           const Trajectory &traj, double rabi_scale,
                                           const std::vector<double> &reference_doppler) {
    auto achieved = segment_doppler(plant, wf, traj);
    if (reference_doppler.size() != achieved.size()) {
        throw Error(ErrorKind::InvalidArgument, "one reference Doppler shift per segment is required");
    }
    auto rabi = rabi_envelopes(traj, plant.beam, 0.0, rabi_scale);
    auto stark = stark_envelope(rabi.omega_1, rabi.omega_2, plant.beam);
    double abs_sum = 0.0, weighted = 0.0, weight = 0.0;
    long count = 0;
    std::size_t k = 0;
    for (std::size_t i = 0; i < traj.time.size(); ++i) {
        double t = traj.time[i];
        if (t > wf.duration()) break;
        while (k + 1 < achieved.size() && t >= wf.segment_end(k)) ++k;
        double r = stark[i] - (reference_doppler[k] - achieved[k]);
        abs_sum += std::abs(r);
        weighted += stark[i] * r;
        weight += stark[i];
        ++count;
    }
    CompensationResidual out;
    if (count > 0) out.abs_mean = abs_sum / static_cast<double>(count);
    if (weight > 0.0) out.effective = std::abs(weighted / weight);
    return out;
}

StarkCompensationResult dynamic_stark_compensation(const Plant &plant, const Waveform &wf,
                                                   const StarkCompensationOptions &options) {
    auto traj = extract_trajectory(plant.trap, wf, options.trajectory);
    auto reference = segment_doppler(plant, wf, traj);
    std::size_t n = reference.size();
    StarkCompensationResult res{wf, {}, std::vector<double>(n, 0.0), std::vector<double>(n, 1.0), 0.0};
    double nominal = nominal_doppler(plant, wf);
    for (int round = 0; round < std::max(options.rounds, 1); ++round) {
        auto windows = segment_windows(res.waveform);
        auto rabi = rabi_envelopes(traj, plant.beam, 0.0, options.rabi_scale);
        auto stark = stark_envelope(rabi.omega_1, rabi.omega_2, plant.beam);
        std::vector<double> mean_stark(n, 0.0);
        for (std::size_t k = 0; k < n; ++k) {
            double sum = 0.0;
            long count = 0;
            for (std::size_t i = 0; i < traj.time.size(); ++i) {
                if (traj.time[i] < windows[k].first || traj.time[i] >= windows[k].second) continue;
                sum += stark[i];
                ++count;
            }
            mean_stark[k] = count > 0 ? sum / static_cast<double>(count) : 0.0;
            if (mean_stark[k] > options.max_fraction * nominal) {
                std::ostringstream msg;
                msg << "segment " << k << " needs a Doppler change of " << khz_text(mean_stark[k])
                    << ", more than " << options.max_fraction * 100.0 << " % of the transport shift";
                throw Error(ErrorKind::InfeasibleCompensation, msg.str());
            }
        }
        auto current = segment_doppler(plant, res.waveform, traj);
        std::vector<double> factors(n);
        for (std::size_t k = 0; k < n; ++k) {
            factors[k] = current[k] / (reference[k] - mean_stark[k]);
            res.factors[k] *= factors[k];
        }
        res.segment_stark = mean_stark;
        bool identity = std::all_of(factors.begin(), factors.end(), [](double f) { return f == 1.0; });
        if (identity) break;
        res.waveform = retime_segments(res.waveform, factors);
        traj = extract_trajectory(plant.trap, res.waveform, options.trajectory);
    }
    for (std::size_t k = 0; k < n; ++k) {
        res.velocity_offsets[k] = -res.segment_stark[k] / plant.beam.axial_wavenumber();
    }
    auto residual = compensation_residual(plant, res.waveform, traj, options.rabi_scale, reference);
    res.residual = residual.effective;
    res.residual_abs_mean = residual.abs_mean;
    return res;
}

// ---------------------------------------------------------------------------
// Reports

nlohmann::json to_json(const Populations &p) {
    return {{"P0", p.p0}, {"P1", p.p1}, {"P2", p.p2}};
}

nlohmann::json to_json(const MeasurementRecord &r) {
    auto u = r.uncertainty();
    return {{"shots", r.shots},
            {"n0", r.n0},
            {"n1", r.n1},
            {"n2", r.n2},
            {"populations", to_json(r.populations())},
            {"uncertainty", to_json(u)}};
}

nlohmann::json to_json(const GaussianFit &fit) {
    return {{"amplitude", fit.amplitude},
            {"center_rad_s", fit.center},
            {"center_error_rad_s", fit.center_error},
            {"width_rad_s", fit.width},
            {"offset", fit.offset},
            {"residual_rms", fit.residual_rms}};
}

nlohmann::json to_json(const SpectroscopyResult &r) {
    nlohmann::json j{{"detunings_rad_s", r.detunings},
                     {"bright", r.bright},
                     {"bright_error", r.bright_error},
                     {"probe_rabi_rad_s", r.probe_rabi},
                     {"max_stark_rad_s", r.max_stark},
                     {"noise_floor", r.noise_floor},
                     {"multimodal", r.multimodal}};
    j["fit"] = r.fit ? to_json(*r.fit) : nlohmann::json(nullptr);
    return j;
}

nlohmann::json to_json(const ComPoint &p) {
    nlohmann::json j{{"position_um", p.position}, {"omega_rad_s", p.omega}};
    if (!p.error.empty()) j["error"] = p.error;
    return j;
}

nlohmann::json to_json(const ConfinementResult &r) {
    nlohmann::json rounds = nlohmann::json::array();
    for (const auto &round : r.rounds) {
        nlohmann::json profile = nlohmann::json::array();
        for (const auto &p : round.profile) profile.push_back(to_json(p));
        rounds.push_back({{"max_deviation", round.max_deviation}, {"profile", profile}});
    }
    nlohmann::json scales = nlohmann::json::array();
    for (const auto &s : r.waveform.scales()) {
        scales.push_back({{"positions_um", s.positions}, {"factors", s.factors}});
    }
    return {{"converged", r.converged}, {"rounds", rounds}, {"scale_profiles", scales}};
}

nlohmann::json to_json(const DopplerResult &r) {
    nlohmann::json rounds = nlohmann::json::array();
    for (const auto &round : r.rounds) {
        rounds.push_back({{"segment_doppler_rad_s", round.segment_doppler},
                          {"segment_error_rad_s", round.segment_error},
                          {"spread_rad_s", round.spread},
                          {"stretch_factors", round.factors}});
    }
    std::vector<double> durations;
    for (const auto &s : r.waveform.segments()) durations.push_back(s.duration);
    return {{"target_rad_s", r.target},
            {"converged", r.converged},
            {"rounds", rounds},
            {"segment_durations_s", durations}};
}

nlohmann::json to_json(const SidebandResult &r) {
    nlohmann::json j{{"sideband", r.sideband == Sideband::Blue ? "blue" : "red"},
                     {"rabi_scale", r.rabi_scale},
                     {"offsets_rad_s", r.offsets},
                     {"excitation", r.excitation},
                     {"excitation_error", r.excitation_error},
                     {"center_rad_s", r.center}};
    j["fit"] = r.fit ? to_json(*r.fit) : nlohmann::json(nullptr);
    return j;
}

nlohmann::json to_json(const ScanResult &r) {
    nlohmann::json points = nlohmann::json::array();
    for (const auto &p : r.points) {
        nlohmann::json j{{"value_rad_s", p.value}, {"expected", to_json(p.expected)}};
        if (p.record) j["record"] = to_json(*p.record);
        points.push_back(j);
    }
    nlohmann::json fixed = nlohmann::json::object();
    for (const auto &[k, v] : r.fixed) fixed[k] = v;
    return {{"parameter", r.parameter}, {"fixed", fixed}, {"points", points}};
}

nlohmann::json to_json(const BalanceResult &r) {
    return {{"rabi_scale", r.rabi_scale},
            {"populations", to_json(r.populations)},
            {"evaluations", r.evaluations}};
}

nlohmann::json to_json(const BalancedScan &r) {
    auto j = to_json(r.scan);
    j["rabi_scales"] = r.rabi_scales;
    return j;
}

nlohmann::json to_json(const StarkCompensationResult &r) {
    return {{"segment_stark_rad_s", r.segment_stark},
            {"velocity_offsets_m_s", r.velocity_offsets},
            {"stretch_factors", r.factors},
            {"residual_rad_s", r.residual},
            {"residual_abs_mean_rad_s", r.residual_abs_mean}};
}

nlohmann::json to_json(const FidelityEstimate &f) {
    return {{"P0", f.p0},
            {"P2", f.p2},
            {"population_error", f.population_error},
            {"parity_amplitude", f.parity_amplitude},
            {"parity_error", f.parity_error},
            {"fidelity", f.fidelity},
            {"fidelity_error", f.fidelity_error}};
}

nlohmann::json to_json(const ParityFit &f) {
    nlohmann::json points = nlohmann::json::array();
    for (const auto &p : f.points) {
        nlohmann::json j{{"phase_rad", p.phase}, {"parity", p.parity}, {"expected", to_json(p.expected)}};
        if (p.record.shots > 0) j["record"] = to_json(p.record);
        points.push_back(j);
    }
    return {{"amplitude", f.amplitude},
            {"amplitude_error", f.amplitude_error},
            {"phase_offset_rad", f.phase_offset},
            {"points", points}};
}

}  // namespace tgate
