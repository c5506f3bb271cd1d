#include "tgate/dynamics.hpp"

#include <algorithm>
#include <array>
#include <boost/math/tools/roots.hpp>
#include <boost/numeric/odeint.hpp>
#include <cmath>
#include <sstream>

#include "tgate/error.hpp"
#include "tgate/numerics.hpp"

namespace tgate {

namespace odeint = boost::numeric::odeint;

void GateParams::validate() const {
    if (!(tau > 0.0) || !std::isfinite(tau)) {
        throw Error(ErrorKind::InvalidArgument, "gate duration tau must be > 0");
    }
    if (!(eta_bm > 0.0 && eta_bm < 0.3)) {
        throw Error(ErrorKind::InvalidArgument, "Lamb-Dicke parameter must lie in (0, 0.3)");
    }
    if (!(omega_bm > std::abs(delta_m) + std::abs(delta_g))) {
        throw Error(ErrorKind::InvalidArgument,
                    "mode frequency must exceed |delta_m| + |delta_g|");
    }
    if (!(rabi_scale >= 0.0) || !std::isfinite(rabi_scale)) {
        throw Error(ErrorKind::InvalidArgument, "rabi_scale must be finite and >= 0");
    }
}

double bell_spin_phase(double delta_m) {
    return delta_m >= 0.0 ? units::pi / 2.0 : 0.0;
}

// ---------------------------------------------------------------------------
// EnvelopeSet

EnvelopeSet::EnvelopeSet(std::vector<double> time, std::vector<double> omega_1,
                         std::vector<double> omega_2, std::vector<double> stark,
                         std::vector<double> doppler)
    : time_(std::move(time)),
      omega_1_(std::move(omega_1)),
      omega_2_(std::move(omega_2)),
      stark_(std::move(stark)),
      doppler_(std::move(doppler)) {
    std::size_t n = time_.size();
    if (n < 2) {
        throw Error(ErrorKind::InvalidArgument, "envelope grid needs at least two points");
    }
    if (omega_1_.size() != n || omega_2_.size() != n || stark_.size() != n || doppler_.size() != n) {
        throw Error(ErrorKind::InvalidArgument, "envelope arrays must share the time grid");
    }
    for (std::size_t k = 0; k < n; ++k) {
        if (k > 0 && !(time_[k] > time_[k - 1])) {
            throw Error(ErrorKind::InvalidArgument, "envelope time grid must be strictly increasing");
        }
        if (!(omega_1_[k] >= 0.0) || !(omega_2_[k] >= 0.0) || !std::isfinite(omega_1_[k]) ||
            !std::isfinite(omega_2_[k])) {
            throw Error(ErrorKind::InvalidArgument, "Rabi envelopes must be finite and >= 0");
        }
        if (!std::isfinite(stark_[k]) || !std::isfinite(doppler_[k])) {
            throw Error(ErrorKind::InvalidArgument, "Stark and Doppler envelopes must be finite");
        }
    }
    // Trapezoid sums are exact for the piecewise-linear interpolant.
    cum_stark_.assign(n, 0.0);
    cum_doppler_.assign(n, 0.0);
    for (std::size_t k = 1; k < n; ++k) {
        double h = time_[k] - time_[k - 1];
        cum_stark_[k] = cum_stark_[k - 1] + 0.5 * h * (stark_[k] + stark_[k - 1]);
        cum_doppler_[k] = cum_doppler_[k - 1] + 0.5 * h * (doppler_[k] + doppler_[k - 1]);
    }
}

EnvelopeSet EnvelopeSet::constant(double duration, double omega, double stark, double doppler) {
    if (!(duration > 0.0)) {
        throw Error(ErrorKind::InvalidArgument, "envelope duration must be > 0");
    }
    return EnvelopeSet({0.0, duration}, {omega, omega}, {omega, omega}, {stark, stark},
                       {doppler, doppler});
}

std::size_t EnvelopeSet::locate(double t) const {
    if (t <= time_.front()) return 0;
    if (t >= time_.back()) return time_.size() - 2;
    auto it = std::upper_bound(time_.begin(), time_.end(), t);
    return static_cast<std::size_t>(it - time_.begin()) - 1;
}

EnvelopeSet::Sample EnvelopeSet::at(double t) const {
    double span = time_.back() - time_.front();
    double slack = 1e-12 * span;
    if (t < time_.front() - slack || t > time_.back() + slack) {
        throw Error(ErrorKind::OutOfRange, "time outside the envelope grid");
    }
    std::size_t k = locate(t);
    double w = std::clamp((t - time_[k]) / (time_[k + 1] - time_[k]), 0.0, 1.0);
    auto lerp = [&](const std::vector<double> &v) { return v[k] + w * (v[k + 1] - v[k]); };
    return {lerp(omega_1_), lerp(omega_2_), lerp(stark_), lerp(doppler_)};
}

double EnvelopeSet::cumulative(const std::vector<double> &cum, const std::vector<double> &values,
                               double t) const {
    if (t <= time_.front()) return values.front() * (t - time_.front());
    if (t >= time_.back()) return cum.back() + values.back() * (t - time_.back());
    std::size_t k = locate(t);
    double h = time_[k + 1] - time_[k];
    double d = t - time_[k];
    double slope = (values[k + 1] - values[k]) / h;
    return cum[k] + values[k] * d + 0.5 * slope * d * d;
}

double EnvelopeSet::detuning_phase(double t, double stark_scale) const {
    double doppler = cumulative(cum_doppler_, doppler_, t) - cumulative(cum_doppler_, doppler_, 0.0);
    double stark = cumulative(cum_stark_, stark_, t) - cumulative(cum_stark_, stark_, 0.0);
    return doppler - stark_scale * stark;
}

EnvelopeSet EnvelopeSet::with_doppler(std::vector<double> doppler) const {
    return EnvelopeSet(time_, omega_1_, omega_2_, stark_, std::move(doppler));
}

EnvelopeSet EnvelopeSet::with_stark(std::vector<double> stark) const {
    return EnvelopeSet(time_, omega_1_, omega_2_, std::move(stark), doppler_);
}

// ---------------------------------------------------------------------------
// Hamiltonian

DriveTones DriveTones::from_gate(const GateParams &params) {
    DriveTones tones;
    tones.blue_offset = params.delta_m + params.delta_g;
    tones.red_offset = -params.delta_m + params.delta_g;
    tones.eta = params.eta_bm;
    tones.spin_phase = params.spin_phase;
    tones.rabi_scale = params.rabi_scale;
    return tones;
}

namespace {

const std::array<double, 130> &sqrt_table() {
    static const std::array<double, 130> table = [] {
        std::array<double, 130> t{};
        for (std::size_t n = 0; n < t.size(); ++n) t[n] = std::sqrt(static_cast<double>(n));
        return t;
    }();
    return table;
}

// (from S block, to D block) pairs for sigma+ of each ion.
constexpr int kRaisePairs[2][2][2] = {
    {{0, 2}, {1, 3}},  // ion 1: |S s2> -> |D s2>
    {{0, 1}, {2, 3}},  // ion 2: |s1 S> -> |s1 D>
};

}  // namespace

MsDrive::MsDrive(const DriveTones &tones, const EnvelopeSet &env, double carrier_offset)
    : tones_(tones), env_(env), carrier_offset_(carrier_offset) {
}

MsDrive::Coupling MsDrive::coupling(double t) const {
    auto s = env_.at(t);
    double scale = tones_.rabi_scale;
    double common = env_.detuning_phase(t, scale * scale);
    double theta_b = (tones_.blue_offset + carrier_offset_) * t + common;
    double theta_r = (tones_.red_offset + carrier_offset_) * t + common;
    cplx spin = std::polar(1.0, tones_.spin_phase);
    cplx eb = spin * std::polar(1.0, -theta_b) * tones_.blue_amplitude;
    cplx er = spin * std::polar(1.0, -theta_r) * tones_.red_amplitude;
    double g1 = 0.5 * tones_.eta * scale * s.omega_1;
    double g2 = -0.5 * tones_.eta * scale * s.omega_2;
    Coupling c;
    c.blue[0] = g1 * eb;
    c.red[0] = g1 * er;
    c.blue[1] = g2 * eb;
    c.red[1] = g2 * er;
    return c;
}

void MsDrive::apply(double t, const cplx *in, cplx *out, int fock_dim) const {
    const auto &sq = sqrt_table();
    if (fock_dim >= static_cast<int>(sq.size())) {
        throw Error(ErrorKind::InvalidArgument, "fock dimension too large for the drive kernel");
    }
    Coupling c = coupling(t);
    int nf = fock_dim;
    std::fill(out, out + 4 * nf, cplx(0.0));
    for (int ion = 0; ion < 2; ++ion) {
        cplx cb = c.blue[ion], cr = c.red[ion];
        cplx cbc = std::conj(cb), crc = std::conj(cr);
        for (const auto &pair : kRaisePairs[ion]) {
            const cplx *src_s = in + pair[0] * nf;
            const cplx *src_d = in + pair[1] * nf;
            cplx *dst_s = out + pair[0] * nf;
            cplx *dst_d = out + pair[1] * nf;
            for (int n = 0; n < nf; ++n) {
                // a^+ sigma+ and its conjugate.
                if (n + 1 < nf) {
                    dst_d[n + 1] += cb * sq[n + 1] * src_s[n];
                    dst_s[n] += cbc * sq[n + 1] * src_d[n + 1];
                }
                // a sigma+ and its conjugate.
                if (n > 0) {
                    dst_d[n - 1] += cr * sq[n] * src_s[n];
                    dst_s[n] += crc * sq[n] * src_d[n - 1];
                }
            }
        }
    }
    const cplx minus_i(0.0, -1.0);
    for (int k = 0; k < 4 * nf; ++k) out[k] *= minus_i;
}

Matrix MsDrive::dense(const OperatorSet &ops, double t) const {
    Coupling c = coupling(t);
    Matrix h = c.blue[0] * ops.a_dagger * ops.sigma_plus_1 + c.red[0] * ops.a * ops.sigma_plus_1 +
               c.blue[1] * ops.a_dagger * ops.sigma_plus_2 + c.red[1] * ops.a * ops.sigma_plus_2;
    Matrix herm = h + h.adjoint();
    return herm;
}

Matrix ms_hamiltonian(const OperatorSet &ops, double t, const GateParams &params,
                      const EnvelopeSet &env) {
    params.validate();
    if (t < 0.0 || t > params.tau * (1.0 + 1e-12)) {
        throw Error(ErrorKind::OutOfRange, "time outside [0, tau]");
    }
    MsDrive drive(DriveTones::from_gate(params), env);
    return drive.dense(ops, t);
}

// ---------------------------------------------------------------------------
// Propagation

namespace {

using OdeState = std::vector<cplx>;

void check_envelope_covers(const EnvelopeSet &env, double t0, double t1) {
    double slack = 1e-12 * std::max(1.0, std::abs(t1 - t0)) + 1e-15;
    if (env.start() > t0 + slack || env.end() < t1 - slack) {
        std::ostringstream msg;
        msg << "envelope grid [" << env.start() << ", " << env.end() << "] does not cover ["
            << t0 << ", " << t1 << "]";
        throw Error(ErrorKind::InvalidArgument, msg.str());
    }
}

}  // namespace

QuantumState propagate_drive(const QuantumState &state, const DriveTones &tones,
                             const EnvelopeSet &env, double t_start, double t_end, double tol,
                             double carrier_offset) {
    if (!(tol > 1e-12 && tol < 1e-4)) {
        throw Error(ErrorKind::InvalidArgument, "tolerance must lie in (1e-12, 1e-4)");
    }
    if (!(t_end >= t_start)) {
        throw Error(ErrorKind::InvalidArgument, "propagation end precedes start");
    }
    if (std::abs(state.norm() - 1.0) > 1e-9) {
        throw Error(ErrorKind::InvalidArgument, "input state is not normalized");
    }
    check_envelope_covers(env, t_start, t_end);
    if (t_end == t_start) return state;

    const int nf = state.spec().fock_dim();
    MsDrive drive(tones, env, carrier_offset);
    auto system = [&](const OdeState &x, OdeState &dxdt, double t) {
        double tc = std::clamp(t, env.start(), env.end());
        drive.apply(tc, x.data(), dxdt.data(), nf);
    };

    const auto &amp = state.amplitudes();
    OdeState x(amp.data(), amp.data() + amp.size());

    // Local error targets sit two decades below the requested global bound.
    double local = tol * 1e-2;
    auto stepper = odeint::make_controlled(local, 0.0, odeint::runge_kutta_dopri5<OdeState>());

    double span = t_end - t_start;
    double max_dt = span / 50.0;
    double min_dt = span * 1e-13;
    double t = t_start;
    double dt = std::min(max_dt, span / 1000.0);
    std::size_t accepted = 0, rejected = 0;
    const std::size_t max_steps = 2'000'000;
    while (t < t_end) {
        if (t + dt > t_end) dt = t_end - t;
        auto result = stepper.try_step(system, x, t, dt);
        if (result == odeint::success) {
            ++accepted;
            dt = std::min(dt, max_dt);
        } else {
            ++rejected;
        }
        if (dt < min_dt || accepted + rejected > max_steps) {
            std::ostringstream msg;
            msg << "step size underflow at t=" << t << " s (dt=" << dt << ", accepted=" << accepted
                << ", rejected=" << rejected << ")";
            throw Error(ErrorKind::IntegrationFailure, msg.str());
        }
        // Land exactly on the end point.
        if (t_end - t < 1e-15 * span) t = t_end;
    }

    Vector out = Eigen::Map<const Vector>(x.data(), static_cast<Eigen::Index>(x.size()));
    double nrm = out.norm();
    if (!std::isfinite(nrm) || std::abs(nrm - 1.0) > std::max(1e-9, 10.0 * tol)) {
        std::ostringstream msg;
        msg << "norm drifted to " << nrm << " after " << accepted << " steps";
        throw Error(ErrorKind::IntegrationFailure, msg.str());
    }
    out /= nrm;
    return QuantumState(state.spec(), std::move(out));
}

QuantumState propagate(const QuantumState &state, const GateParams &params, const EnvelopeSet &env,
                       double tol, double carrier_offset) {
    params.validate();
    return propagate_drive(state, DriveTones::from_gate(params), env, 0.0, params.tau, tol,
                           carrier_offset);
}

// ---------------------------------------------------------------------------
// Analytic reference

MsReference analytic_ms_reference(const GateParams &params, std::optional<double> omega,
                                  int samples) {
    params.validate();
    if (params.delta_m == 0.0) {
        throw Error(ErrorKind::InvalidArgument, "analytic reference needs delta_m != 0");
    }
    MsReference ref;
    double dm = params.delta_m;
    ref.loops = std::abs(dm) * params.tau / units::two_pi;
    double nearest = std::round(ref.loops);
    ref.loop_closed = nearest >= 1.0 && std::abs(ref.loops - nearest) < 1e-9;
    if (!ref.loop_closed) {
        std::ostringstream msg;
        msg << "loop-not-closed: delta_m tau / 2pi = " << ref.loops << " is not an integer";
        ref.warning = msg.str();
    }
    ref.ideal_rabi = std::abs(dm) / (2.0 * std::sqrt(ref.loops)) / params.eta_bm;
    ref.rabi = omega.value_or(ref.ideal_rabi);

    double g = 0.5 * params.eta_bm * ref.rabi;
    double tau = params.tau;
    ref.geometric_phase = g * g * (tau / dm - std::sin(dm * tau) / (dm * dm));
    samples = std::max(samples, 2);
    ref.times.resize(samples);
    ref.alpha.resize(samples);
    for (int k = 0; k < samples; ++k) {
        double t = tau * k / (samples - 1);
        ref.times[k] = t;
        ref.alpha[k] = -g * (std::polar(1.0, -dm * t) - 1.0) / dm;
    }
    return ref;
}

// ---------------------------------------------------------------------------
// Ensembles

std::vector<Shot> run_shots(const HilbertSpec &spec, const GateParams &params,
                            const EnvelopeSet &env, const NoiseModel &noise, int n_shots,
                            const ShotOptions &options) {
    if (n_shots < 1) {
        throw Error(ErrorKind::InvalidArgument, "n_shots must be >= 1");
    }
    if (!(noise.sigma_carrier >= 0.0)) {
        throw Error(ErrorKind::InvalidArgument, "sigma_carrier must be >= 0");
    }
    params.validate();

    struct Draw {
        double offset;
        int fock;
    };
    std::vector<Draw> draws(static_cast<std::size_t>(n_shots));
    for (int i = 0; i < n_shots; ++i) {
        auto rng = stream_rng(noise.seed, static_cast<std::uint64_t>(i), 0x5107);
        std::normal_distribution<double> normal(0.0, 1.0);
        double z = normal(rng);
        draws[i].offset = noise.sigma_carrier * z;
        draws[i].fock = sample_thermal_fock(options.nbar, spec.fock_cutoff(), rng);
    }

    std::vector<std::optional<Shot>> shots(static_cast<std::size_t>(n_shots));
    auto simulate = [&](std::size_t i) {
        QuantumState init = QuantumState::product(spec, options.initial_spin, draws[i].fock);
        init.normalize();
        try {
            QuantumState out = propagate(init, params, env, options.tol, draws[i].offset);
            shots[i] = Shot{std::move(out), draws[i].offset, draws[i].fock};
        } catch (const Error &e) {
            throw Error(e.kind(), "shot " + std::to_string(i) + ": " + e.what());
        }
    };

    if (noise.sigma_carrier == 0.0) {
        // Noiseless shots only differ through their initial Fock state.
        std::vector<std::optional<QuantumState>> by_fock(static_cast<std::size_t>(spec.fock_dim()));
        for (int i = 0; i < n_shots; ++i) {
            auto &cached = by_fock[static_cast<std::size_t>(draws[i].fock)];
            if (!cached) {
                simulate(static_cast<std::size_t>(i));
                cached = shots[i]->state;
            } else {
                shots[i] = Shot{*cached, 0.0, draws[i].fock};
            }
        }
    } else {
        parallel_for(static_cast<std::size_t>(n_shots), simulate);
    }

    std::vector<Shot> result;
    result.reserve(shots.size());
    for (auto &s : shots) result.push_back(std::move(*s));
    return result;
}

Populations expected_populations(const HilbertSpec &spec, const DriveTones &tones,
                                 const EnvelopeSet &env, double t_start, double t_end,
                                 const NoiseModel &noise, const AverageOptions &options) {
    std::vector<double> offsets{0.0};
    std::vector<double> offset_weights{1.0};
    if (noise.sigma_carrier > 0.0) {
        auto gh = gauss_hermite(options.quadrature_nodes);
        offsets.clear();
        for (double z : gh.nodes) offsets.push_back(noise.sigma_carrier * z);
        offset_weights = gh.weights;
    }
    std::vector<int> focks{0};
    std::vector<double> fock_weights{1.0};
    if (options.nbar > 0.0) {
        if (thermal_tail_probability(options.nbar, spec.fock_cutoff()) > 1e-3) {
            throw Error(ErrorKind::CutoffTooSmall, "thermal occupation too large for the cutoff");
        }
        focks.clear();
        fock_weights.clear();
        double ratio = options.nbar / (1.0 + options.nbar);
        double p = 1.0 / (1.0 + options.nbar);
        double total = 0.0;
        for (int n = 0; n <= spec.fock_cutoff(); ++n) {
            if (p < 1e-7) break;
            focks.push_back(n);
            fock_weights.push_back(p);
            total += p;
            p *= ratio;
        }
        for (double &w : fock_weights) w /= total;
    }

    std::size_t jobs = offsets.size() * focks.size();
    std::vector<Populations> results(jobs);
    parallel_for(jobs, [&](std::size_t j) {
        std::size_t io = j / focks.size();
        std::size_t inr = j % focks.size();
        QuantumState init = QuantumState::product(spec, options.initial_spin, focks[inr]);
        init.normalize();
        results[j] = populations(
            propagate_drive(init, tones, env, t_start, t_end, options.tol, offsets[io]));
    });

    Populations avg;
    for (std::size_t j = 0; j < jobs; ++j) {
        double w = offset_weights[j / focks.size()] * fock_weights[j % focks.size()];
        avg.p0 += w * results[j].p0;
        avg.p1 += w * results[j].p1;
        avg.p2 += w * results[j].p2;
    }
    return avg;
}

Populations expected_populations(const HilbertSpec &spec, const GateParams &params,
                                 const EnvelopeSet &env, const NoiseModel &noise,
                                 const AverageOptions &options) {
    params.validate();
    return expected_populations(spec, DriveTones::from_gate(params), env, 0.0, params.tau, noise,
                                options);
}

// ---------------------------------------------------------------------------
// Ramsey noise calibration

namespace {

// Rotation exp(-i theta/2 (e^{i phi} sigma+ + e^{-i phi} sigma-)) in the (S, D) basis.
Eigen::Matrix2cd rotation(double theta, double phi) {
    Eigen::Matrix2cd r;
    double c = std::cos(theta / 2), s = std::sin(theta / 2);
    r(0, 0) = c;
    r(1, 1) = c;
    r(1, 0) = cplx(0.0, -1.0) * s * std::polar(1.0, phi);
    r(0, 1) = cplx(0.0, -1.0) * s * std::polar(1.0, -phi);
    return r;
}

}  // namespace

double ramsey_contrast(double sigma_carrier, double delay, int phase_points) {
    if (!(sigma_carrier >= 0.0) || !(delay >= 0.0)) {
        throw Error(ErrorKind::InvalidArgument, "Ramsey needs sigma >= 0 and delay >= 0");
    }
    phase_points = std::max(phase_points, 4);
    auto gh = gauss_hermite(64);
    Eigen::Vector2cd ground(1.0, 0.0);
    Eigen::Matrix2cd first = rotation(units::pi / 2, 0.0);

    // Linear least squares of P_D(phi) = m + c cos(phi) + s sin(phi).
    Eigen::MatrixXd design(phase_points, 3);
    Eigen::VectorXd signal(phase_points);
    for (int k = 0; k < phase_points; ++k) {
        double phi = units::two_pi * k / phase_points;
        double pd = 0.0;
        for (std::size_t q = 0; q < gh.nodes.size(); ++q) {
            double eps = sigma_carrier * gh.nodes[q];
            Eigen::Matrix2cd free = Eigen::Matrix2cd::Zero();
            free(0, 0) = 1.0;
            free(1, 1) = std::polar(1.0, -eps * delay);
            Eigen::Vector2cd psi = rotation(units::pi / 2, phi) * free * first * ground;
            pd += gh.weights[q] * std::norm(psi[1]);
        }
        design(k, 0) = 1.0;
        design(k, 1) = std::cos(phi);
        design(k, 2) = std::sin(phi);
        signal[k] = pd;
    }
    Eigen::Vector3d coef = design.colPivHouseholderQr().solve(signal);
    // Full fringe amplitude is 2 * sqrt(c^2 + s^2).
    return 2.0 * std::hypot(coef[1], coef[2]);
}

double calibrate_noise(double target_contrast_loss, double delay) {
    if (target_contrast_loss == 0.0) return 0.0;
    if (!(target_contrast_loss > 0.0 && target_contrast_loss < 0.5)) {
        throw Error(ErrorKind::InvalidArgument, "target contrast loss must lie in (0, 0.5)");
    }
    if (!(delay > 0.0)) {
        throw Error(ErrorKind::NoSolution, "contrast loss is unreachable with zero delay");
    }
    auto loss_gap = [&](double sigma) {
        return (1.0 - ramsey_contrast(sigma, delay)) - target_contrast_loss;
    };
    double lo = 0.0;
    double hi = 1.0 / delay;
    int expansions = 0;
    while (loss_gap(hi) < 0.0) {
        lo = hi;
        hi *= 2.0;
        if (++expansions > 40) {
            throw Error(ErrorKind::NoSolution, "no noise strength reaches the target contrast loss");
        }
    }
    boost::uintmax_t max_iter = 200;
    auto tol = [](double a, double b) { return std::abs(b - a) <= 1e-4 * std::abs(b); };
    auto [a, b] = boost::math::tools::toms748_solve(loss_gap, lo, hi, tol, max_iter);
    return 0.5 * (a + b);
}

}  // namespace tgate
