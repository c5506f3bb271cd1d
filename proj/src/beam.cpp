#include "tgate/beam.hpp"

#include <algorithm>
#include <cmath>

#include "tgate/error.hpp"
#include "tgate/numerics.hpp"

namespace tgate {

double BeamModel::axial_waist() const {
    return waist / std::cos(axis_angle);
}

double BeamModel::field(double x) const {
    double u = (x - center) / axial_waist();
    return std::exp(-u * u);
}

double BeamModel::axial_wavenumber() const {
    return units::two_pi / wavelength * std::cos(axis_angle);
}

void BeamModel::validate() const {
    if (!(waist > 0.0)) throw Error(ErrorKind::InvalidArgument, "beam waist must be > 0");
    if (!(wavelength > 0.0)) throw Error(ErrorKind::InvalidArgument, "wavelength must be > 0");
    if (!(std::abs(axis_angle) < units::pi / 2)) {
        throw Error(ErrorKind::InvalidArgument, "beam must not be perpendicular to the axis");
    }
    if (!(stark_coeff >= 0.0)) throw Error(ErrorKind::InvalidArgument, "Stark coefficient must be >= 0");
    if (!(peak_rabi >= 0.0)) throw Error(ErrorKind::InvalidArgument, "peak Rabi frequency must be >= 0");
}

double doppler_shift(const BeamModel &beam, double velocity) {
    return beam.axial_wavenumber() * velocity;
}

RabiEnvelopes rabi_envelopes(const Trajectory &traj, const BeamModel &beam, double spacing,
                             double rabi_scale) {
    beam.validate();
    RabiEnvelopes env;
    std::size_t n = traj.time.size();
    env.omega_1.resize(n);
    env.omega_2.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        double d = spacing > 0.0 ? spacing : ion_spacing(traj.omega_com[i]);
        double peak = beam.peak_rabi * rabi_scale;
        env.omega_1[i] = peak * beam.field(traj.position[i] - 0.5 * d);
        env.omega_2[i] = peak * beam.field(traj.position[i] + 0.5 * d);
    }
    return env;
}

std::vector<double> stark_envelope(const std::vector<double> &omega_1,
                                   const std::vector<double> &omega_2, const BeamModel &beam) {
    if (omega_1.size() != omega_2.size()) {
        throw Error(ErrorKind::InvalidArgument, "Rabi envelopes differ in length");
    }
    std::vector<double> out(omega_1.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = beam.stark_coeff * 0.5 * (omega_1[i] * omega_1[i] + omega_2[i] * omega_2[i]);
    }
    return out;
}

std::vector<double> doppler_envelope(const Trajectory &traj, const BeamModel &beam) {
    std::vector<double> out(traj.velocity.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = doppler_shift(beam, traj.velocity[i]);
    return out;
}

EnvelopeSet transport_envelopes(const Trajectory &traj, const BeamModel &beam, double t_start,
                                double t_end, double doppler_reference, double spacing) {
    if (traj.time.size() < 2) throw Error(ErrorKind::InvalidArgument, "trajectory too short");
    double slack = 1e-12;
    if (t_start < traj.time.front() - slack || t_end > traj.time.back() + slack ||
        !(t_end > t_start)) {
        throw Error(ErrorKind::OutOfRange, "interaction window not covered by the trajectory");
    }
    auto rabi = rabi_envelopes(traj, beam, spacing);
    auto stark = stark_envelope(rabi.omega_1, rabi.omega_2, beam);
    auto doppler = doppler_envelope(traj, beam);

    std::vector<double> t, o1, o2, s, d;
    auto push = [&](double time) {
        t.push_back(time - t_start);
        o1.push_back(interp_linear(traj.time, rabi.omega_1, time));
        o2.push_back(interp_linear(traj.time, rabi.omega_2, time));
        s.push_back(interp_linear(traj.time, stark, time));
        d.push_back(doppler_reference - interp_linear(traj.time, doppler, time));
    };
    push(t_start);
    for (double time : traj.time) {
        if (time > t_start + slack && time < t_end - slack) push(time);
    }
    push(t_end);
    return EnvelopeSet(std::move(t), std::move(o1), std::move(o2), std::move(s), std::move(d));
}

EnvelopeSet stationary_envelopes(const BeamModel &beam, double duration, double position,
                                 double spacing) {
    beam.validate();
    double o1 = beam.peak_rabi * beam.field(position - 0.5 * spacing);
    double o2 = beam.peak_rabi * beam.field(position + 0.5 * spacing);
    double stark = beam.stark_coeff * 0.5 * (o1 * o1 + o2 * o2);
    return EnvelopeSet({0.0, duration}, {o1, o1}, {o2, o2}, {stark, stark}, {0.0, 0.0});
}

}  // namespace tgate
