#ifndef TGATE_BEAM_HPP
#define TGATE_BEAM_HPP

#include <vector>

#include "tgate/dynamics.hpp"
#include "tgate/trap.hpp"
#include "tgate/units.hpp"

namespace tgate {

/// Gaussian 729 nm beam crossing the trap axis at an angle.
struct BeamModel {
    double wavelength = 729e-9;        // m
    double axis_angle = units::pi / 4; // rad between k-vector and trap axis
    double waist = 15.0;               // um, 1/e^2 intensity radius
    double center = 0.0;               // um on the trap axis
    double peak_rabi = 0.0;            // rad/s at the beam centre, rabi_scale = 1
    double stark_coeff = 0.0;          // s; Delta_S = stark_coeff * Omega^2

    /// Waist projected onto the trap axis.
    double axial_waist() const;
    /// Field envelope at axial position x (um); 1 at the centre.
    double field(double x) const;
    /// Axial projection of the wave number (rad/m).
    double axial_wavenumber() const;
    void validate() const;
};

/// delta_D = k cos(angle) v for an axial velocity in m/s.
double doppler_shift(const BeamModel &beam, double velocity);

struct RabiEnvelopes {
    std::vector<double> omega_1;
    std::vector<double> omega_2;
};

/// Carrier Rabi frequency of each ion along the trajectory. The ions sit at
/// x(t) -/+ d/2; a non-positive spacing selects the local equilibrium
/// spacing of the trajectory.
RabiEnvelopes rabi_envelopes(const Trajectory &traj, const BeamModel &beam, double spacing = 0.0,
                             double rabi_scale = 1.0);

/// kappa (Omega_1^2 + Omega_2^2) / 2.
std::vector<double> stark_envelope(const std::vector<double> &omega_1,
                                   const std::vector<double> &omega_2, const BeamModel &beam);

std::vector<double> doppler_envelope(const Trajectory &traj, const BeamModel &beam);

/// Gate envelopes for the interaction window [t_start, t_end] of a
/// trajectory, re-based so that the window starts at t = 0. The Doppler
/// channel holds doppler_reference - delta_D(t): the tones are set for a
/// Doppler shift of doppler_reference.
EnvelopeSet transport_envelopes(const Trajectory &traj, const BeamModel &beam, double t_start,
                                double t_end, double doppler_reference, double spacing = 0.0);

/// Constant envelopes for ions held at `position`.
EnvelopeSet stationary_envelopes(const BeamModel &beam, double duration, double position,
                                 double spacing);

}  // namespace tgate

#endif  // TGATE_BEAM_HPP
