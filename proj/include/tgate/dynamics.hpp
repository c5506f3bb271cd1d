#ifndef TGATE_DYNAMICS_HPP
#define TGATE_DYNAMICS_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tgate/qcore.hpp"
#include "tgate/units.hpp"

namespace tgate {

/// Drive parameters of the bichromatic interaction.
///
/// Tone detunings from the bare carrier are
///     delta_blue =  omega_bm + delta_m + delta_g
///     delta_red  = -omega_bm - delta_m + delta_g
struct GateParams {
    double tau = 160.0 * units::us;
    double delta_m = units::khz(12.5);
    double delta_g = 0.0;
    double omega_bm = units::mhz(2.45);
    double eta_bm = 0.042;
    /// Phase of the spin-dependent force at interaction start. pi/2 maps
    /// |SS> onto (|SS> - i|DD>)/sqrt(2) for delta_m > 0.
    double spin_phase = units::pi / 2.0;
    /// Multiplies both tone amplitudes. Light shifts scale with its square.
    double rabi_scale = 1.0;

    double delta_blue() const {
        return omega_bm + delta_m + delta_g;
    }
    double delta_red() const {
        return -omega_bm - delta_m + delta_g;
    }

    void validate() const;
};

/// Force phase that yields (|SS> - i|DD>)/sqrt(2) for the given sign of delta_m.
double bell_spin_phase(double delta_m);

/// Time-dependent drive envelopes on one strictly increasing grid, evaluated
/// by linear interpolation. All values refer to rabi_scale = 1.
///
///   omega_1, omega_2  carrier Rabi frequency seen by each ion
///   stark             light shift of the sidebands (both tones together)
///   doppler           Doppler detuning that adds to delta_g
class EnvelopeSet {
public:
    EnvelopeSet(std::vector<double> time, std::vector<double> omega_1, std::vector<double> omega_2,
                std::vector<double> stark, std::vector<double> doppler);

    static EnvelopeSet constant(double duration, double omega, double stark = 0.0,
                                double doppler = 0.0);

    struct Sample {
        double omega_1;
        double omega_2;
        double stark;
        double doppler;
    };

    Sample at(double t) const;

    /// Integral from 0 to t of (doppler - stark_scale * stark).
    double detuning_phase(double t, double stark_scale) const;

    double start() const {
        return time_.front();
    }
    double end() const {
        return time_.back();
    }

    const std::vector<double> &time() const {
        return time_;
    }
    const std::vector<double> &omega_1() const {
        return omega_1_;
    }
    const std::vector<double> &omega_2() const {
        return omega_2_;
    }
    const std::vector<double> &stark() const {
        return stark_;
    }
    const std::vector<double> &doppler() const {
        return doppler_;
    }

    /// Copy with doppler replaced; used when a waveform is retimed or the
    /// reference Doppler shift changes.
    EnvelopeSet with_doppler(std::vector<double> doppler) const;
    EnvelopeSet with_stark(std::vector<double> stark) const;

private:
    std::size_t locate(double t) const;
    double cumulative(const std::vector<double> &cum, const std::vector<double> &values,
                      double t) const;

    std::vector<double> time_;
    std::vector<double> omega_1_;
    std::vector<double> omega_2_;
    std::vector<double> stark_;
    std::vector<double> doppler_;
    std::vector<double> cum_stark_;
    std::vector<double> cum_doppler_;
};

/// Quasi-static carrier-frequency noise: every shot draws one offset
/// epsilon ~ N(0, sigma_carrier) that shifts both tones.
struct NoiseModel {
    double sigma_carrier = 0.0;
    std::uint64_t seed = 0;
};

/// Two tones addressing the breathing-mode sidebands, described by their
/// detunings from the respective bare sideband:
///     blue_offset = delta_blue - omega_bm,  red_offset = delta_red + omega_bm.
/// The gate uses blue_offset = delta_m + delta_g, red_offset = -delta_m + delta_g;
/// sideband spectroscopy scans one tone and may switch the other off.
struct DriveTones {
    double blue_offset = 0.0;
    double red_offset = 0.0;
    double blue_amplitude = 1.0;
    double red_amplitude = 1.0;
    double eta = 0.042;
    double spin_phase = 0.0;
    double rabi_scale = 1.0;

    static DriveTones from_gate(const GateParams &params);
};

/// Interaction-picture Hamiltonian of the two-tone drive:
///
///   H = sum_i s_i (eta/2) Omega_i(t) e^{i phi} (e^{-i theta_b(t)} a^+ + e^{-i theta_r(t)} a) sigma+_i + h.c.
///
/// with s_1 = +1, s_2 = -1 (breathing mode) and
///   theta_b(t) = (blue_offset + eps) t + int_0^t (doppler - Delta_S) dt'
///   theta_r(t) = (red_offset  + eps) t + int_0^t (doppler - Delta_S) dt'.
class MsDrive {
public:
    MsDrive(const DriveTones &tones, const EnvelopeSet &env, double carrier_offset = 0.0);

    struct Coupling {
        cplx blue[2];  // coefficient of a^+ sigma+_i
        cplx red[2];   // coefficient of a sigma+_i
    };
    Coupling coupling(double t) const;

    /// out = -i H(t) in, with both vectors laid out per HilbertSpec.
    void apply(double t, const cplx *in, cplx *out, int fock_dim) const;

    Matrix dense(const OperatorSet &ops, double t) const;

private:
    DriveTones tones_;
    EnvelopeSet env_;
    double carrier_offset_;
};

Matrix ms_hamiltonian(const OperatorSet &ops, double t, const GateParams &params,
                      const EnvelopeSet &env);

/// Integrates the Schrodinger equation over [0, tau] with an adaptive
/// Dormand-Prince stepper; tol bounds the max-norm error of the final state.
QuantumState propagate(const QuantumState &state, const GateParams &params, const EnvelopeSet &env,
                       double tol = 1e-9, double carrier_offset = 0.0);

QuantumState propagate_drive(const QuantumState &state, const DriveTones &tones,
                             const EnvelopeSet &env, double t_start, double t_end,
                             double tol = 1e-9, double carrier_offset = 0.0);

struct MsReference {
    double loops = 0.0;  // K = delta_m tau / 2 pi
    bool loop_closed = false;
    std::string warning;
    double ideal_rabi = 0.0;   // Omega with eta Omega = |delta_m| / (2 sqrt K)
    double rabi = 0.0;         // Omega used for alpha and the phase below
    double geometric_phase = 0.0;
    std::vector<double> times;
    std::vector<cplx> alpha;  // spin-dependent displacement per unit eigenvalue
};

/// Closed-form description of the constant-envelope interaction. When
/// omega is not given the ideal Rabi frequency is used.
MsReference analytic_ms_reference(const GateParams &params, std::optional<double> omega = {},
                                  int samples = 201);

struct Shot {
    QuantumState state;
    double carrier_offset = 0.0;
    int initial_fock = 0;
};

struct ShotOptions {
    double nbar = 0.0;
    double tol = 1e-8;
    SpinVector initial_spin = SpinVector(1.0, 0.0, 0.0, 0.0);
};

/// Monte-Carlo ensemble: independent noise draw and thermal Fock sample per
/// shot, derived from (seed, shot index). Deterministic and order independent.
std::vector<Shot> run_shots(const HilbertSpec &spec, const GateParams &params,
                            const EnvelopeSet &env, const NoiseModel &noise, int n_shots,
                            const ShotOptions &options = {});

struct AverageOptions {
    int quadrature_nodes = 12;
    double nbar = 0.0;
    double tol = 1e-8;
    SpinVector initial_spin = SpinVector(1.0, 0.0, 0.0, 0.0);
};

/// Populations averaged over the noise distribution (Gauss-Hermite) and the
/// thermal initial distribution; the infinite-shot limit of run_shots.
Populations expected_populations(const HilbertSpec &spec, const DriveTones &tones,
                                 const EnvelopeSet &env, double t_start, double t_end,
                                 const NoiseModel &noise, const AverageOptions &options = {});

Populations expected_populations(const HilbertSpec &spec, const GateParams &params,
                                 const EnvelopeSet &env, const NoiseModel &noise,
                                 const AverageOptions &options = {});

/// Simulated single-ion Ramsey fringe contrast (pi/2 - delay - pi/2 with a
/// scanned analysis phase), averaged over the quasi-static noise.
double ramsey_contrast(double sigma_carrier, double delay, int phase_points = 16);

/// sigma_carrier reproducing the requested Ramsey contrast loss.
double calibrate_noise(double target_contrast_loss, double delay);

}  // namespace tgate

#endif  // TGATE_DYNAMICS_HPP
