#ifndef TGATE_CALIB_HPP
#define TGATE_CALIB_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tgate/beam.hpp"
#include "tgate/dynamics.hpp"
#include "tgate/measure.hpp"
#include "tgate/trap.hpp"

namespace tgate {

/// Ground truth the calibration routines run simulated experiments against.
struct Plant {
    TrapModel trap;
    BeamModel beam;
    double omega_com = units::mhz(1.41);
    double eta_bm = 0.042;
    int fock_cutoff = 15;
    double nbar = 0.0;
    NoiseModel noise;

    double omega_bm() const;
    /// Two-ion spacing in the target well (um).
    double spacing() const;
};

/// shots = 0 evaluates expectation values instead of sampling counts.
struct MeasureOptions {
    long shots = 500;
    std::uint64_t seed = 0;
};

// ---------------------------------------------------------------------------
// Spectroscopy

struct GaussianFit {
    double amplitude = 0.0;
    double center = 0.0;
    double width = 0.0;  // standard deviation, rad/s
    double offset = 0.0;
    double center_error = 0.0;
    double residual_rms = 0.0;
};

/// Least-squares fit of a + A exp(-(x - c)^2 / (2 w^2)).
std::optional<GaussianFit> fit_gaussian(const std::vector<double> &x, const std::vector<double> &y);

struct SpectroscopyResult {
    std::vector<double> detunings;      // rad/s from the bare transition
    std::vector<double> bright;         // mean bright fraction per ion
    std::vector<double> bright_error;   // standard error (0 without shots)
    std::vector<MeasurementRecord> records;
    double probe_rabi = 0.0;            // peak probe Rabi frequency at the beam centre
    double max_stark = 0.0;             // largest probe light shift seen by an ion
    double noise_floor = 0.0;
    bool multimodal = false;
    std::optional<GaussianFit> fit;     // empty when multimodal or the fit failed

    /// 1 - bright: the excitation signal that peaks on resonance.
    std::vector<double> excitation() const;
};

struct SpectroscopyOptions {
    std::vector<double> detunings;
    /// Pulse area at the more strongly driven ion.
    double probe_area = units::pi;
    /// Precondition on the probe light shift at the ions.
    double max_stark = units::two_pi * 200.0;
    /// Lineshape mismatch allowed in the single-peak test, relative to the
    /// fitted peak height; added in quadrature to the shot-noise floor.
    double model_floor = 0.05;
    MeasureOptions measure;
    double step = 20e-9;  // s, piecewise-constant propagation step
};

/// Equally spaced grid center +- half_width.
std::vector<double> detuning_grid(double center, double half_width, double step);

/// Single-tone carrier pulse on the transported ions during [t_start, t_end]
/// of the trajectory. Each ion is an independent two-level system.
SpectroscopyResult carrier_spectroscopy(const Plant &plant, const Trajectory &traj, double t_start,
                                        double t_end, const SpectroscopyOptions &options);

/// Same probe on ions held at `position` for `duration`.
SpectroscopyResult carrier_spectroscopy_static(const Plant &plant, double position,
                                               double duration, const SpectroscopyOptions &options);

/// Segment scans must be single-peaked; throws calibration-failure otherwise.
SpectroscopyResult segment_spectroscopy(const Plant &plant, const Waveform &wf,
                                        const Trajectory &traj, std::size_t segment,
                                        const SpectroscopyOptions &options);

// ---------------------------------------------------------------------------
// Confinement

struct ComPoint {
    double position = 0.0;  // nominal well position, um
    double omega = 0.0;     // measured COM frequency, rad/s
    std::string error;      // non-empty when the well could not be located
};

struct ComProfileOptions {
    std::vector<double> positions;  // empty: -40 .. 40 um every 5 um
    double noise = 1e-3;            // relative std per readout
    int repeats = 4;
    std::uint64_t seed = 0;
};

std::vector<ComPoint> measure_com_profile(const Plant &plant, const Waveform &wf,
                                          const ComProfileOptions &options = {});

/// (omega_target / omega_measured)^2 per position.
ScaleProfile confinement_factors(const std::vector<ComPoint> &profile, double omega_target);

double max_relative_deviation(const std::vector<ComPoint> &profile, double omega_target);

struct ConfinementRound {
    std::vector<ComPoint> profile;
    double max_deviation = 0.0;
};

struct ConfinementResult {
    Waveform waveform;
    std::vector<ConfinementRound> rounds;  // the last entry is the final check
    bool converged = false;
};

struct ConfinementOptions {
    ComProfileOptions profile;
    double tolerance = 2e-3;
    int max_rounds = 5;
};

ConfinementResult flatten_confinement(const Plant &plant, const Waveform &wf,
                                      const ConfinementOptions &options = {});

// ---------------------------------------------------------------------------
// Doppler

struct DopplerRound {
    std::vector<double> segment_doppler;  // fitted centres, rad/s
    std::vector<double> segment_error;
    double spread = 0.0;                  // max - min
    std::vector<double> factors;          // applied after this measurement
};

struct DopplerResult {
    Waveform waveform;
    double target = 0.0;
    std::vector<DopplerRound> rounds;
    bool converged = false;
};

struct DopplerOptions {
    SpectroscopyOptions probe;  // detunings relative to the target Doppler shift
    double tolerance = units::two_pi * 1e3;
    int max_rounds = 5;
    /// Doppler target; 0 derives it from path length over duration.
    double target = 0.0;
    TrajectoryOptions trajectory;
};

DopplerOptions default_doppler_options();

/// Per-segment carrier spectroscopy of the current waveform.
DopplerRound measure_segment_doppler(const Plant &plant, const Waveform &wf,
                                     const Trajectory &traj, const DopplerOptions &options,
                                     double target);

DopplerResult flatten_doppler(const Plant &plant, const Waveform &wf,
                              const DopplerOptions &options = default_doppler_options());

/// Doppler shift of a uniform pass over the keyframe path in wf.duration().
double nominal_doppler(const Plant &plant, const Waveform &wf);

// ---------------------------------------------------------------------------
// Gate configuration

/// Everything needed to run the interaction once.
struct GateSetup {
    GateParams params;
    EnvelopeSet envelopes;
    /// Start of the analysis pulse relative to the interaction start.
    double analysis_time = 0.0;
};

GateSetup stationary_gate(const Plant &plant, const GateParams &params, double position);

/// Interaction over the whole waveform. The Doppler channel holds
/// doppler_reference - delta_D(t).
GateSetup transport_gate(const Plant &plant, const Trajectory &traj, double duration,
                         const GateParams &params, double doppler_reference);

struct ScanOptions {
    MeasureOptions measure;
    int quadrature_nodes = 12;
    double tol = 1e-8;
};

Populations gate_populations(const Plant &plant, const GateSetup &setup, const ScanOptions &options);

/// P_k per value with params.delta_m = value (and the matching force phase).
ScanResult scan_mode_detuning(const Plant &plant, const GateSetup &setup,
                              const std::vector<double> &grid, const ScanOptions &options = {});

ScanResult scan_global_detuning(const Plant &plant, const GateSetup &setup,
                                const std::vector<double> &grid, const ScanOptions &options = {});

/// Discrete P1 minimum refined by a parabola through its neighbours.
/// Throws rescan-required when the minimum sits on the grid edge.
double refine_p1_minimum(const ScanResult &scan);

/// Smallest |value| whose P1 lies within two standard errors of the scan
/// minimum (1e-3 in expectation mode): the lowest power that reaches the
/// best gate. Throws rescan-required when that point is on the grid edge.
double usable_p1_minimum(const ScanResult &scan, long shots);

/// Grid from lo to hi (inclusive) in steps of `step`.
std::vector<double> linear_grid(double lo, double hi, double step);

struct BalanceResult {
    double rabi_scale = 0.0;
    Populations populations;
    int evaluations = 0;
};

/// Root of P0 - P2 in rabi_scale on the first crossing above `guess`/2.
BalanceResult balance_power(const Plant &plant, const GateSetup &setup,
                            const ScanOptions &options = {}, double guess = 0.0);

/// Mode-detuning scan with the power re-balanced at every point, so that
/// P1 measures the gate error at each detuning. Points whose balance fails
/// are reported with P1 = 1 and rabi_scale 0.
struct BalancedScan {
    ScanResult scan;
    std::vector<double> rabi_scales;
};

BalancedScan scan_balanced_mode_detuning(const Plant &plant, const GateSetup &setup,
                                         const std::vector<double> &grid,
                                         const ScanOptions &options = {}, double guess = 0.0);

// ---------------------------------------------------------------------------
// Sidebands and light shifts

enum class Sideband { Blue, Red };

struct SidebandOptions {
    std::vector<double> offsets;  // scanned tone offsets from the bare sideband
    /// The other tone sits where a gate with this mode detuning puts it.
    double other_tone_delta_m = units::two_pi * 25e3;
    /// rabi_scale of both tones; 0 picks a reduced power.
    double rabi_scale = 0.0;
    /// Reduced power keeps the light shift at the ions below this value.
    double max_stark = units::two_pi * 100.0;
    ScanOptions scan;
};

struct SidebandResult {
    Sideband sideband = Sideband::Blue;
    double rabi_scale = 0.0;
    std::vector<double> offsets;
    std::vector<double> excitation;
    std::vector<double> excitation_error;
    std::optional<GaussianFit> fit;
    double center = 0.0;
};

struct SidebandPair {
    SidebandResult blue;
    SidebandResult red;
    double mean_center() const {
        return 0.5 * (blue.center + red.center);
    }
};

/// Blue sideband probed from |SS0>, red sideband from |DD0>. `base` fixes
/// the interaction window and envelopes; its Doppler channel must hold
/// -delta_D(t) (reference 0) so that the fitted centres are lab offsets.
SidebandResult sideband_spectroscopy(const Plant &plant, const GateSetup &base, Sideband which,
                                     const SidebandOptions &options);

SidebandPair calibrate_sidebands(const Plant &plant, const GateSetup &base,
                                 const SidebandOptions &options);

/// Sideband pulse duration for a stationary probe with full transfer.
double stationary_probe_duration(const Plant &plant, double rabi_scale, double position);

/// Largest reduced rabi_scale whose light shift stays below max_stark.
double reduced_rabi_scale(const GateSetup &base, double max_stark, double cap);

/// Intensity-weighted mean light shift per window, per unit kappa and at
/// the given rabi_scale: sum Omega^2 (Omega_1^2 + Omega_2^2)/2 / sum Omega^2.
std::vector<double> segment_stark_profile(const Plant &plant, const Trajectory &traj,
                                          const std::vector<std::pair<double, double>> &windows,
                                          double rabi_scale);

std::vector<std::pair<double, double>> segment_windows(const Waveform &wf);

/// kappa such that the largest segment light shift exceeds the first
/// segment's by `difference` at the given rabi_scale.
double calibrate_stark_coefficient(const Plant &plant, const Waveform &wf, const Trajectory &traj,
                                   double rabi_scale, double difference = units::two_pi * 5e3);

// ---------------------------------------------------------------------------
// Dynamic compensation

struct StarkCompensationOptions {
    double rabi_scale = 1.0;
    double doppler_reference = 0.0;
    double max_fraction = 0.2;
    int rounds = 3;
    TrajectoryOptions trajectory;
};

struct StarkCompensationResult {
    Waveform waveform;
    std::vector<double> segment_stark;     // time mean per segment, rad/s
    std::vector<double> velocity_offsets;  // m/s
    std::vector<double> factors;           // cumulative duration factors
    /// Light shift left after compensation, rad/s (see compensation_residual).
    double residual = 0.0;
    double residual_abs_mean = 0.0;
};

/// Per-segment mean Doppler shift of the trajectory (rad/s).
std::vector<double> segment_doppler(const Plant &plant, const Waveform &wf, const Trajectory &traj);

/// Mismatch r(t) = Delta_S(t) - x_k between the light shift and the extra
/// Doppler shift x_k = reference_k - D_k of the segment containing t.
///   effective  |sum Delta_S r / sum Delta_S|: the constant shift the gate
///              sees, weighted like the light shift (proportional to Omega^2)
///   abs_mean   time mean of |r| over the interaction
struct CompensationResidual {
    double effective = 0.0;
    double abs_mean = 0.0;
};

CompensationResidual compensation_residual(const Plant &plant, const Waveform &wf,
                                           const Trajectory &traj, double rabi_scale,
                                           const std::vector<double> &reference_doppler);

StarkCompensationResult dynamic_stark_compensation(const Plant &plant, const Waveform &wf,
                                                   const StarkCompensationOptions &options);

// ---------------------------------------------------------------------------
// Reports

nlohmann::json to_json(const Populations &p);
nlohmann::json to_json(const MeasurementRecord &r);
nlohmann::json to_json(const GaussianFit &fit);
nlohmann::json to_json(const SpectroscopyResult &r);
nlohmann::json to_json(const ComPoint &p);
nlohmann::json to_json(const ConfinementResult &r);
nlohmann::json to_json(const DopplerResult &r);
nlohmann::json to_json(const SidebandResult &r);
nlohmann::json to_json(const ScanResult &r);
nlohmann::json to_json(const BalanceResult &r);
nlohmann::json to_json(const BalancedScan &r);
nlohmann::json to_json(const StarkCompensationResult &r);
nlohmann::json to_json(const FidelityEstimate &f);
nlohmann::json to_json(const ParityFit &f);

}  // namespace tgate

#endif  // TGATE_CALIB_HPP
