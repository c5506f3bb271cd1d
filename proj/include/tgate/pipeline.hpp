#ifndef TGATE_PIPELINE_HPP
#define TGATE_PIPELINE_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tgate/calib.hpp"

namespace tgate {

/// Inputs shared by the calibration pipelines. Angular frequencies in
/// rad/s, times in s, positions in um.
struct PipelineConfig {
    Plant plant;

    double ramsey_loss = 0.014;
    double ramsey_delay = 160e-6;

    double gate_time = 160e-6;
    double stationary_position = 0.0;
    double stationary_delta_m = units::khz(12.5);

    double region_start = -40.0;
    double region_end = 40.0;
    double keyframe_spacing = 2.0;
    int segments = 8;

    double stark_difference = units::two_pi * 5e3;

    /// Scan grids.
    std::vector<double> stationary_delta_m_grid;
    std::vector<double> static_delta_m_grid;
    std::vector<double> static_delta_g_grid;
    std::vector<double> dynamic_delta_m_grid;
    int static_rounds = 2;
    int dynamic_rounds = 2;

    long shots = 500;           // per scan point and per parity phase
    long doppler_shots = 1000;  // per segmented Doppler point; unused when shots == 0
    int fidelity_draws = 500;   // noise realisations for the final state
    int parity_phases = 16;
    int quadrature_nodes = 4;
    std::uint64_t seed = 1;

    ConfinementOptions confinement;
    DopplerOptions doppler = default_doppler_options();

    /// Grids and options used when a field is left empty.
    static PipelineConfig defaults();
    /// Peak Rabi frequency that meets the analytic gate condition for ions
    /// held at stationary_position at rabi_scale 1.
    double analytic_peak_rabi() const;
    void validate() const;
};

/// Plant with the Ramsey-calibrated carrier noise switched on.
Plant noisy_plant(const PipelineConfig &config);

struct WaveformBuild {
    Waveform initial;
    Waveform waveform;
    ConfinementResult confinement;
    DopplerResult doppler;
    SpectroscopyResult spectrum_before;
    SpectroscopyResult spectrum_after;
};

/// Keyframes over the transport region, confinement flattening, then
/// Doppler flattening, with full-transit spectra before and after.
WaveformBuild build_transport_waveform(const PipelineConfig &config);

struct FidelityReport {
    FidelityEstimate sampled;       // from trinomial shots and the parity fit
    double ensemble_fidelity = 0.0; // infinite-shot value over the same draws
    Populations ensemble;
    ParityFit parity;
};

/// Runs `draws` noisy shots of the gate and estimates the Bell fidelity.
FidelityReport measure_fidelity(const Plant &plant, const GateSetup &setup, int draws,
                                long shots, int parity_phases, std::uint64_t seed);

enum class GateMode { Stationary, TransportStatic, TransportDynamic };

std::string to_string(GateMode mode);
GateMode parse_gate_mode(const std::string &text);

struct GateRun {
    GateMode mode = GateMode::Stationary;
    double sigma_carrier = 0.0;
    double stark_coeff = 0.0;
    double doppler_reference = 0.0;
    std::vector<double> segment_stark;  // at the final power, rad/s
    std::vector<SidebandPair> sidebands;
    std::vector<ScanResult> scans;
    BalanceResult balance;
    std::optional<StarkCompensationResult> compensation;
    GateSetup setup{GateParams{}, EnvelopeSet::constant(1e-6, 0.0), 0.0};
    FidelityReport fidelity;
};

GateRun run_stationary(const PipelineConfig &config);

/// Transport gate on a calibrated waveform (usually WaveformBuild::waveform).
GateRun run_transport_static(const PipelineConfig &config, const Waveform &waveform);
GateRun run_transport_dynamic(const PipelineConfig &config, const Waveform &waveform);

GateRun run_gate(const PipelineConfig &config, GateMode mode, const Waveform *waveform);

nlohmann::json to_json(const WaveformBuild &build);
nlohmann::json to_json(const FidelityReport &report);
nlohmann::json to_json(const GateRun &run);

}  // namespace tgate

#endif  // TGATE_PIPELINE_HPP
