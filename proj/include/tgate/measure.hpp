#ifndef TGATE_MEASURE_HPP
#define TGATE_MEASURE_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tgate/dynamics.hpp"
#include "tgate/qcore.hpp"

namespace tgate {

/// Outcome counts by number of bright ions.
struct MeasurementRecord {
    long shots = 0;
    long n0 = 0;
    long n1 = 0;
    long n2 = 0;

    Populations populations() const;
    /// Half-width of the 68 % Wilson score interval of each population.
    Populations uncertainty() const;
};

/// One trinomial outcome per shot from the populations of a uniformly drawn
/// ensemble member.
MeasurementRecord sample_shots(const std::vector<QuantumState> &ensemble, long shots,
                               std::uint64_t seed);
MeasurementRecord sample_populations(const Populations &p, long shots, std::uint64_t seed);

/// Populations after an ideal collective rotation by `theta` with phase phi
/// applied to both ions (the motional mode is traced out).
Populations rotated_populations(const QuantumState &state, double theta, double phi);

struct ParityPoint {
    double phase = 0.0;
    MeasurementRecord record;
    Populations expected;
    double parity = 0.0;
};

struct ParityFit {
    double amplitude = 0.0;
    double amplitude_error = 0.0;
    double phase_offset = 0.0;
    std::vector<ParityPoint> points;
};

struct ParityOptions {
    int phases = 16;
    long shots_per_phase = 500;
    std::uint64_t seed = 0;
    /// Time of the analysis pulse relative to the start of the interaction;
    /// shot-wise carrier offsets rotate its phase by -epsilon * analysis_time.
    double analysis_time = 0.0;
};

/// Parity P0 + P2 - P1 after a pi/2 analysis pulse at each phase, fitted with
/// A cos(2 phi + phi0). shots_per_phase = 0 fits the expectation values.
ParityFit parity_scan(const std::vector<Shot> &shots, const ParityOptions &options);

struct FidelityEstimate {
    double p0 = 0.0;
    double p2 = 0.0;
    double population_error = 0.0;  // of P0 + P2
    double parity_amplitude = 0.0;
    double parity_error = 0.0;
    double fidelity = 0.0;
    double fidelity_error = 0.0;
};

/// F = (P0 + P2 + A) / 2 with first-order error propagation.
FidelityEstimate bell_fidelity(const MeasurementRecord &record, double amplitude,
                               double amplitude_error = 0.0);

struct ScanPoint {
    double value = 0.0;
    Populations expected;
    std::optional<MeasurementRecord> record;

    /// Sampled populations when shots were taken, else the expectation.
    Populations measured() const;
};

struct ScanResult {
    std::string parameter;
    std::vector<ScanPoint> points;
    std::vector<std::pair<std::string, double>> fixed;

    std::vector<double> values() const;
    /// Value of the smallest measured P1.
    double argmin_p1() const;
};

/// Per |value|: sum_k |P_k(v) - P_k(-v)| / 3, in increasing |value|.
std::vector<std::pair<double, double>> asymmetry_profile(const ScanResult &scan);

/// Mean of asymmetry_profile over |value| > 0, optionally limited to
/// |value| <= max_abs.
double asymmetry_metric(const ScanResult &scan, double max_abs = 0.0);

}  // namespace tgate

#endif  // TGATE_MEASURE_HPP
