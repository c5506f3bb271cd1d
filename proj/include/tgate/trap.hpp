#ifndef TGATE_TRAP_HPP
#define TGATE_TRAP_HPP

#include <Eigen/Dense>
#include <iosfwd>
#include <string>
#include <vector>

#include "tgate/units.hpp"

namespace tgate {

using Voltages = Eigen::VectorXd;

/// Gaussian bump potentials, one per electrode, on a regular pitch:
///     phi_i(x) = amplitude * exp(-(x - c_i)^2 / (2 width^2)),  c_i = (i - (count-1)/2) * pitch.
/// Positions in um, potentials in V per applied volt.
struct ElectrodeBasis {
    int count = 15;
    double pitch = 60.0;
    double width = 36.0;
    double amplitude = 0.02;

    double center(int i) const {
        return (i - 0.5 * (count - 1)) * pitch;
    }
    void validate() const;
};

/// Additive stray potential term amplitude * sin(2 pi x / wavelength + phase), in V.
struct StrayComponent {
    double amplitude = 0.0;
    double wavelength = 100.0;
    double phase = 0.0;
};

/// Boundary between two surface patches: the stray curvature steps from
/// -curvature to +curvature across `position`,
///     U''(x) = curvature * erf((x - position) / width),
/// with U and U' continuous and U'(position) = curvature * width / sqrt(pi).
struct PatchEdge {
    double position = 0.0;   // um
    double width = 2.0;      // um
    double curvature = 0.0;  // V / um^2
};

/// Differences between the real plant and the ideal model used for solving.
struct Imperfections {
    /// Relative electrode gain error g_i = ripple * sin(2 pi i / period + phase).
    double gain_ripple = 0.0;
    double gain_period = 4.0;  // electrodes
    double gain_phase = 0.0;
    std::vector<StrayComponent> stray;
    std::vector<PatchEdge> patches;
    /// First-order low-pass time constant of every electrode channel (s).
    double filter_tau = 0.0;

    static Imperfections none() {
        return {};
    }
    /// Default plant: a slow gain ripple and one patch edge at x = 0 that
    /// together give 4.6 % peak omega_COM deviation over +-40 um, a velocity
    /// step of about 30 kHz Doppler across the patch edge, and 2 us filters.
    static Imperfections defaults();
};

enum class PotentialModel { Ideal, Perturbed };

class TrapModel {
public:
    explicit TrapModel(ElectrodeBasis basis = {}, Imperfections imperfections = {},
                       double mass = units::calcium40_mass);

    int electrodes() const noexcept {
        return basis_.count;
    }
    const ElectrodeBasis &basis() const noexcept {
        return basis_;
    }
    const Imperfections &imperfections() const noexcept {
        return imp_;
    }
    double mass() const noexcept {
        return mass_;
    }

    /// d^k phi_i / dx^k at x, k in [0, 3].
    double basis_function(int i, double x, int derivative = 0) const;
    double gain(int i) const;
    double stray(double x, int derivative = 0) const;

    /// d^k U / dx^k (V / um^k) of the potential produced by `v`.
    double potential(const Voltages &v, double x, int derivative, PotentialModel model) const;

    /// Axial COM frequency (rad/s) for a potential curvature in V/um^2.
    double omega_from_curvature(double curvature) const;
    double curvature_from_omega(double omega) const;

    /// Positions where every electrode-basis function is resolvable.
    double coverage_min() const;
    double coverage_max() const;

private:
    ElectrodeBasis basis_;
    Imperfections imp_;
    double mass_;
};

constexpr double kMaxElectrodeVoltage = 12.0;
constexpr double kSamplePeriod = 5.0 * units::ns;

/// Minimum-norm voltages whose ideal-basis potential has zero slope at x0
/// and the curvature of omega_target. Clamped to +-12 V; throws
/// infeasible-keyframe when the clamped set misses the constraints by more
/// than 1e-3 relative.
Voltages solve_keyframe(const TrapModel &trap, double x0, double omega_target);

struct Keyframe {
    double position = 0.0;  // um
    Voltages voltages;
};

std::vector<Keyframe> solve_keyframes(const TrapModel &trap, const std::vector<double> &positions,
                                      double omega_target);

/// Keyframe-index range [first, last] traversed in `duration` seconds.
struct Segment {
    int first_keyframe = 0;
    int last_keyframe = 0;
    double duration = 0.0;
};

/// Multiplicative voltage correction as a function of nominal well position,
/// linearly interpolated and held constant beyond the end points.
struct ScaleProfile {
    std::vector<double> positions;
    std::vector<double> factors;
    double at(double x) const;
};

/// Per-electrode voltage frames at a fixed 5 ns sample period.
///
/// Frame n is applied during [n dt, (n+1) dt) and holds the voltages of the
/// path point reached at t = (n+1) dt; before t = 0 the first keyframe is
/// held, after the last frame the final path point. Within each segment the
/// path advances linearly in keyframe index.
class Waveform {
public:
    Waveform(std::vector<Keyframe> keyframes, std::vector<Segment> segments,
             std::vector<ScaleProfile> scales = {}, double filter_tau = 0.0);

    const std::vector<Keyframe> &keyframes() const noexcept {
        return keyframes_;
    }
    const std::vector<Segment> &segments() const noexcept {
        return segments_;
    }
    const std::vector<ScaleProfile> &scales() const noexcept {
        return scales_;
    }
    double filter_tau() const noexcept {
        return filter_tau_;
    }
    int electrodes() const noexcept {
        return static_cast<int>(frames_.cols());
    }
    Eigen::Index frame_count() const noexcept {
        return frames_.rows();
    }
    double duration() const noexcept {
        return static_cast<double>(frames_.rows()) * kSamplePeriod;
    }
    double sample_period() const noexcept {
        return kSamplePeriod;
    }
    /// Commanded voltages (rows are frames).
    const Eigen::MatrixXd &frames() const noexcept {
        return frames_;
    }
    /// Voltages after the electrode filters.
    const Eigen::MatrixXd &effective() const noexcept {
        return effective_;
    }
    /// Effective voltages at time t (held beyond the frames).
    Voltages effective_at(double t) const;

    int segment_frames(std::size_t k) const;
    double segment_start(std::size_t k) const;
    double segment_end(std::size_t k) const;

    /// Nominal (keyframe-path) position at time t.
    double nominal_position(double t) const;
    /// Combined scale factor of all profiles at a nominal position.
    double scale_at(double x) const;
    /// Scaled keyframe-path voltages at fractional keyframe index p.
    Voltages path_voltages(double p) const;
    /// Fractional keyframe index at nominal position x (positions increasing).
    double path_index(double x) const;

    /// Rebuilds the frames from the stored path description (used after
    /// deserialization to verify consistency).
    static Waveform from_frames(std::vector<Keyframe> keyframes, std::vector<Segment> segments,
                                std::vector<ScaleProfile> scales, double filter_tau,
                                Eigen::MatrixXd frames);

private:
    Waveform() = default;
    void render();
    void filter();

    std::vector<Keyframe> keyframes_;
    std::vector<Segment> segments_;
    std::vector<ScaleProfile> scales_;
    double filter_tau_ = 0.0;
    std::vector<int> segment_frames_;
    std::vector<int> segment_offset_;
    Eigen::MatrixXd frames_;
    Eigen::MatrixXd effective_;
};

/// Even split of the keyframe path into `segments` parts of equal duration.
std::vector<Segment> uniform_segments(int keyframes, int segments, double total_duration);

/// Linear interpolation between keyframes over total_duration, split into
/// `segments` equal parts; the filter of `trap` produces the effective frames.
Waveform synthesize_waveform(const TrapModel &trap, std::vector<Keyframe> keyframes,
                             double total_duration, int segments = 8);

Waveform apply_confinement_scaling(const Waveform &wf, const ScaleProfile &profile);

/// Multiplies segment k's duration by factors[k]; the spatial path is kept.
Waveform retime_segments(const Waveform &wf, const std::vector<double> &factors);

struct Trajectory {
    std::vector<double> time;       // s
    std::vector<double> position;   // um, well minimum
    std::vector<double> velocity;   // m/s
    std::vector<double> omega_com;  // rad/s

    std::vector<double> omega_bm() const;
    /// Equilibrium separation of two ions (um) at each sample.
    std::vector<double> ion_spacing(double mass = units::calcium40_mass) const;
};

struct TrajectoryOptions {
    int stride = 20;             // frames between samples
    double post_hold = 2.0e-6;   // s sampled after the last frame
};

/// Follows the minimum of the perturbed potential frame by frame.
Trajectory extract_trajectory(const TrapModel &trap, const Waveform &wf,
                              const TrajectoryOptions &options = {});

/// Minimum of the potential of `v` near `guess` and its curvature frequency.
struct WellPoint {
    double position;
    double omega;
};
WellPoint locate_well(const TrapModel &trap, const Voltages &v, double guess, PotentialModel model);

/// Two-ion equilibrium separation (um) in a harmonic well.
double ion_spacing(double omega_com, double mass = units::calcium40_mass);

void write_waveform(std::ostream &out, const Waveform &wf);
Waveform read_waveform(std::istream &in);
void save_waveform(const std::string &path, const Waveform &wf);
Waveform load_waveform(const std::string &path);

}  // namespace tgate

#endif  // TGATE_TRAP_HPP
