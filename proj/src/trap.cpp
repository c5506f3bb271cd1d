#include "tgate/trap.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "tgate/error.hpp"
#include "tgate/numerics.hpp"

namespace tgate {

void ElectrodeBasis::validate() const {
    if (count < 3) throw Error(ErrorKind::InvalidArgument, "need at least 3 electrodes");
    if (!(pitch > 0.0) || !(width > 0.0) || !(amplitude > 0.0)) {
        throw Error(ErrorKind::InvalidArgument, "electrode pitch, width and amplitude must be > 0");
    }
}

Imperfections Imperfections::defaults() {
    Imperfections imp;
    imp.gain_ripple = 0.057;
    imp.gain_period = 14.0;
    imp.gain_phase = 1.6;
    imp.patches = {{0.0, 2.0, -1.14e-6}};
    imp.filter_tau = 2.0 * units::us;
    return imp;
}

TrapModel::TrapModel(ElectrodeBasis basis, Imperfections imperfections, double mass)
    : basis_(basis), imp_(std::move(imperfections)), mass_(mass) {
    basis_.validate();
    if (!(mass_ > 0.0)) throw Error(ErrorKind::InvalidArgument, "ion mass must be > 0");
    if (!(imp_.filter_tau >= 0.0)) {
        throw Error(ErrorKind::InvalidArgument, "filter time constant must be >= 0");
    }
    if (!(imp_.gain_period > 0.0) || std::abs(imp_.gain_ripple) >= 1.0) {
        throw Error(ErrorKind::InvalidArgument, "gain ripple must be < 1 with a positive period");
    }
    for (const auto &s : imp_.stray) {
        if (!(s.wavelength > 0.0)) {
            throw Error(ErrorKind::InvalidArgument, "stray wavelength must be > 0");
        }
    }
    for (const auto &p : imp_.patches) {
        if (!(p.width > 0.0) || !std::isfinite(p.curvature)) {
            throw Error(ErrorKind::InvalidArgument, "patch edge needs a positive width");
        }
    }
}

double TrapModel::basis_function(int i, double x, int derivative) const {
    double s2 = basis_.width * basis_.width;
    double y = x - basis_.center(i);
    double g = basis_.amplitude * std::exp(-0.5 * y * y / s2);
    switch (derivative) {
        case 0:
            return g;
        case 1:
            return -y / s2 * g;
        case 2:
            return (y * y / s2 - 1.0) / s2 * g;
        case 3:
            return (3.0 * y / s2 - y * y * y / (s2 * s2)) / s2 * g;
        default:
            throw Error(ErrorKind::InvalidArgument, "derivative order must be in [0, 3]");
    }
}

double TrapModel::gain(int i) const {
    return 1.0 + imp_.gain_ripple * std::sin(units::two_pi * i / imp_.gain_period + imp_.gain_phase);
}

double TrapModel::stray(double x, int derivative) const {
    double total = 0.0;
    for (const auto &s : imp_.stray) {
        double k = units::two_pi / s.wavelength;
        double arg = k * x + s.phase;
        switch (derivative) {
            case 0:
                total += s.amplitude * std::sin(arg);
                break;
            case 1:
                total += s.amplitude * k * std::cos(arg);
                break;
            case 2:
                total -= s.amplitude * k * k * std::sin(arg);
                break;
            case 3:
                total -= s.amplitude * k * k * k * std::cos(arg);
                break;
            default:
                throw Error(ErrorKind::InvalidArgument, "derivative order must be in [0, 3]");
        }
    }
    const double inv_sqrt_pi = 1.0 / std::sqrt(units::pi);
    for (const auto &p : imp_.patches) {
        double w = p.width;
        double u = (x - p.position) / w;
        double e = std::erf(u);
        double g = std::exp(-u * u) * inv_sqrt_pi;
        switch (derivative) {
            case 0:
                total += p.curvature * w * w * ((0.5 * u * u + 0.25) * e + 0.5 * u * g);
                break;
            case 1:
                total += p.curvature * w * (u * e + g);
                break;
            case 2:
                total += p.curvature * e;
                break;
            case 3:
                total += p.curvature * 2.0 * g / w;
                break;
        }
    }
    return total;
}

double TrapModel::potential(const Voltages &v, double x, int derivative, PotentialModel model) const {
    if (v.size() != basis_.count) {
        throw Error(ErrorKind::InvalidArgument, "voltage set does not match the electrode count");
    }
    double u = 0.0;
    bool perturbed = model == PotentialModel::Perturbed;
    for (int i = 0; i < basis_.count; ++i) {
        double w = perturbed ? gain(i) * v[i] : v[i];
        u += w * basis_function(i, x, derivative);
    }
    if (perturbed) u += stray(x, derivative);
    return u;
}

double TrapModel::omega_from_curvature(double curvature) const {
    return std::sqrt(units::elementary_charge * curvature * 1e12 / mass_);
}

double TrapModel::curvature_from_omega(double omega) const {
    return mass_ * omega * omega / units::elementary_charge * 1e-12;
}

double TrapModel::coverage_min() const {
    return basis_.center(0) + basis_.pitch;
}

double TrapModel::coverage_max() const {
    return basis_.center(basis_.count - 1) - basis_.pitch;
}

// ---------------------------------------------------------------------------
// Keyframes

Voltages solve_keyframe(const TrapModel &trap, double x0, double omega_target) {
    if (!(omega_target > 0.0)) {
        throw Error(ErrorKind::InvalidArgument, "target frequency must be > 0");
    }
    if (x0 < trap.coverage_min() || x0 > trap.coverage_max()) {
        std::ostringstream msg;
        msg << "position " << x0 << " um outside electrode coverage [" << trap.coverage_min()
            << ", " << trap.coverage_max() << "]";
        throw Error(ErrorKind::OutOfRange, msg.str());
    }
    const int n = trap.electrodes();
    // Zero slope, target curvature and zero cubic term, so that linear
    // interpolation between neighbouring keyframes moves the well evenly.
    Eigen::MatrixXd g(3, n);
    for (int i = 0; i < n; ++i) {
        g(0, i) = trap.basis_function(i, x0, 1);
        g(1, i) = trap.basis_function(i, x0, 2);
        g(2, i) = trap.basis_function(i, x0, 3);
    }
    double k = trap.curvature_from_omega(omega_target);
    Eigen::Vector3d b(0.0, k, 0.0);

    Voltages v = Voltages::Zero(n);
    std::vector<bool> fixed(static_cast<std::size_t>(n), false);
    for (int round = 0; round <= n; ++round) {
        std::vector<int> free;
        Eigen::Vector3d rhs = b;
        for (int i = 0; i < n; ++i) {
            if (fixed[static_cast<std::size_t>(i)]) {
                rhs -= g.col(i) * v[i];
            } else {
                free.push_back(i);
            }
        }
        if (free.size() < 3) break;
        Eigen::MatrixXd gf(3, static_cast<Eigen::Index>(free.size()));
        for (std::size_t j = 0; j < free.size(); ++j) gf.col(static_cast<Eigen::Index>(j)) = g.col(free[j]);
        // Minimum-norm solution of gf * v = rhs.
        Eigen::Matrix3d gram = gf * gf.transpose();
        Eigen::VectorXd vf = gf.transpose() * gram.ldlt().solve(rhs);
        bool clamped = false;
        for (std::size_t j = 0; j < free.size(); ++j) {
            double value = vf[static_cast<Eigen::Index>(j)];
            if (std::abs(value) > kMaxElectrodeVoltage) {
                fixed[static_cast<std::size_t>(free[j])] = true;
                v[free[j]] = std::copysign(kMaxElectrodeVoltage, value);
                clamped = true;
            } else {
                v[free[j]] = value;
            }
        }
        if (!clamped) break;
    }

    Eigen::Vector3d achieved = g * v;
    double slope_error = std::abs(achieved[0]) * trap.basis().width / k;
    double curvature_error = std::abs(achieved[1] - k) / k;
    if (slope_error > 1e-3 || curvature_error > 1e-3 ||
        v.cwiseAbs().maxCoeff() > kMaxElectrodeVoltage) {
        std::ostringstream msg;
        msg << "no voltage set within +-" << kMaxElectrodeVoltage << " V reaches omega/2pi = "
            << units::to_mhz(omega_target) << " MHz at x0 = " << x0
            << " um (relative curvature error " << curvature_error << ")";
        throw Error(ErrorKind::InfeasibleKeyframe, msg.str());
    }
    return v;
}

std::vector<Keyframe> solve_keyframes(const TrapModel &trap, const std::vector<double> &positions,
                                      double omega_target) {
    std::vector<Keyframe> out;
    out.reserve(positions.size());
    for (double x : positions) out.push_back({x, solve_keyframe(trap, x, omega_target)});
    return out;
}

// ---------------------------------------------------------------------------
// Waveform

double ScaleProfile::at(double x) const {
    if (positions.empty()) return 1.0;
    return interp_linear(positions, factors, x);
}

namespace {

void check_scale(const ScaleProfile &s) {
    if (s.positions.size() != s.factors.size() || s.positions.empty()) {
        throw Error(ErrorKind::InvalidArgument, "scale profile needs matching, non-empty arrays");
    }
    for (std::size_t i = 0; i < s.positions.size(); ++i) {
        if (!std::isfinite(s.factors[i]) || !std::isfinite(s.positions[i])) {
            throw Error(ErrorKind::InvalidArgument, "scale factors must be finite");
        }
        if (i > 0 && !(s.positions[i] > s.positions[i - 1])) {
            throw Error(ErrorKind::InvalidArgument, "scale positions must increase strictly");
        }
    }
}

}  // namespace

Waveform::Waveform(std::vector<Keyframe> keyframes, std::vector<Segment> segments,
                   std::vector<ScaleProfile> scales, double filter_tau)
    : keyframes_(std::move(keyframes)),
      segments_(std::move(segments)),
      scales_(std::move(scales)),
      filter_tau_(filter_tau) {
    render();
    filter();
}

Waveform Waveform::from_frames(std::vector<Keyframe> keyframes, std::vector<Segment> segments,
                               std::vector<ScaleProfile> scales, double filter_tau,
                               Eigen::MatrixXd frames) {
    Waveform wf(std::move(keyframes), std::move(segments), std::move(scales), filter_tau);
    if (frames.rows() != wf.frames_.rows() || frames.cols() != wf.frames_.cols()) {
        throw Error(ErrorKind::InvalidArgument, "frame table does not match the segment table");
    }
    if (frames.size() > 0 && frames.cwiseAbs().maxCoeff() > kMaxElectrodeVoltage) {
        throw Error(ErrorKind::ClampViolation, "stored frames exceed the voltage limit");
    }
    wf.frames_ = std::move(frames);
    wf.filter();
    return wf;
}

void Waveform::render() {
    if (keyframes_.size() < 2) {
        throw Error(ErrorKind::InvalidArgument, "a waveform needs at least two keyframes");
    }
    const auto ne = keyframes_.front().voltages.size();
    for (std::size_t i = 0; i < keyframes_.size(); ++i) {
        if (keyframes_[i].voltages.size() != ne) {
            throw Error(ErrorKind::InvalidArgument, "keyframes differ in electrode count");
        }
        if (i > 0 && !(keyframes_[i].position > keyframes_[i - 1].position) &&
            !(keyframes_[i].position < keyframes_[i - 1].position)) {
            // Repeated positions are allowed only for static waveforms.
            bool all_same = true;
            for (const auto &kf : keyframes_) all_same &= kf.position == keyframes_[0].position;
            if (!all_same) {
                throw Error(ErrorKind::InvalidArgument, "keyframe positions must be monotonic");
            }
        }
    }
    if (!(filter_tau_ >= 0.0)) {
        throw Error(ErrorKind::InvalidArgument, "filter time constant must be >= 0");
    }
    for (const auto &s : scales_) check_scale(s);
    if (segments_.empty()) throw Error(ErrorKind::InvalidArgument, "a waveform needs segments");

    const int last = static_cast<int>(keyframes_.size()) - 1;
    segment_frames_.clear();
    segment_offset_.clear();
    int total = 0;
    for (std::size_t k = 0; k < segments_.size(); ++k) {
        auto &seg = segments_[k];
        if (seg.first_keyframe < 0 || seg.last_keyframe > last ||
            seg.first_keyframe > seg.last_keyframe) {
            throw Error(ErrorKind::InvalidArgument, "segment keyframe range out of bounds");
        }
        if (k > 0 && seg.first_keyframe != segments_[k - 1].last_keyframe) {
            throw Error(ErrorKind::InvalidArgument, "segments must be contiguous");
        }
        if (!(seg.duration > 0.0) || !std::isfinite(seg.duration)) {
            throw Error(ErrorKind::InvalidArgument, "segment durations must be > 0");
        }
        auto frames = static_cast<long long>(std::llround(seg.duration / kSamplePeriod));
        if (frames < 10) {
            std::ostringstream msg;
            msg << "segment " << k << " spans " << frames << " samples (< 10)";
            throw Error(ErrorKind::Resolution, msg.str());
        }
        seg.duration = static_cast<double>(frames) * kSamplePeriod;
        segment_offset_.push_back(total);
        segment_frames_.push_back(static_cast<int>(frames));
        total += static_cast<int>(frames);
    }

    frames_.resize(total, ne);
    for (std::size_t k = 0; k < segments_.size(); ++k) {
        const auto &seg = segments_[k];
        int nk = segment_frames_[k];
        for (int j = 0; j < nk; ++j) {
            double u = static_cast<double>(j + 1) / nk;
            double p = seg.first_keyframe + u * (seg.last_keyframe - seg.first_keyframe);
            frames_.row(segment_offset_[k] + j) = path_voltages(p).transpose();
        }
    }
    for (Eigen::Index n = 0; n < frames_.rows(); ++n) {
        double peak = frames_.row(n).cwiseAbs().maxCoeff();
        if (peak > kMaxElectrodeVoltage) {
            std::ostringstream msg;
            msg << "frame " << n << " reaches " << peak << " V";
            throw Error(ErrorKind::ClampViolation, msg.str());
        }
    }
}

void Waveform::filter() {
    effective_.resize(frames_.rows(), frames_.cols());
    if (filter_tau_ == 0.0) {
        effective_ = frames_;
        return;
    }
    double decay = std::exp(-kSamplePeriod / filter_tau_);
    Eigen::RowVectorXd y = path_voltages(segments_.front().first_keyframe).transpose();
    for (Eigen::Index n = 0; n < frames_.rows(); ++n) {
        y = frames_.row(n) + (y - frames_.row(n)) * decay;
        effective_.row(n) = y;
    }
}

Voltages Waveform::effective_at(double t) const {
    auto idx = std::llround(t / kSamplePeriod);
    if (idx <= 0) return path_voltages(segments_.front().first_keyframe);
    auto n = static_cast<Eigen::Index>(idx);
    if (n <= frames_.rows()) return effective_.row(n - 1).transpose();
    Voltages last = frames_.row(frames_.rows() - 1).transpose();
    Voltages y = effective_.row(frames_.rows() - 1).transpose();
    if (filter_tau_ == 0.0) return last;
    double decay = std::exp(-(t - duration()) / filter_tau_);
    return last + (y - last) * decay;
}

int Waveform::segment_frames(std::size_t k) const {
    return segment_frames_.at(k);
}

double Waveform::segment_start(std::size_t k) const {
    return segment_offset_.at(k) * kSamplePeriod;
}

double Waveform::segment_end(std::size_t k) const {
    return (segment_offset_.at(k) + segment_frames_.at(k)) * kSamplePeriod;
}

double Waveform::path_index(double x) const {
    std::vector<double> pos, idx;
    for (std::size_t i = 0; i < keyframes_.size(); ++i) {
        pos.push_back(keyframes_[i].position);
        idx.push_back(static_cast<double>(i));
    }
    if (pos.back() < pos.front()) {
        std::reverse(pos.begin(), pos.end());
        std::reverse(idx.begin(), idx.end());
    }
    if (pos.front() == pos.back()) return 0.0;
    return interp_linear(pos, idx, x);
}

double Waveform::nominal_position(double t) const {
    double p;
    if (t <= 0.0) {
        p = segments_.front().first_keyframe;
    } else if (t >= duration()) {
        p = segments_.back().last_keyframe;
    } else {
        std::size_t k = 0;
        while (k + 1 < segments_.size() && t >= segment_end(k)) ++k;
        double u = (t - segment_start(k)) / (segment_end(k) - segment_start(k));
        p = segments_[k].first_keyframe + u * (segments_[k].last_keyframe - segments_[k].first_keyframe);
    }
    int i = std::clamp(static_cast<int>(std::floor(p)), 0, static_cast<int>(keyframes_.size()) - 2);
    double w = p - i;
    return keyframes_[i].position + w * (keyframes_[i + 1].position - keyframes_[i].position);
}

double Waveform::scale_at(double x) const {
    double s = 1.0;
    for (const auto &profile : scales_) s *= profile.at(x);
    return s;
}

Voltages Waveform::path_voltages(double p) const {
    int i = std::clamp(static_cast<int>(std::floor(p)), 0, static_cast<int>(keyframes_.size()) - 2);
    double w = std::clamp(p - i, 0.0, 1.0);
    const auto &a = keyframes_[i];
    const auto &b = keyframes_[i + 1];
    double x = a.position + w * (b.position - a.position);
    return ((1.0 - w) * a.voltages + w * b.voltages) * scale_at(x);
}

std::vector<Segment> uniform_segments(int keyframes, int segments, double total_duration) {
    if (segments < 1 || keyframes < 2 || (keyframes - 1) % segments != 0) {
        throw Error(ErrorKind::InvalidArgument,
                    "keyframe intervals must divide evenly into the segments");
    }
    if (!(total_duration > 0.0)) {
        throw Error(ErrorKind::InvalidArgument, "waveform duration must be > 0");
    }
    int per = (keyframes - 1) / segments;
    std::vector<Segment> out;
    for (int k = 0; k < segments; ++k) {
        out.push_back({k * per, (k + 1) * per, total_duration / segments});
    }
    return out;
}

Waveform synthesize_waveform(const TrapModel &trap, std::vector<Keyframe> keyframes,
                             double total_duration, int segments) {
    if (keyframes.size() < 2) {
        throw Error(ErrorKind::InvalidArgument, "a waveform needs at least two keyframes");
    }
    auto segs = uniform_segments(static_cast<int>(keyframes.size()), segments, total_duration);
    Waveform wf(std::move(keyframes), std::move(segs), {}, trap.imperfections().filter_tau);
    // Equal split is exact only when the duration is a whole number of samples.
    double frames = total_duration / kSamplePeriod;
    if (std::abs(frames - std::round(frames)) > 1e-6 ||
        std::abs(wf.duration() - total_duration) > 0.5 * kSamplePeriod) {
        throw Error(ErrorKind::Resolution,
                    "duration must split into a whole number of 5 ns samples per segment");
    }
    return wf;
}

Waveform apply_confinement_scaling(const Waveform &wf, const ScaleProfile &profile) {
    check_scale(profile);
    auto scales = wf.scales();
    scales.push_back(profile);
    return Waveform(wf.keyframes(), wf.segments(), std::move(scales), wf.filter_tau());
}

Waveform retime_segments(const Waveform &wf, const std::vector<double> &factors) {
    if (factors.size() != wf.segments().size()) {
        throw Error(ErrorKind::InvalidArgument, "one stretch factor per segment is required");
    }
    auto segs = wf.segments();
    for (std::size_t k = 0; k < segs.size(); ++k) {
        if (!(factors[k] > 0.0) || !std::isfinite(factors[k])) {
            throw Error(ErrorKind::InvalidArgument, "stretch factors must be finite and > 0");
        }
        segs[k].duration *= factors[k];
    }
    return Waveform(wf.keyframes(), std::move(segs), wf.scales(), wf.filter_tau());
}

// ---------------------------------------------------------------------------
// Trajectory

double ion_spacing(double omega_com, double mass) {
    if (!(omega_com > 0.0)) throw Error(ErrorKind::InvalidArgument, "frequency must be > 0");
    double e2 = units::elementary_charge * units::elementary_charge;
    double d3 = e2 / (units::two_pi * units::vacuum_permittivity * mass * omega_com * omega_com);
    return std::cbrt(d3) * 1e6;
}

std::vector<double> Trajectory::omega_bm() const {
    std::vector<double> out(omega_com.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::sqrt(3.0) * omega_com[i];
    return out;
}

std::vector<double> Trajectory::ion_spacing(double mass) const {
    std::vector<double> out(omega_com.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = tgate::ion_spacing(omega_com[i], mass);
    return out;
}

WellPoint locate_well(const TrapModel &trap, const Voltages &v, double guess, PotentialModel model) {
    double x = guess;
    for (int it = 0; it < 100; ++it) {
        double slope = trap.potential(v, x, 1, model);
        double curv = trap.potential(v, x, 2, model);
        if (!(curv > 0.0)) {
            std::ostringstream msg;
            msg << "no confining well near x = " << x << " um (curvature " << curv << ")";
            throw Error(ErrorKind::TrajectoryFailure, msg.str());
        }
        double step = std::clamp(-slope / curv, -5.0, 5.0);
        x += step;
        if (std::abs(step) < 1e-10) {
            return {x, trap.omega_from_curvature(trap.potential(v, x, 2, model))};
        }
    }
    throw Error(ErrorKind::TrajectoryFailure, "well minimization did not converge");
}

Trajectory extract_trajectory(const TrapModel &trap, const Waveform &wf,
                              const TrajectoryOptions &options) {
    if (options.stride < 1 || !(options.post_hold >= 0.0)) {
        throw Error(ErrorKind::InvalidArgument, "invalid trajectory sampling options");
    }
    if (wf.electrodes() != trap.electrodes()) {
        throw Error(ErrorKind::InvalidArgument, "waveform and trap differ in electrode count");
    }
    auto hold_frames = static_cast<long long>(std::llround(options.post_hold / kSamplePeriod));
    long long last = (wf.frame_count() + hold_frames) / options.stride;
    Trajectory traj;
    double guess = wf.nominal_position(0.0);
    for (long long j = 0; j <= last; ++j) {
        double t = static_cast<double>(j * options.stride) * kSamplePeriod;
        Voltages v = wf.effective_at(t);
        WellPoint w;
        try {
            w = locate_well(trap, v, guess, PotentialModel::Perturbed);
        } catch (const Error &e) {
            std::ostringstream msg;
            msg << "frame " << j * options.stride << ": " << e.what();
            throw Error(ErrorKind::TrajectoryFailure, msg.str());
        }
        guess = w.position;
        traj.time.push_back(t);
        traj.position.push_back(w.position);
        traj.omega_com.push_back(w.omega);
    }
    std::size_t n = traj.time.size();
    traj.velocity.assign(n, 0.0);
    if (n >= 2) {
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t a = i == 0 ? 0 : i - 1;
            std::size_t b = i + 1 == n ? n - 1 : i + 1;
            traj.velocity[i] =
                (traj.position[b] - traj.position[a]) * 1e-6 / (traj.time[b] - traj.time[a]);
        }
    }
    return traj;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

std::string shortest(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string &s) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw Error(ErrorKind::InvalidArgument, "malformed number '" + s + "' in waveform file");
    }
    return v;
}

class Reader {
public:
    explicit Reader(std::istream &in) : in_(in) {
    }
    std::string word() {
        std::string w;
        if (!(in_ >> w)) throw Error(ErrorKind::InvalidArgument, "truncated waveform file");
        return w;
    }
    void expect(const std::string &tag) {
        auto w = word();
        if (w != tag) {
            throw Error(ErrorKind::InvalidArgument, "expected '" + tag + "' but found '" + w + "'");
        }
    }
    double number() {
        return parse_double(word());
    }
    long long integer() {
        auto w = word();
        long long v = 0;
        auto res = std::from_chars(w.data(), w.data() + w.size(), v);
        if (res.ec != std::errc() || res.ptr != w.data() + w.size() || v < 0) {
            throw Error(ErrorKind::InvalidArgument, "malformed count '" + w + "' in waveform file");
        }
        return v;
    }

private:
    std::istream &in_;
};

constexpr const char *kMagic = "tgate-waveform";
constexpr int kVersion = 1;

}  // namespace

void write_waveform(std::ostream &out, const Waveform &wf) {
    out << kMagic << ' ' << kVersion << '\n';
    out << "sample_period_s " << shortest(wf.sample_period()) << '\n';
    out << "filter_tau_s " << shortest(wf.filter_tau()) << '\n';
    out << "electrodes " << wf.electrodes() << '\n';
    out << "keyframes " << wf.keyframes().size() << '\n';
    for (const auto &kf : wf.keyframes()) {
        out << shortest(kf.position);
        for (Eigen::Index i = 0; i < kf.voltages.size(); ++i) out << ' ' << shortest(kf.voltages[i]);
        out << '\n';
    }
    out << "segments " << wf.segments().size() << '\n';
    for (const auto &s : wf.segments()) {
        out << s.first_keyframe << ' ' << s.last_keyframe << ' ' << shortest(s.duration) << '\n';
    }
    out << "scales " << wf.scales().size() << '\n';
    for (const auto &p : wf.scales()) {
        out << p.positions.size() << '\n';
        for (std::size_t i = 0; i < p.positions.size(); ++i) {
            out << shortest(p.positions[i]) << ' ' << shortest(p.factors[i]) << '\n';
        }
    }
    out << "frames " << wf.frame_count() << '\n';
    out << "# time_s";
    for (int e = 0; e < wf.electrodes(); ++e) out << " v" << e << "_V";
    out << '\n';
    const auto &f = wf.frames();
    for (Eigen::Index n = 0; n < f.rows(); ++n) {
        out << shortest(static_cast<double>(n) * wf.sample_period());
        for (Eigen::Index e = 0; e < f.cols(); ++e) out << ' ' << shortest(f(n, e));
        out << '\n';
    }
}

Waveform read_waveform(std::istream &in) {
    Reader r(in);
    r.expect(kMagic);
    if (r.integer() != kVersion) {
        throw Error(ErrorKind::InvalidArgument, "unsupported waveform file version");
    }
    r.expect("sample_period_s");
    if (r.number() != kSamplePeriod) {
        throw Error(ErrorKind::InvalidArgument, "waveform sample period differs from 5 ns");
    }
    r.expect("filter_tau_s");
    double tau = r.number();
    r.expect("electrodes");
    auto ne = static_cast<Eigen::Index>(r.integer());
    r.expect("keyframes");
    auto nk = r.integer();
    std::vector<Keyframe> kfs(static_cast<std::size_t>(nk));
    for (auto &kf : kfs) {
        kf.position = r.number();
        kf.voltages.resize(ne);
        for (Eigen::Index i = 0; i < ne; ++i) kf.voltages[i] = r.number();
    }
    r.expect("segments");
    auto ns = r.integer();
    std::vector<Segment> segs(static_cast<std::size_t>(ns));
    for (auto &s : segs) {
        s.first_keyframe = static_cast<int>(r.integer());
        s.last_keyframe = static_cast<int>(r.integer());
        s.duration = r.number();
    }
    r.expect("scales");
    auto np = r.integer();
    std::vector<ScaleProfile> scales(static_cast<std::size_t>(np));
    for (auto &p : scales) {
        auto m = r.integer();
        for (long long i = 0; i < m; ++i) {
            p.positions.push_back(r.number());
            p.factors.push_back(r.number());
        }
    }
    r.expect("frames");
    auto nf = static_cast<Eigen::Index>(r.integer());
    r.expect("#");
    r.expect("time_s");
    for (Eigen::Index e = 0; e < ne; ++e) r.expect("v" + std::to_string(e) + "_V");
    Eigen::MatrixXd frames(nf, ne);
    for (Eigen::Index n = 0; n < nf; ++n) {
        r.number();
        for (Eigen::Index e = 0; e < ne; ++e) frames(n, e) = r.number();
    }
    return Waveform::from_frames(std::move(kfs), std::move(segs), std::move(scales), tau,
                                 std::move(frames));
}

void save_waveform(const std::string &path, const Waveform &wf) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::InvalidArgument, "cannot write " + path);
    write_waveform(out, wf);
    if (!out) throw Error(ErrorKind::InvalidArgument, "write to " + path + " failed");
}

Waveform load_waveform(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::InvalidArgument, "cannot open " + path);
    return read_waveform(in);
}

}  // namespace tgate
