#include "tgate/measure.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "tgate/error.hpp"
#include "tgate/numerics.hpp"

namespace tgate {

Populations MeasurementRecord::populations() const {
    if (shots <= 0) return {};
    double n = static_cast<double>(shots);
    return {n0 / n, n1 / n, n2 / n};
}

Populations MeasurementRecord::uncertainty() const {
    if (shots <= 0) return {};
    double n = static_cast<double>(shots);
    auto wilson = [n](double k) {
        double p = k / n;
        const double z = 1.0;
        return z / (1.0 + z * z / n) * std::sqrt(p * (1.0 - p) / n + z * z / (4.0 * n * n));
    };
    return {wilson(static_cast<double>(n0)), wilson(static_cast<double>(n1)),
            wilson(static_cast<double>(n2))};
}

namespace {

void check_shots(long shots) {
    if (shots < 0) throw Error(ErrorKind::InvalidArgument, "shot count must be >= 0");
}

int draw_outcome(const Populations &p, double r) {
    if (r < p.p0) return 0;
    if (r < p.p0 + p.p1) return 1;
    return 2;
}

}  // namespace

MeasurementRecord sample_shots(const std::vector<QuantumState> &ensemble, long shots,
                               std::uint64_t seed) {
    check_shots(shots);
    if (ensemble.empty()) throw Error(ErrorKind::InvalidArgument, "empty state ensemble");
    std::vector<Populations> pops;
    pops.reserve(ensemble.size());
    for (const auto &s : ensemble) pops.push_back(populations(s));
    auto rng = stream_rng(seed, 0, 0x5a3d);
    std::uniform_int_distribution<std::size_t> member(0, ensemble.size() - 1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    MeasurementRecord rec;
    rec.shots = shots;
    for (long i = 0; i < shots; ++i) {
        const auto &p = pops[member(rng)];
        switch (draw_outcome(p, unit(rng))) {
            case 0:
                ++rec.n0;
                break;
            case 1:
                ++rec.n1;
                break;
            default:
                ++rec.n2;
        }
    }
    return rec;
}

MeasurementRecord sample_populations(const Populations &p, long shots, std::uint64_t seed) {
    check_shots(shots);
    auto rng = stream_rng(seed, 0, 0x7c11);
    MeasurementRecord rec;
    rec.shots = shots;
    if (shots == 0) return rec;
    double p2 = std::clamp(p.p2, 0.0, 1.0);
    std::binomial_distribution<long> bright2(shots, p2);
    rec.n2 = bright2(rng);
    double rest = 1.0 - p2;
    double q0 = rest > 0.0 ? std::clamp(p.p0 / rest, 0.0, 1.0) : 0.0;
    std::binomial_distribution<long> dark(shots - rec.n2, q0);
    rec.n0 = dark(rng);
    rec.n1 = shots - rec.n2 - rec.n0;
    return rec;
}

Populations rotated_populations(const QuantumState &state, double theta, double phi) {
    Eigen::Matrix2cd r;
    double c = std::cos(theta / 2), s = std::sin(theta / 2);
    r(0, 0) = c;
    r(1, 1) = c;
    r(1, 0) = cplx(0.0, -1.0) * s * std::polar(1.0, phi);
    r(0, 1) = cplx(0.0, -1.0) * s * std::polar(1.0, -phi);
    // Kronecker product in the |SS>, |SD>, |DS>, |DD> order.
    Eigen::Matrix4cd rr;
    for (int i1 = 0; i1 < 2; ++i1)
        for (int i2 = 0; i2 < 2; ++i2)
            for (int j1 = 0; j1 < 2; ++j1)
                for (int j2 = 0; j2 < 2; ++j2) rr(2 * i1 + i2, 2 * j1 + j2) = r(i1, j1) * r(i2, j2);
    Eigen::Matrix4cd rho = rr * reduced_spin_density(state) * rr.adjoint();
    double w[4];
    for (int b = 0; b < 4; ++b) w[b] = std::max(0.0, rho(b, b).real());
    double total = w[0] + w[1] + w[2] + w[3];
    return {w[3] / total, (w[1] + w[2]) / total, w[0] / total};
}

ParityFit parity_scan(const std::vector<Shot> &shots, const ParityOptions &options) {
    if (shots.empty()) throw Error(ErrorKind::InvalidArgument, "parity scan needs shots");
    if (options.phases < 3) {
        throw Error(ErrorKind::EstimationFailure, "parity fit needs at least 3 phases");
    }
    check_shots(options.shots_per_phase);
    ParityFit fit;
    const int n = options.phases;
    Eigen::MatrixXd design(n, 2);
    Eigen::VectorXd parity(n);
    double variance = 0.0;
    for (int j = 0; j < n; ++j) {
        double phi = units::pi * j / n;
        Populations avg;
        for (const auto &s : shots) {
            auto p = rotated_populations(s.state, units::pi / 2,
                                         phi - s.carrier_offset * options.analysis_time);
            avg.p0 += p.p0;
            avg.p1 += p.p1;
            avg.p2 += p.p2;
        }
        double m = static_cast<double>(shots.size());
        avg = {avg.p0 / m, avg.p1 / m, avg.p2 / m};
        ParityPoint pt;
        pt.phase = phi;
        pt.expected = avg;
        Populations used = avg;
        if (options.shots_per_phase > 0) {
            pt.record = sample_populations(avg, options.shots_per_phase,
                                           options.seed * 1000003ull + static_cast<std::uint64_t>(j));
            used = pt.record.populations();
        }
        pt.parity = used.p0 + used.p2 - used.p1;
        if (options.shots_per_phase > 0) {
            variance += (1.0 - pt.parity * pt.parity) / static_cast<double>(options.shots_per_phase);
        }
        design(j, 0) = std::cos(2.0 * phi);
        design(j, 1) = std::sin(2.0 * phi);
        parity[j] = pt.parity;
        fit.points.push_back(pt);
    }
    Eigen::Vector2d coef = design.colPivHouseholderQr().solve(parity);
    if (!coef.allFinite()) throw Error(ErrorKind::EstimationFailure, "parity fit diverged");
    fit.amplitude = std::clamp(std::hypot(coef[0], coef[1]), 0.0, 1.0);
    fit.phase_offset = std::atan2(-coef[1], coef[0]);
    // Evenly spaced phases: each quadrature has variance 2 sigma^2 / n.
    if (options.shots_per_phase > 0) {
        fit.amplitude_error = std::sqrt(2.0 * (variance / n) / n);
        fit.amplitude_error = std::max(fit.amplitude_error, 1e-12);
    }
    return fit;
}

FidelityEstimate bell_fidelity(const MeasurementRecord &record, double amplitude,
                               double amplitude_error) {
    if (!(amplitude >= 0.0 && amplitude <= 1.0)) {
        throw Error(ErrorKind::InvalidArgument, "parity amplitude must lie in [0, 1]");
    }
    if (record.shots <= 0) throw Error(ErrorKind::InvalidArgument, "record holds no shots");
    auto p = record.populations();
    FidelityEstimate f;
    f.p0 = p.p0;
    f.p2 = p.p2;
    double pe = p.p0 + p.p2;
    double n = static_cast<double>(record.shots);
    // Keep a non-zero width for all-even outcomes (rule-of-three style bound).
    f.population_error = std::max(std::sqrt(pe * (1.0 - pe) / n), 1.0 / n);
    f.parity_amplitude = amplitude;
    f.parity_error = amplitude_error;
    f.fidelity = std::clamp(0.5 * (pe + amplitude), 0.0, 1.0);
    f.fidelity_error = 0.5 * std::hypot(f.population_error, amplitude_error);
    return f;
}

Populations ScanPoint::measured() const {
    return record ? record->populations() : expected;
}

std::vector<double> ScanResult::values() const {
    std::vector<double> v;
    for (const auto &p : points) v.push_back(p.value);
    return v;
}

double ScanResult::argmin_p1() const {
    if (points.empty()) throw Error(ErrorKind::InvalidArgument, "empty scan");
    auto best = std::min_element(points.begin(), points.end(), [](const auto &a, const auto &b) {
        return a.measured().p1 < b.measured().p1;
    });
    return best->value;
}

std::vector<std::pair<double, double>> asymmetry_profile(const ScanResult &scan) {
    std::map<double, const ScanPoint *> negative, positive;
    double scale = 0.0;
    for (const auto &p : scan.points) scale = std::max(scale, std::abs(p.value));
    double tol = 1e-9 * std::max(scale, 1.0);
    auto key = [tol](double v) { return std::round(std::abs(v) / tol) * tol; };
    for (const auto &p : scan.points) {
        if (std::abs(p.value) <= tol) continue;
        (p.value < 0 ? negative : positive)[key(p.value)] = &p;
    }
    if (negative.size() != positive.size()) {
        throw Error(ErrorKind::InvalidArgument, "scan grid is not symmetric about zero");
    }
    std::vector<std::pair<double, double>> out;
    for (const auto &[k, pos] : positive) {
        auto it = negative.find(k);
        if (it == negative.end()) {
            throw Error(ErrorKind::InvalidArgument, "scan grid is not symmetric about zero");
        }
        auto a = pos->measured();
        auto b = it->second->measured();
        double d = (std::abs(a.p0 - b.p0) + std::abs(a.p1 - b.p1) + std::abs(a.p2 - b.p2)) / 3.0;
        out.emplace_back(std::abs(pos->value), d);
    }
    return out;
}

double asymmetry_metric(const ScanResult &scan, double max_abs) {
    auto prof = asymmetry_profile(scan);
    double sum = 0.0;
    int count = 0;
    for (const auto &[v, d] : prof) {
        if (max_abs > 0.0 && v > max_abs * (1.0 + 1e-12)) continue;
        sum += d;
        ++count;
    }
    if (count == 0) throw Error(ErrorKind::InvalidArgument, "no symmetric pairs in range");
    return sum / count;
}

}  // namespace tgate
