// Experiment configuration for the tgate command-line tool.
#ifndef TGATE_TOOLS_CONFIG_HPP
#define TGATE_TOOLS_CONFIG_HPP

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tgate/pipeline.hpp"

namespace tgate::cli {

/// Inclusive grid in kHz as written in the file.
struct GridSpec {
    double start_khz = 0.0;
    double stop_khz = 0.0;
    double step_khz = 1.0;

    std::vector<double> values() const;  // rad/s
};

enum class ScanKind { ModeDetuning, GlobalDetuning };

struct ScanSpec {
    ScanKind kind = ScanKind::ModeDetuning;
    GateMode mode = GateMode::Stationary;
    GridSpec grid{-35.0, 35.0, 0.5};
    /// Constant light shift left uncompensated during the scan.
    double residual_stark_hz = 0.0;
};

struct ExperimentConfig {
    PipelineConfig pipeline;
    GridSpec stationary_delta_m;
    GridSpec static_delta_m;
    GridSpec static_delta_g;
    GridSpec dynamic_delta_m;
    /// 0 derives the peak Rabi frequency from the analytic gate condition.
    double peak_rabi_khz = 0.0;
    int loops = 2;
    ScanSpec scan;
    std::string waveform_path;  // transport gates: empty builds the waveform
};

ExperimentConfig default_config();

/// Strict parse: every key must be known, every value of the right type.
/// Missing keys keep their defaults. Throws Error(Config).
ExperimentConfig parse_config(const nlohmann::json &doc);
ExperimentConfig load_config(const std::string &path);

/// Complete, canonical form of the configuration (all keys, fixed order).
nlohmann::json to_json(const ExperimentConfig &config);

/// FNV-1a of the canonical JSON text, as 16 hex digits.
std::string config_hash(const ExperimentConfig &config);

/// Fills derived fields (grids, peak Rabi frequency) and validates.
void finalize(ExperimentConfig &config);

std::string to_string(ScanKind kind);

}  // namespace tgate::cli

#endif  // TGATE_TOOLS_CONFIG_HPP
