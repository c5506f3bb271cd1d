// Table and manifest writers. Everything is formatted without locale or
// clock dependence so that repeated runs produce identical bytes.
#ifndef TGATE_TOOLS_OUTPUT_HPP
#define TGATE_TOOLS_OUTPUT_HPP

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace tgate::cli {

/// Comma-separated table. The first line is a comment naming the table,
/// the config hash and the seed; the second holds the column names with
/// units.
class Table {
public:
    Table(std::string title, std::vector<std::string> columns);

    /// Numbers are written with 10 significant digits.
    void add(const std::vector<double> &row);
    /// Mixed row: pre-formatted cells.
    void add_cells(const std::vector<std::string> &row);

    std::string render(const std::string &config_hash, std::uint64_t seed) const;

private:
    std::string title_;
    std::vector<std::string> columns_;
    std::vector<std::string> rows_;
};

std::string format_number(double v);

/// Collects the files of one invocation and writes manifest.json last.
class OutputDir {
public:
    OutputDir(std::filesystem::path dir, std::string command, std::string config_hash,
              std::uint64_t seed);

    void write_table(const std::string &name, const Table &table);
    void write_json(const std::string &name, const nlohmann::json &doc);
    void write_text(const std::string &name, const std::string &text);
    /// Records a file written by someone else (e.g. the waveform writer).
    void record(const std::string &name);

    std::filesystem::path path(const std::string &name) const {
        return dir_ / name;
    }
    void write_manifest(const nlohmann::json &config, const nlohmann::json &summary);

private:
    std::filesystem::path dir_;
    std::string command_;
    std::string hash_;
    std::uint64_t seed_;
    nlohmann::json outputs_ = nlohmann::json::array();
};

}  // namespace tgate::cli

#endif  // TGATE_TOOLS_OUTPUT_HPP
