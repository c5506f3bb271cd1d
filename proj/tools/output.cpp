#include "output.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "tgate/error.hpp"
#include "tgate/numerics.hpp"

namespace tgate::cli {

namespace {

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string join(const std::vector<std::string> &cells) {
    std::string out;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) out += ',';
        out += cells[i];
    }
    return out;
}

void write_file(const std::filesystem::path &p, const std::string &text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
    if (!out) throw Error(ErrorKind::InvalidArgument, "cannot write " + p.string());
}

std::string read_file(const std::filesystem::path &p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

std::string format_number(double v) {
    if (v == 0.0) return "0";  // folds -0
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

Table::Table(std::string title, std::vector<std::string> columns)
    : title_(std::move(title)), columns_(std::move(columns)) {
}

void Table::add(const std::vector<double> &row) {
    std::vector<std::string> cells;
    cells.reserve(row.size());
    for (double v : row) cells.push_back(format_number(v));
    add_cells(cells);
}

void Table::add_cells(const std::vector<std::string> &row) {
    if (row.size() != columns_.size()) {
        throw Error(ErrorKind::InvalidArgument, "row width does not match table " + title_);
    }
    rows_.push_back(join(row));
}

std::string Table::render(const std::string &config_hash, std::uint64_t seed) const {
    std::string out = "# " + title_ + "; config_hash=" + config_hash + "; seed=" + std::to_string(seed) + "\n";
    out += join(columns_) + "\n";
    for (const auto &r : rows_) out += r + "\n";
    return out;
}

OutputDir::OutputDir(std::filesystem::path dir, std::string command, std::string config_hash,
                     std::uint64_t seed)
    : dir_(std::move(dir)), command_(std::move(command)), hash_(std::move(config_hash)), seed_(seed) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) throw Error(ErrorKind::InvalidArgument, "cannot create output directory " + dir_.string());
}

void OutputDir::write_table(const std::string &name, const Table &table) {
    write_text(name, table.render(hash_, seed_));
}

void OutputDir::write_json(const std::string &name, const nlohmann::json &doc) {
    write_text(name, doc.dump(2) + "\n");
}

void OutputDir::write_text(const std::string &name, const std::string &text) {
    write_file(dir_ / name, text);
    outputs_.push_back({{"file", name}, {"fnv1a64", hex64(fnv1a64(text))}});
}

void OutputDir::record(const std::string &name) {
    outputs_.push_back({{"file", name}, {"fnv1a64", hex64(fnv1a64(read_file(dir_ / name)))}});
}

void OutputDir::write_manifest(const nlohmann::json &config, const nlohmann::json &summary) {
    nlohmann::json m = {{"tool", "tgate"},
                        {"command", command_},
                        {"config_hash", hash_},
                        {"seed", seed_},
                        {"config", config},
                        {"summary", summary},
                        {"outputs", outputs_}};
    write_file(dir_ / "manifest.json", m.dump(2) + "\n");
}

}  // namespace tgate::cli
