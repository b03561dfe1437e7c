#ifndef LLMO_TRACE_HPP
#define LLMO_TRACE_HPP

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "llmo/errors.hpp"
#include "llmo/optimizer.hpp"

namespace llmo {

// FNV-1a over the canonical config text. Sixteen hex digits tag every
// artifact so files from different configurations can never be mixed
// silently.
inline std::uint64_t fnv1a64(const std::string& text) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string hash_hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

// Shortest round-trip-exact decimal for a double.
inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
}

// Writes via a sibling temp file and a rename, so readers never observe a
// half-written artifact and crashed runs leave the previous version intact.
inline void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw StructuralError("cannot open " + tmp.string() + " for writing");
        out << text;
        if (!out.flush()) throw StructuralError("short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw StructuralError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline const char* kTraceHeader = "t,best_reward,mean_reward,violation,failures";
inline const char* kHashPrefix = "# config_hash=";

inline std::string trace_to_csv(const std::vector<IterationRecord>& trace,
                                const std::string& hash) {
    std::string out = std::string(kHashPrefix) + hash + "\n" + kTraceHeader + "\n";
    for (const IterationRecord& r : trace) {
        out += std::to_string(r.t) + "," + format_double(r.best_reward) + "," +
               format_double(r.mean_reward) + "," + format_double(r.violation) + "," +
               std::to_string(r.failed_agents) + "\n";
    }
    return out;
}

namespace detail {

inline std::vector<std::string> split_on_commas(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            cells.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    cells.push_back(cur);
    return cells;
}

inline double parse_double_cell(const std::string& cell, std::size_t line_no) {
    char* end = nullptr;
    const double v = std::strtod(cell.c_str(), &end);
    if (end == cell.c_str() || *end != '\0')
        throw FormatError("bad numeric cell '" + cell + "' on line " + std::to_string(line_no));
    return v;
}

}  // namespace detail

struct TraceFile {
    std::string config_hash;
    std::vector<IterationRecord> records;
};

inline TraceFile trace_from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    TraceFile out;
    std::size_t line_no = 0;
    if (!std::getline(in, line) || line.rfind(kHashPrefix, 0) != 0)
        throw FormatError("trace file does not start with a config hash line");
    out.config_hash = line.substr(std::string(kHashPrefix).size());
    ++line_no;
    if (!std::getline(in, line) || line != kTraceHeader)
        throw FormatError("trace file header mismatch");
    ++line_no;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto cells = detail::split_on_commas(line);
        if (cells.size() != 5)
            throw ShapeError("trace row on line " + std::to_string(line_no) + " has " +
                             std::to_string(cells.size()) + " cells, expected 5");
        IterationRecord r;
        r.t = static_cast<std::size_t>(detail::parse_double_cell(cells[0], line_no));
        r.best_reward = detail::parse_double_cell(cells[1], line_no);
        r.mean_reward = detail::parse_double_cell(cells[2], line_no);
        r.violation = detail::parse_double_cell(cells[3], line_no);
        r.failed_agents = static_cast<std::size_t>(detail::parse_double_cell(cells[4], line_no));
        out.records.push_back(r);
    }
    return out;
}

inline void write_trace_csv(const std::filesystem::path& path,
                            const std::vector<IterationRecord>& trace,
                            const std::string& hash) {
    write_text_atomic(path, trace_to_csv(trace, hash));
}

inline TraceFile read_trace_csv(const std::filesystem::path& path) {
    return trace_from_csv(read_text(path));
}

// Plain numeric table with the same hash discipline as traces. The first
// column is conventionally the abscissa (t or L).
struct CsvTable {
    std::string header;                     // comma-joined column names
    std::vector<std::vector<double>> rows;  // uniform width
};

inline std::string table_to_csv(const CsvTable& table, const std::string& hash) {
    std::string out = std::string(kHashPrefix) + hash + "\n" + table.header + "\n";
    for (const auto& row : table.rows) {
        for (std::size_t i = 0; i < row.size(); ++i)
            out += (i ? "," : "") + format_double(row[i]);
        out += "\n";
    }
    return out;
}

inline void write_table_csv(const std::filesystem::path& path, const CsvTable& table,
                            const std::string& hash) {
    write_text_atomic(path, table_to_csv(table, hash));
}

}  // namespace llmo

#endif
