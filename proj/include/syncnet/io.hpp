#pragma once

// CSV serialization for trajectories and plain tables. Doubles are printed
// with 17 significant digits so emitted files parse back bit-exactly.

#include "syncnet/dynamics.hpp"

#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace syncnet {

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

/// Columns: t, theta_1..theta_N, dtheta_1..dtheta_N. In the vector case each
/// node contributes a node-major block of columns theta_<node>_<component>.
inline void write_trajectory_csv(const Trajectory& traj, std::ostream& out) {
    const int l = traj.block_size;
    const int n = static_cast<int>(traj.states.cols()) / l;
    out << 't';
    for (const char* prefix : {"theta", "dtheta"}) {
        for (int i = 1; i <= n; ++i) {
            if (l == 1) {
                out << ',' << prefix << '_' << i;
            } else {
                for (int k = 1; k <= l; ++k) out << ',' << prefix << '_' << i << '_' << k;
            }
        }
    }
    out << '\n';
    for (Eigen::Index s = 0; s < traj.times.size(); ++s) {
        out << format_double(traj.times[s]);
        for (Eigen::Index c = 0; c < traj.states.cols(); ++c)
            out << ',' << format_double(traj.states(s, c));
        for (Eigen::Index c = 0; c < traj.derivs.cols(); ++c)
            out << ',' << format_double(traj.derivs(s, c));
        out << '\n';
    }
}

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
};

inline void write_csv(const CsvTable& table, std::ostream& out) {
    for (std::size_t c = 0; c < table.header.size(); ++c) {
        if (c) out << ',';
        out << table.header[c];
    }
    out << '\n';
    for (const auto& row : table.rows) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (c) out << ',';
            out << format_double(row[c]);
        }
        out << '\n';
    }
}

inline CsvTable read_csv(std::istream& in) {
    CsvTable table;
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("csv: empty input");
    std::stringstream head(line);
    std::string cell;
    while (std::getline(head, cell, ',')) table.header.push_back(cell);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
        if (row.size() != table.header.size())
            throw std::runtime_error("csv: ragged row");
        table.rows.push_back(std::move(row));
    }
    return table;
}

inline void write_csv_file(const CsvTable& table, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    write_csv(table, out);
}

inline CsvTable read_csv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open for reading: " + path);
    return read_csv(in);
}

inline void write_trajectory_csv_file(const Trajectory& traj, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    write_trajectory_csv(traj, out);
}

}  // namespace syncnet
