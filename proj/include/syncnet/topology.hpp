#pragma once

// Undirected weighted communication graphs as explicit edge lists, plus the
// plain-text serialization used by the CLI.

#include <Eigen/Dense>

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace syncnet {

struct Edge {
    int i = 0;
    int j = 0;
    double weight = 1.0;
};

/// Undirected weighted graph. Edges are normalized to i < j and sorted
/// lexicographically; the resulting edge order fixes the column indexing of
/// the incidence matrix and of the edge-weight diagonal.
struct Topology {
    int node_count = 0;
    std::vector<Edge> edges;

    int edge_count() const { return static_cast<int>(edges.size()); }
};

inline void validate(const Topology& t) {
    if (t.node_count <= 0)
        throw std::invalid_argument("topology: node_count must be positive");
    for (const Edge& e : t.edges) {
        if (e.i < 0 || e.j < 0 || e.i >= t.node_count || e.j >= t.node_count)
            throw std::invalid_argument("topology: edge endpoint out of range");
        if (e.i == e.j)
            throw std::invalid_argument("topology: self-loops are not allowed");
        if (e.i > e.j)
            throw std::invalid_argument("topology: edges must satisfy i < j");
        if (!(e.weight > 0.0))
            throw std::invalid_argument("topology: edge weights must be positive");
    }
    for (std::size_t k = 1; k < t.edges.size(); ++k) {
        if (t.edges[k - 1].i == t.edges[k].i && t.edges[k - 1].j == t.edges[k].j)
            throw std::invalid_argument("topology: duplicate edge");
    }
}

/// Normalizes endpoint order, sorts the edge list, and validates.
inline Topology make_topology(int node_count, std::vector<Edge> edges) {
    for (Edge& e : edges) {
        if (e.i > e.j) std::swap(e.i, e.j);
    }
    std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
        return a.i != b.i ? a.i < b.i : a.j < b.j;
    });
    Topology t{node_count, std::move(edges)};
    validate(t);
    return t;
}

/// Sum of incident edge weights per node.
inline Eigen::VectorXd weighted_degrees(const Topology& t) {
    Eigen::VectorXd deg = Eigen::VectorXd::Zero(t.node_count);
    for (const Edge& e : t.edges) {
        deg[e.i] += e.weight;
        deg[e.j] += e.weight;
    }
    return deg;
}

inline std::vector<std::vector<int>> neighbor_lists(const Topology& t) {
    std::vector<std::vector<int>> nbrs(t.node_count);
    for (const Edge& e : t.edges) {
        nbrs[e.i].push_back(e.j);
        nbrs[e.j].push_back(e.i);
    }
    return nbrs;
}

/// Edge-list text format: header `N E`, then one `i j weight` line per edge.
inline void save_topology(const Topology& t, std::ostream& out) {
    validate(t);
    out << t.node_count << ' ' << t.edge_count() << '\n';
    char buf[64];
    for (const Edge& e : t.edges) {
        std::snprintf(buf, sizeof(buf), "%.17g", e.weight);
        out << e.i << ' ' << e.j << ' ' << buf << '\n';
    }
}

inline Topology load_topology(std::istream& in) {
    int n = 0, m = 0;
    if (!(in >> n >> m)) throw std::runtime_error("topology file: malformed header");
    std::vector<Edge> edges;
    edges.reserve(static_cast<std::size_t>(std::max(m, 0)));
    for (int k = 0; k < m; ++k) {
        Edge e;
        if (!(in >> e.i >> e.j >> e.weight))
            throw std::runtime_error("topology file: malformed edge line");
        edges.push_back(e);
    }
    return make_topology(n, std::move(edges));
}

inline void save_topology_file(const Topology& t, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    save_topology(t, out);
}

inline Topology load_topology_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open for reading: " + path);
    return load_topology(in);
}

}  // namespace syncnet
