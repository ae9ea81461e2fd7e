#pragma once

// Topology generators: regular rings, planar grids with a coupling radius,
// and Barabasi-Albert scale-free graphs.

#include "syncnet/graph.hpp"
#include "syncnet/numeric.hpp"
#include "syncnet/topology.hpp"

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <vector>

namespace syncnet {

/// Regular ring of n nodes where node i is linked to i+-1, ..., i+-d/2
/// (mod n) with unit weights. d must be even and smaller than n.
inline Topology gen_ring(int n, int d) {
    if (n < 2) throw std::invalid_argument("gen_ring: n must be >= 2");
    if (d < 2 || d % 2 != 0) throw std::invalid_argument("gen_ring: d must be even and >= 2");
    if (d >= n) throw std::invalid_argument("gen_ring: d must be < n");
    std::vector<Edge> edges;
    edges.reserve(static_cast<std::size_t>(n) * d / 2);
    for (int i = 0; i < n; ++i) {
        for (int k = 1; k <= d / 2; ++k) {
            edges.push_back({i, (i + k) % n, 1.0});
        }
    }
    return make_topology(n, std::move(edges));
}

/// Closed form for the algebraic connectivity of gen_ring(n, d).
inline double ring_lambda2_formula(int n, int d) {
    double sum = 0.0;
    for (int i = 1; i <= d / 2; ++i) {
        const double s = std::sin(std::numbers::pi * i / n);
        sum += s * s;
    }
    return 4.0 * sum;
}

/// Nodes on a rows x cols integer grid, unit-weight edges between pairs at
/// Euclidean distance <= radius. Node id = row * cols + col. A radius in
/// [2, sqrt(5)) gives the 12-neighbor interior degree used by the clustering
/// experiments. Throws if the radius leaves the grid disconnected.
inline Topology gen_grid(int rows, int cols, double radius) {
    if (rows < 2 || cols < 2) throw std::invalid_argument("gen_grid: rows and cols must be >= 2");
    if (!(radius > 0.0)) throw std::invalid_argument("gen_grid: radius must be positive");
    const double r2 = radius * radius;
    const int reach = static_cast<int>(std::floor(radius));
    std::vector<Edge> edges;
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            const int id = r * cols + c;
            for (int dr = 0; dr <= reach; ++dr) {
                for (int dc = -reach; dc <= reach; ++dc) {
                    if (dr == 0 && dc <= 0) continue;  // one direction per pair
                    if (dr * dr + dc * dc > r2) continue;
                    const int rr = r + dr, cc = c + dc;
                    if (rr < 0 || rr >= rows || cc < 0 || cc >= cols) continue;
                    edges.push_back({id, rr * cols + cc, 1.0});
                }
            }
        }
    }
    Topology t = make_topology(rows * cols, std::move(edges));
    if (!is_connected(t))
        throw std::invalid_argument("gen_grid: radius produces a disconnected graph");
    return t;
}

/// Barabasi-Albert preferential attachment: complete seed graph on m0 nodes,
/// then each new node attaches to m distinct existing nodes sampled with
/// probability proportional to current degree. Deterministic given seed.
inline Topology gen_scale_free(int n, int m0, int m, std::uint64_t seed) {
    if (m < 1) throw std::invalid_argument("gen_scale_free: m must be >= 1");
    if (m0 < m) throw std::invalid_argument("gen_scale_free: need m <= m0");
    if (m0 < 2) throw std::invalid_argument("gen_scale_free: m0 must be >= 2");
    if (n < m0) throw std::invalid_argument("gen_scale_free: need n >= m0");

    std::vector<Edge> edges;
    // Every node id appears once per unit of degree; uniform draws from this
    // list realize degree-proportional sampling.
    std::vector<int> chances;
    for (int i = 0; i < m0; ++i) {
        for (int j = i + 1; j < m0; ++j) {
            edges.push_back({i, j, 1.0});
            chances.push_back(i);
            chances.push_back(j);
        }
    }

    auto rng = substream(seed, stream_tag::graph);
    std::vector<char> taken(n, 0);
    for (int v = m0; v < n; ++v) {
        std::vector<int> targets;
        while (static_cast<int>(targets.size()) < m) {
            std::uniform_int_distribution<std::size_t> pick(0, chances.size() - 1);
            const int candidate = chances[pick(rng)];
            if (taken[candidate]) continue;  // without replacement per new node
            taken[candidate] = 1;
            targets.push_back(candidate);
        }
        for (int u : targets) {
            taken[u] = 0;
            edges.push_back({u, v, 1.0});
            chances.push_back(u);
            chances.push_back(v);
        }
    }
    return make_topology(n, std::move(edges));
}

}  // namespace syncnet
