#pragma once

// Spectral machinery on the communication graph: incidence matrix, weighted
// Laplacian, algebraic connectivity, connectivity checks, and the
// generalized (group) inverse built from the positive eigenpairs.

#include "syncnet/topology.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace syncnet {

/// Relative tolerance under which a Laplacian eigenvalue counts as zero.
inline double zero_eigenvalue_tolerance(double lambda_max) {
    return 1e-8 * std::max(1.0, lambda_max);
}

/// Oriented incidence matrix, N x E. Orientation rule: the lower-index
/// endpoint is the tail (-1), the higher-index endpoint the head (+1), so
/// column sums vanish exactly.
inline Eigen::MatrixXd incidence(const Topology& t) {
    validate(t);
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(t.node_count, t.edge_count());
    for (int e = 0; e < t.edge_count(); ++e) {
        b(t.edges[e].i, e) = -1.0;
        b(t.edges[e].j, e) = 1.0;
    }
    return b;
}

struct WeightedLaplacian {
    Eigen::MatrixXd matrix;        // N x N, symmetric PSD
    Eigen::VectorXd weight_vector; // E, positive, in edge order
};

/// Weighted Laplacian B D_w B^T assembled directly from the edge list; the
/// result does not depend on the edge orientation.
inline WeightedLaplacian weighted_laplacian(const Topology& t) {
    validate(t);
    WeightedLaplacian lap;
    lap.matrix = Eigen::MatrixXd::Zero(t.node_count, t.node_count);
    lap.weight_vector.resize(t.edge_count());
    for (int e = 0; e < t.edge_count(); ++e) {
        const Edge& ed = t.edges[e];
        lap.weight_vector[e] = ed.weight;
        lap.matrix(ed.i, ed.i) += ed.weight;
        lap.matrix(ed.j, ed.j) += ed.weight;
        lap.matrix(ed.i, ed.j) -= ed.weight;
        lap.matrix(ed.j, ed.i) -= ed.weight;
    }
    return lap;
}

inline Eigen::VectorXd laplacian_eigenvalues(const WeightedLaplacian& lap) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(lap.matrix,
                                                      Eigen::EigenvaluesOnly);
    return es.eigenvalues();  // ascending
}

/// Second-smallest Laplacian eigenvalue.
inline double algebraic_connectivity(const WeightedLaplacian& lap) {
    if (lap.matrix.rows() < 2)
        throw std::invalid_argument("algebraic_connectivity: need at least 2 nodes");
    return laplacian_eigenvalues(lap)[1];
}

inline double algebraic_connectivity(const Topology& t) {
    return algebraic_connectivity(weighted_laplacian(t));
}

/// Maximum weighted degree, max_i sum_j a_ij.
inline double max_degree(const Topology& t) {
    validate(t);
    const Eigen::VectorXd deg = weighted_degrees(t);
    return deg.size() ? deg.maxCoeff() : 0.0;
}

inline double min_degree(const Topology& t) {
    validate(t);
    const Eigen::VectorXd deg = weighted_degrees(t);
    return deg.size() ? deg.minCoeff() : 0.0;
}

inline int connected_component_count(const Topology& t) {
    validate(t);
    const auto nbrs = neighbor_lists(t);
    std::vector<int> label(t.node_count, -1);
    int components = 0;
    std::vector<int> stack;
    for (int start = 0; start < t.node_count; ++start) {
        if (label[start] >= 0) continue;
        label[start] = components;
        stack.assign(1, start);
        while (!stack.empty()) {
            const int u = stack.back();
            stack.pop_back();
            for (int v : nbrs[u]) {
                if (label[v] < 0) {
                    label[v] = components;
                    stack.push_back(v);
                }
            }
        }
        ++components;
    }
    return components;
}

inline bool is_connected(const Topology& t) {
    return connected_component_count(t) == 1;
}

/// Number of Laplacian eigenvalues below the zero tolerance; equals the
/// connected-component count for valid topologies.
inline int zero_eigenvalue_count(const WeightedLaplacian& lap) {
    const Eigen::VectorXd evals = laplacian_eigenvalues(lap);
    const double tol = zero_eigenvalue_tolerance(evals[evals.size() - 1]);
    int count = 0;
    for (Eigen::Index k = 0; k < evals.size(); ++k) {
        if (evals[k] < tol) ++count;
    }
    return count;
}

/// Generalized inverse assembled from the N-1 positive eigenpairs. Requires
/// a connected graph; satisfies L L+ L = L and L+ 1 = 0.
inline Eigen::MatrixXd generalized_inverse(const WeightedLaplacian& lap) {
    const Eigen::Index n = lap.matrix.rows();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(lap.matrix);
    const Eigen::VectorXd& evals = es.eigenvalues();
    const double tol = zero_eigenvalue_tolerance(evals[n - 1]);
    Eigen::Index zeros = 0;
    while (zeros < n && evals[zeros] < tol) ++zeros;
    if (zeros != 1)
        throw std::invalid_argument(
            "generalized_inverse: graph is disconnected (Laplacian rank < N-1)");
    const Eigen::Index r = n - 1;
    const Eigen::MatrixXd u = es.eigenvectors().rightCols(r);
    return u * evals.tail(r).cwiseInverse().asDiagonal() * u.transpose();
}

inline Eigen::MatrixXd generalized_inverse(const Topology& t) {
    return generalized_inverse(weighted_laplacian(t));
}

/// Spectral lower bound 2 (1 - cos(pi/N)) * delta, with delta the minimum
/// weighted degree. Holds for the usual connected test graphs; graphs with a
/// narrow bottleneck can violate the min-degree form.
inline double fiedler_degree_bound(const Topology& t) {
    validate(t);
    if (t.node_count < 2) return 0.0;
    return 2.0 * (1.0 - std::cos(std::numbers::pi / t.node_count)) * min_degree(t);
}

}  // namespace syncnet
