#pragma once

// Linear-Gaussian observation models and their mapping onto network
// configurations whose synchronized state is the global ML estimate, plus
// the centralized oracles and the discrete average-consensus baseline.

#include "syncnet/dynamics.hpp"
#include "syncnet/graph.hpp"
#include "syncnet/numeric.hpp"
#include "syncnet/topology.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

namespace syncnet {

/// x_i = b_i xi + w_i with w_i ~ N(0, sigma2_i), independent across nodes.
struct ScalarObservationModel {
    Eigen::VectorXd b;
    Eigen::VectorXd sigma2;
    double xi = 0.0;
};

/// x_i = A_i xi + w_i with w_i ~ N(0, C_i); every A_i is M x L with full
/// column rank, every C_i symmetric positive definite.
struct VectorObservationModel {
    std::vector<Eigen::MatrixXd> a_blocks;
    std::vector<Eigen::MatrixXd> c_blocks;
    Eigen::VectorXd xi;
};

inline void validate(const ScalarObservationModel& m) {
    if (m.b.size() == 0 || m.b.size() != m.sigma2.size())
        throw std::invalid_argument("scalar model: b and sigma2 must be nonempty and equal sized");
    if ((m.b.array() == 0.0).any())
        throw std::invalid_argument("scalar model: gains b_i must be nonzero");
    if ((m.sigma2.array() <= 0.0).any())
        throw std::invalid_argument("scalar model: variances must be positive");
}

inline void validate(const VectorObservationModel& m) {
    if (m.a_blocks.empty() || m.a_blocks.size() != m.c_blocks.size())
        throw std::invalid_argument("vector model: need matching A and C blocks");
    const Eigen::Index l = m.xi.size();
    for (std::size_t i = 0; i < m.a_blocks.size(); ++i) {
        const auto& a = m.a_blocks[i];
        const auto& c = m.c_blocks[i];
        if (a.cols() != l) throw std::invalid_argument("vector model: A_i column count != L");
        if (a.rows() < l) throw std::invalid_argument("vector model: need M >= L");
        if (c.rows() != a.rows() || c.cols() != a.rows())
            throw std::invalid_argument("vector model: C_i must be M x M");
        if (!c.isApprox(c.transpose(), 1e-10))
            throw std::invalid_argument("vector model: C_i must be symmetric");
        if (Eigen::FullPivLU<Eigen::MatrixXd>(a).rank() < l)
            throw std::invalid_argument("vector model: A_i is rank deficient");
    }
}

/// Draws one observation per node, deterministic per (model, seed); the
/// per-node substream keeps draws stable when N changes.
inline Eigen::VectorXd draw_scalar(const ScalarObservationModel& m, std::uint64_t seed) {
    validate(m);
    Eigen::VectorXd x(m.b.size());
    std::normal_distribution<double> gauss;
    for (Eigen::Index i = 0; i < m.b.size(); ++i) {
        auto rng = substream(seed, stream_tag::observation, static_cast<std::uint32_t>(i));
        x[i] = m.b[i] * m.xi + std::sqrt(m.sigma2[i]) * gauss(rng);
    }
    return x;
}

inline std::vector<Eigen::VectorXd> draw_vector(const VectorObservationModel& m,
                                                std::uint64_t seed) {
    validate(m);
    std::vector<Eigen::VectorXd> x;
    x.reserve(m.a_blocks.size());
    std::normal_distribution<double> gauss;
    for (std::size_t i = 0; i < m.a_blocks.size(); ++i) {
        const Eigen::Index rows = m.a_blocks[i].rows();
        auto rng = substream(seed, stream_tag::observation, static_cast<std::uint32_t>(i));
        Eigen::VectorXd z(rows);
        for (Eigen::Index k = 0; k < rows; ++k) z[k] = gauss(rng);
        const Eigen::LLT<Eigen::MatrixXd> llt(m.c_blocks[i]);
        if (llt.info() != Eigen::Success)
            throw std::invalid_argument("vector model: C_i is not positive definite");
        x.push_back(m.a_blocks[i] * m.xi + llt.matrixL() * z);
    }
    return x;
}

/// Model with i.i.d. standard Gaussian mixing matrices and unit noise
/// covariance, the configuration used throughout the vector experiments.
inline VectorObservationModel make_gaussian_vector_model(int nodes, int obs_dim,
                                                         const Eigen::VectorXd& xi,
                                                         std::uint64_t seed) {
    if (obs_dim < xi.size())
        throw std::invalid_argument("make_gaussian_vector_model: need M >= L");
    VectorObservationModel m;
    m.xi = xi;
    std::normal_distribution<double> gauss;
    for (int i = 0; i < nodes; ++i) {
        auto rng = substream(seed, stream_tag::mixing_matrix, static_cast<std::uint32_t>(i));
        Eigen::MatrixXd a(obs_dim, xi.size());
        for (Eigen::Index r = 0; r < a.rows(); ++r)
            for (Eigen::Index c = 0; c < a.cols(); ++c) a(r, c) = gauss(rng);
        m.a_blocks.push_back(std::move(a));
        m.c_blocks.push_back(Eigen::MatrixXd::Identity(obs_dim, obs_dim));
    }
    return m;
}

/// omega_i = x_i / b_i and c_i = b_i^2 / sigma_i^2: with these choices the
/// synchronized state equals the centralized ML estimate.
inline ScalarNetwork configure_scalar(const ScalarObservationModel& m,
                                      const Eigen::VectorXd& x, double coupling_gain,
                                      CouplingFunction coupling, Topology topology) {
    validate(m);
    if (x.size() != m.b.size())
        throw std::invalid_argument("configure_scalar: observation size mismatch");
    if (topology.node_count != static_cast<int>(m.b.size()))
        throw std::invalid_argument("configure_scalar: topology size mismatch");
    ScalarNetwork net;
    net.topology = std::move(topology);
    net.omega = x.cwiseQuotient(m.b);
    net.c = m.b.cwiseProduct(m.b).cwiseQuotient(m.sigma2);
    net.coupling_gain = coupling_gain;
    net.coupling = coupling;
    net.theta0 = Eigen::VectorXd::Zero(x.size());
    return net;
}

/// Centralized weighted ML estimate for the scalar model.
inline double centralized_ml_scalar(const ScalarObservationModel& m, const Eigen::VectorXd& x) {
    validate(m);
    double num = 0.0, den = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        num += m.b[i] * x[i] / m.sigma2[i];
        den += m.b[i] * m.b[i] / m.sigma2[i];
    }
    return num / den;
}

/// Q_i = A_i^T C_i^{-1} A_i, omega_i = Q_i^{-1} A_i^T C_i^{-1} x_i.
inline VectorNetwork configure_vector(const VectorObservationModel& m,
                                      const std::vector<Eigen::VectorXd>& x,
                                      double coupling_gain, CouplingFunction coupling,
                                      Topology topology) {
    validate(m);
    const int n = static_cast<int>(m.a_blocks.size());
    const int l = static_cast<int>(m.xi.size());
    if (static_cast<int>(x.size()) != n)
        throw std::invalid_argument("configure_vector: observation count mismatch");
    if (topology.node_count != n)
        throw std::invalid_argument("configure_vector: topology size mismatch");
    VectorNetwork net;
    net.topology = std::move(topology);
    net.block_size = l;
    net.omega.resize(n * l);
    net.coupling_gain = coupling_gain;
    net.coupling = coupling;
    for (int i = 0; i < n; ++i) {
        const Eigen::MatrixXd ci_inv_a = m.c_blocks[i].llt().solve(m.a_blocks[i]);
        Eigen::MatrixXd q = m.a_blocks[i].transpose() * ci_inv_a;
        const Eigen::VectorXd rhs = ci_inv_a.transpose() * x[i];
        net.omega.segment(i * l, l) = q.llt().solve(rhs);
        net.q_blocks.push_back(std::move(q));
    }
    net.theta0 = Eigen::VectorXd::Zero(n * l);
    return net;
}

/// Centralized ML estimate (sum A^T C^{-1} A)^{-1} (sum A^T C^{-1} x).
inline Eigen::VectorXd centralized_ml_vector(const VectorObservationModel& m,
                                             const std::vector<Eigen::VectorXd>& x) {
    validate(m);
    const int l = static_cast<int>(m.xi.size());
    Eigen::MatrixXd normal = Eigen::MatrixXd::Zero(l, l);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(l);
    for (std::size_t i = 0; i < m.a_blocks.size(); ++i) {
        const Eigen::MatrixXd ci_inv_a = m.c_blocks[i].llt().solve(m.a_blocks[i]);
        normal += m.a_blocks[i].transpose() * ci_inv_a;
        rhs += ci_inv_a.transpose() * x[i];
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(normal);
    if (lu.rank() < l)
        throw std::invalid_argument("centralized_ml_vector: singular normal matrix");
    return lu.solve(rhs);
}

/// Consensus-computable function class: h of the c-weighted mean of g(x_i).
/// The network realizes it with omega_i = g(x_i) and post-mapping by h.
struct GeneralFunctionSpec {
    std::function<double(double)> g;
    std::function<double(double)> h;
    Eigen::VectorXd c;
};

inline double general_consensus_function(const GeneralFunctionSpec& spec,
                                         const Eigen::VectorXd& x) {
    if (!spec.g || !spec.h) throw std::invalid_argument("general function spec: g and h required");
    if (spec.c.size() != x.size())
        throw std::invalid_argument("general function spec: weight size mismatch");
    if ((spec.c.array() <= 0.0).any())
        throw std::invalid_argument("general function spec: weights must be positive");
    double num = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) num += spec.c[i] * spec.g(x[i]);
    return spec.h(num / spec.c.sum());
}

/// Metropolis-Hastings averaging weights: symmetric, doubly stochastic, with
/// the sparsity pattern of the topology.
inline Eigen::MatrixXd metropolis_weights(const Topology& t) {
    validate(t);
    const auto nbrs = neighbor_lists(t);
    const int n = t.node_count;
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
    for (const Edge& e : t.edges) {
        const double v = 1.0 / (1.0 + std::max(nbrs[e.i].size(), nbrs[e.j].size()));
        w(e.i, e.j) = v;
        w(e.j, e.i) = v;
    }
    for (int i = 0; i < n; ++i) w(i, i) = 1.0 - w.row(i).sum();
    return w;
}

struct ConsensusRun {
    Eigen::MatrixXd states;       // (steps + 1) x N, row 0 = x0
    Eigen::VectorXd running_mean; // steps + 1
};

/// Discrete average-consensus baseline x[n] = W x[n-1] + v[n] with
/// Metropolis weights and i.i.d. Gaussian step noise.
inline ConsensusRun average_consensus_baseline(const Topology& t, const Eigen::VectorXd& x0,
                                               int steps, double noise_std,
                                               std::uint64_t seed) {
    if (x0.size() != t.node_count)
        throw std::invalid_argument("average_consensus_baseline: state size mismatch");
    if (steps < 0) throw std::invalid_argument("average_consensus_baseline: steps must be >= 0");
    const Eigen::MatrixXd w = metropolis_weights(t);
    ConsensusRun run;
    run.states.resize(steps + 1, t.node_count);
    run.running_mean.resize(steps + 1);
    run.states.row(0) = x0.transpose();
    run.running_mean[0] = x0.mean();

    std::vector<std::mt19937_64> engines;
    std::normal_distribution<double> gauss;
    if (noise_std > 0.0) {
        engines.reserve(t.node_count);
        for (int i = 0; i < t.node_count; ++i)
            engines.push_back(substream(seed, stream_tag::consensus_noise,
                                        static_cast<std::uint32_t>(i)));
    }
    Eigen::VectorXd x = x0;
    for (int n = 1; n <= steps; ++n) {
        x = w * x;
        if (noise_std > 0.0) {
            for (int i = 0; i < t.node_count; ++i) x[i] += noise_std * gauss(engines[i]);
        }
        run.states.row(n) = x.transpose();
        run.running_mean[n] = x.mean();
    }
    return run;
}

}  // namespace syncnet
