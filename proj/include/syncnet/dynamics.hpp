#pragma once

// Coupled first-order dynamics on a graph: scalar and vector (block) state
// networks, fixed-step integration with optional coupling noise, closed-form
// synchronized states, synchronization detection, conservation and Lyapunov
// diagnostics, and the state-dependent-Laplacian equilibrium solver.

#include "syncnet/coupling.hpp"
#include "syncnet/graph.hpp"
#include "syncnet/numeric.hpp"
#include "syncnet/topology.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace syncnet {

/// Scalar-state network (one state per node). `c` holds the positive
/// adaptation coefficients; `coupling_gain` is the global gain K. Negative
/// gains are accepted for instability diagnostics only.
struct ScalarNetwork {
    Topology topology;
    Eigen::VectorXd omega;
    Eigen::VectorXd c;
    double coupling_gain = 0.0;
    CouplingFunction coupling = CouplingFunction::hyperbolic_tangent();
    double noise_std = 0.0;
    Eigen::VectorXd theta0;
};

/// Vector-state network: L states per node, stacked node-major, with one
/// nonsingular L x L matrix per node.
struct VectorNetwork {
    Topology topology;
    int block_size = 1;
    Eigen::VectorXd omega;                  // N*L, node-major
    std::vector<Eigen::MatrixXd> q_blocks;  // N matrices, L x L
    double coupling_gain = 0.0;
    CouplingFunction coupling = CouplingFunction::hyperbolic_tangent();
    double noise_std = 0.0;
    Eigen::VectorXd theta0;                 // N*L, node-major
};

inline void validate(const ScalarNetwork& net) {
    validate(net.topology);
    const int n = net.topology.node_count;
    if (net.omega.size() != n || net.c.size() != n || net.theta0.size() != n)
        throw std::invalid_argument("scalar network: vector sizes must equal node count");
    if ((net.c.array() <= 0.0).any())
        throw std::invalid_argument("scalar network: adaptation coefficients must be positive");
    if (net.noise_std < 0.0)
        throw std::invalid_argument("scalar network: noise_std must be nonnegative");
}

inline void validate(const VectorNetwork& net) {
    validate(net.topology);
    const int n = net.topology.node_count;
    const int l = net.block_size;
    if (l < 1) throw std::invalid_argument("vector network: block_size must be >= 1");
    if (net.omega.size() != n * l || net.theta0.size() != n * l)
        throw std::invalid_argument("vector network: stacked vectors must have size N*L");
    if (static_cast<int>(net.q_blocks.size()) != n)
        throw std::invalid_argument("vector network: need one Q block per node");
    for (const auto& q : net.q_blocks) {
        if (q.rows() != l || q.cols() != l)
            throw std::invalid_argument("vector network: Q blocks must be L x L");
        if (Eigen::FullPivLU<Eigen::MatrixXd>(q).rank() < l)
            throw std::invalid_argument("vector network: singular Q block");
    }
    if (net.noise_std < 0.0)
        throw std::invalid_argument("vector network: noise_std must be nonnegative");
}

/// Index map realizing the node-major to component-major reordering: entry k
/// of the component-major vector comes from node-major index map[k].
inline std::vector<int> permutation_map(int n, int l) {
    if (n < 1 || l < 1) throw std::invalid_argument("permutation_map: n, l must be >= 1");
    std::vector<int> map(static_cast<std::size_t>(n) * l);
    for (int comp = 0; comp < l; ++comp) {
        for (int node = 0; node < n; ++node) {
            map[static_cast<std::size_t>(comp) * n + node] = node * l + comp;
        }
    }
    return map;
}

inline Eigen::VectorXd to_component_major(const Eigen::VectorXd& x, int n, int l) {
    const auto map = permutation_map(n, l);
    Eigen::VectorXd out(x.size());
    for (Eigen::Index k = 0; k < x.size(); ++k) out[k] = x[map[k]];
    return out;
}

inline Eigen::VectorXd to_node_major(const Eigen::VectorXd& xbar, int n, int l) {
    const auto map = permutation_map(n, l);
    Eigen::VectorXd out(xbar.size());
    for (Eigen::Index k = 0; k < xbar.size(); ++k) out[map[k]] = xbar[k];
    return out;
}

/// Weighted mean sum(c_i omega_i) / sum(c_i): the only value the common
/// state derivative can take if the scalar system synchronizes.
inline double predicted_state_scalar(const ScalarNetwork& net) {
    return net.c.dot(net.omega) / net.c.sum();
}

/// Vector analogue: solves (sum Q_i) y = sum Q_i omega_i.
inline Eigen::VectorXd predicted_state_vector(const VectorNetwork& net) {
    const int l = net.block_size;
    Eigen::MatrixXd q_sum = Eigen::MatrixXd::Zero(l, l);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(l);
    for (int i = 0; i < net.topology.node_count; ++i) {
        q_sum += net.q_blocks[i];
        rhs += net.q_blocks[i] * net.omega.segment(i * l, l);
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(q_sum);
    if (lu.rank() < l)
        throw std::invalid_argument("predicted_state_vector: sum of Q blocks is singular");
    return lu.solve(rhs);
}

namespace detail {

struct ScalarRhs {
    const ScalarNetwork& net;

    explicit ScalarRhs(const ScalarNetwork& n) : net(n) {}

    void operator()(const Eigen::VectorXd& theta, Eigen::VectorXd& out) const {
        out = net.omega;
        const double k = net.coupling_gain;
        for (const Edge& e : net.topology.edges) {
            const double flow = e.weight * net.coupling(theta[e.j] - theta[e.i]);
            out[e.i] += k * flow / net.c[e.i];
            out[e.j] -= k * flow / net.c[e.j];
        }
    }
};

struct VectorRhs {
    const VectorNetwork& net;
    std::vector<Eigen::MatrixXd> q_inverse;
    mutable Eigen::MatrixXd acc;  // L x N edge-flow accumulator

    explicit VectorRhs(const VectorNetwork& n) : net(n) {
        q_inverse.reserve(net.q_blocks.size());
        for (const auto& q : net.q_blocks) q_inverse.push_back(q.inverse());
        acc.resize(net.block_size, net.topology.node_count);
    }

    void operator()(const Eigen::VectorXd& theta, Eigen::VectorXd& out) const {
        const int l = net.block_size;
        acc.setZero();
        for (const Edge& e : net.topology.edges) {
            const int bi = e.i * l, bj = e.j * l;
            for (int k = 0; k < l; ++k) {
                const double flow = e.weight * net.coupling(theta[bj + k] - theta[bi + k]);
                acc(k, e.i) += flow;
                acc(k, e.j) -= flow;
            }
        }
        out.resize(theta.size());
        const double gain = net.coupling_gain;
        for (int i = 0; i < net.topology.node_count; ++i) {
            out.segment(i * l, l) = net.omega.segment(i * l, l);
            out.segment(i * l, l).noalias() += gain * (q_inverse[i] * acc.col(i));
        }
    }
};

}  // namespace detail

/// Right-hand side of the scalar system, evaluated edge-wise.
inline Eigen::VectorXd rhs_scalar(const ScalarNetwork& net, const Eigen::VectorXd& theta) {
    validate(net);
    if (theta.size() != net.topology.node_count)
        throw std::invalid_argument("rhs_scalar: state size mismatch");
    Eigen::VectorXd out;
    const detail::ScalarRhs rhs(net);
    rhs(theta, out);
    return out;
}

/// Right-hand side of the vector system in block form; agrees with the
/// permuted stacked form by construction.
inline Eigen::VectorXd rhs_vector(const VectorNetwork& net, const Eigen::VectorXd& theta) {
    validate(net);
    if (theta.size() != net.omega.size())
        throw std::invalid_argument("rhs_vector: state size mismatch");
    Eigen::VectorXd out;
    const detail::VectorRhs rhs(net);
    rhs(theta, out);
    return out;
}

struct Trajectory {
    Eigen::VectorXd times;
    Eigen::MatrixXd states;  // samples x (N*L)
    Eigen::MatrixXd derivs;  // drift right-hand side at each sample
    int block_size = 1;
    Eigen::VectorXd predicted;  // omega* (size 1) or omega_L* (size L)
    bool synchronized = false;
    std::optional<double> sync_time;
};

struct SyncVerdict {
    bool synchronized = false;
    std::optional<double> sync_time;
};

/// Synchronized iff every node's derivative stays within eps of the
/// predicted value over a trailing window of at least `hold` time units.
/// sync_time is the first sample from which the criterion holds to the end.
inline SyncVerdict detect_sync(const Trajectory& traj, const Eigen::VectorXd& predicted,
                               double eps, double hold) {
    const Eigen::Index samples = traj.times.size();
    if (samples == 0) return {};
    const int l = static_cast<int>(predicted.size());
    const int n = static_cast<int>(traj.derivs.cols()) / l;
    Eigen::Index first_ok = 0;
    for (Eigen::Index s = 0; s < samples; ++s) {
        double dev = 0.0;
        for (int i = 0; i < n; ++i) {
            dev = std::max(dev, (traj.derivs.row(s).segment(i * l, l).transpose() - predicted)
                                    .lpNorm<Eigen::Infinity>());
        }
        if (dev >= eps) first_ok = s + 1;
    }
    SyncVerdict verdict;
    if (first_ok < samples &&
        traj.times[samples - 1] - traj.times[first_ok] >= hold) {
        verdict.synchronized = true;
        verdict.sync_time = traj.times[first_ok];
    }
    return verdict;
}

struct SimulateOptions {
    double t_end = 1.0;
    double dt = 1e-3;
    std::uint64_t seed = 0;
    int record_stride = 1;
    double sync_eps = 1e-6;
    double sync_hold = -1.0;  // negative: use 10% of t_end
};

namespace detail {

template <class Rhs>
Trajectory integrate(const Rhs& rhs, const Eigen::VectorXd& theta0, int block_size,
                     double noise_std, const SimulateOptions& opt) {
    if (!(opt.t_end > 0.0) || !(opt.dt > 0.0))
        throw std::invalid_argument("simulate: t_end and dt must be positive");
    if (opt.record_stride < 1)
        throw std::invalid_argument("simulate: record_stride must be >= 1");

    const Eigen::Index dim = theta0.size();
    const int n_nodes = static_cast<int>(dim) / block_size;
    const long long nsteps =
        std::max<long long>(1, static_cast<long long>(std::ceil(opt.t_end / opt.dt - 1e-9)));
    long long recorded = nsteps / opt.record_stride + 1;
    if (nsteps % opt.record_stride != 0) ++recorded;

    Trajectory traj;
    traj.block_size = block_size;
    traj.times.resize(recorded);
    traj.states.resize(recorded, dim);
    traj.derivs.resize(recorded, dim);

    std::vector<std::mt19937_64> engines;
    std::normal_distribution<double> gauss;
    if (noise_std > 0.0) {
        engines.reserve(n_nodes);
        for (int i = 0; i < n_nodes; ++i)
            engines.push_back(substream(opt.seed, stream_tag::coupling_noise,
                                        static_cast<std::uint32_t>(i)));
    }

    Eigen::VectorXd theta = theta0;
    Eigen::VectorXd k1(dim), k2(dim), k3(dim), k4(dim), stage(dim);
    double t = 0.0;
    Eigen::Index row = 0;
    auto record = [&](double time) {
        traj.times[row] = time;
        traj.states.row(row) = theta.transpose();
        rhs(theta, k1);
        traj.derivs.row(row) = k1.transpose();
        ++row;
    };
    record(0.0);

    for (long long step = 1; step <= nsteps; ++step) {
        const double h =
            (step == nsteps) ? opt.t_end - (nsteps - 1) * opt.dt : opt.dt;
        if (noise_std > 0.0) {
            // Euler-Maruyama: additive disturbance on the state increment.
            rhs(theta, k1);
            theta += h * k1;
            const double scale = noise_std * std::sqrt(h);
            for (int i = 0; i < n_nodes; ++i) {
                for (int k = 0; k < block_size; ++k)
                    theta[i * block_size + k] += scale * gauss(engines[i]);
            }
        } else {
            rhs(theta, k1);
            stage = theta + (0.5 * h) * k1;
            rhs(stage, k2);
            stage = theta + (0.5 * h) * k2;
            rhs(stage, k3);
            stage = theta + h * k3;
            rhs(stage, k4);
            theta += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        if (!theta.allFinite())
            throw std::runtime_error("simulate: state became non-finite at step " +
                                     std::to_string(step) + " (t = " +
                                     std::to_string(t + h) + ")");
        t = (step == nsteps) ? opt.t_end : step * opt.dt;
        if (step % opt.record_stride == 0 || step == nsteps) record(t);
    }
    traj.times.conservativeResize(row);
    traj.states.conservativeResize(row, dim);
    traj.derivs.conservativeResize(row, dim);
    return traj;
}

template <class Net>
void finalize_sync(const Net&, Trajectory& traj, const SimulateOptions& opt) {
    const double hold = opt.sync_hold >= 0.0 ? opt.sync_hold : 0.1 * opt.t_end;
    const SyncVerdict v = detect_sync(traj, traj.predicted, opt.sync_eps, hold);
    traj.synchronized = v.synchronized;
    traj.sync_time = v.sync_time;
}

}  // namespace detail

/// Fixed-step integration: classic 4th-order when noise-free, stochastic
/// Euler with sqrt(dt)-scaled Gaussian increments otherwise. Deterministic
/// given (network, options, seed); per-node noise substreams derive from
/// (seed, node index).
inline Trajectory simulate(const ScalarNetwork& net, const SimulateOptions& opt) {
    validate(net);
    detail::ScalarRhs rhs(net);
    Trajectory traj = detail::integrate(rhs, net.theta0, 1, net.noise_std, opt);
    traj.predicted = Eigen::VectorXd::Constant(1, predicted_state_scalar(net));
    detail::finalize_sync(net, traj, opt);
    return traj;
}

inline Trajectory simulate(const VectorNetwork& net, const SimulateOptions& opt) {
    validate(net);
    detail::VectorRhs rhs(net);
    Trajectory traj = detail::integrate(rhs, net.theta0, net.block_size, net.noise_std, opt);
    traj.predicted = predicted_state_vector(net);
    detail::finalize_sync(net, traj, opt);
    return traj;
}

/// Max over samples of |c^T theta_dot - c^T omega|; vanishes identically for
/// noise-free runs.
inline double conservation_check(const ScalarNetwork& net, const Trajectory& traj) {
    const double reference = net.c.dot(net.omega);
    double worst = 0.0;
    for (Eigen::Index s = 0; s < traj.times.size(); ++s) {
        worst = std::max(worst, std::abs(net.c.dot(traj.derivs.row(s).transpose()) - reference));
    }
    return worst;
}

/// Vector analogue: max over samples of the infinity norm of
/// sum_i Q_i theta_dot_i - sum_i Q_i omega_i.
inline double conservation_check(const VectorNetwork& net, const Trajectory& traj) {
    const int l = net.block_size;
    Eigen::VectorXd reference = Eigen::VectorXd::Zero(l);
    for (int i = 0; i < net.topology.node_count; ++i)
        reference += net.q_blocks[i] * net.omega.segment(i * l, l);
    double worst = 0.0;
    Eigen::VectorXd sum(l);
    for (Eigen::Index s = 0; s < traj.times.size(); ++s) {
        sum.setZero();
        for (int i = 0; i < net.topology.node_count; ++i)
            sum += net.q_blocks[i] * traj.derivs.row(s).segment(i * l, l).transpose();
        worst = std::max(worst, (sum - reference).lpNorm<Eigen::Infinity>());
    }
    return worst;
}

namespace detail {

/// Damped fixed-point iteration for L_{A,psi} psi = target / K, where the
/// state-dependent edge weights are a_e * f(delta_e)/delta_e. The first
/// update is undamped, so linear couplings solve in one step. Returns
/// nullopt when the iteration fails to reach the residual tolerance, which
/// is the expected outcome in the K < K_L regime.
inline std::optional<Eigen::VectorXd> laplacian_fixed_point(
    const Topology& topo, const CouplingFunction& coupling,
    const Eigen::VectorXd& target, double coupling_gain, int max_iterations) {
    if (!(coupling_gain > 0.0))
        throw std::invalid_argument("equilibrium solve requires K > 0");
    if (!is_connected(topo))
        throw std::invalid_argument("equilibrium solve requires a connected graph");
    const int n = topo.node_count;
    const Eigen::VectorXd rhs_target = target / coupling_gain;
    const double residual_tol = 1e-8;

    Eigen::VectorXd psi = Eigen::VectorXd::Zero(n);
    Eigen::MatrixXd lap(n, n);
    auto assemble = [&](const Eigen::VectorXd& p) {
        lap.setZero();
        for (const Edge& e : topo.edges) {
            const double w = e.weight * coupling.slope_ratio(p[e.j] - p[e.i]);
            lap(e.i, e.i) += w;
            lap(e.j, e.j) += w;
            lap(e.i, e.j) -= w;
            lap(e.j, e.i) -= w;
        }
    };

    for (int it = 0; it < max_iterations; ++it) {
        assemble(psi);
        const double residual = (lap * psi - rhs_target).lpNorm<Eigen::Infinity>();
        if (residual < residual_tol) return psi;

        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(lap);
        const Eigen::VectorXd& evals = es.eigenvalues();
        const double tol = 1e-12 * std::max(1.0, std::abs(evals[n - 1]));
        Eigen::VectorXd inv = Eigen::VectorXd::Zero(n);
        for (int k = 0; k < n; ++k) {
            if (evals[k] > tol) inv[k] = 1.0 / evals[k];
        }
        const Eigen::VectorXd next =
            es.eigenvectors() * inv.asDiagonal() * (es.eigenvectors().transpose() * rhs_target);
        psi = (it == 0) ? next : Eigen::VectorXd(0.5 * (psi + next));
        if (psi.lpNorm<Eigen::Infinity>() > 1e8) return std::nullopt;
    }
    return std::nullopt;
}

}  // namespace detail

/// Solves the synchronized-state equilibrium equation for the scalar system.
/// The solution is gauged so that the conserved weighted sum matches the
/// network's initial state. Returns nullopt when no fixed point is found.
inline std::optional<Eigen::VectorXd> solve_equilibrium(const ScalarNetwork& net,
                                                        int max_iterations = 10000) {
    validate(net);
    const double omega_star = predicted_state_scalar(net);
    const Eigen::VectorXd delta_omega =
        net.omega - Eigen::VectorXd::Constant(net.omega.size(), omega_star);
    const Eigen::VectorXd target = net.c.cwiseProduct(delta_omega);
    auto psi = detail::laplacian_fixed_point(net.topology, net.coupling, target,
                                             net.coupling_gain, max_iterations);
    if (!psi) return std::nullopt;
    const double shift = net.c.dot(net.theta0 - *psi) / net.c.sum();
    return Eigen::VectorXd(*psi + Eigen::VectorXd::Constant(psi->size(), shift));
}

/// Vector case: the stacked equilibrium equations decouple into one scalar
/// problem per state component after the component-major reordering.
inline std::optional<Eigen::VectorXd> solve_equilibrium(const VectorNetwork& net,
                                                        int max_iterations = 10000) {
    validate(net);
    const int n = net.topology.node_count;
    const int l = net.block_size;
    const Eigen::VectorXd omega_star = predicted_state_vector(net);
    Eigen::VectorXd dq_delta(n * l);
    for (int i = 0; i < n; ++i) {
        dq_delta.segment(i * l, l) =
            net.q_blocks[i] * (net.omega.segment(i * l, l) - omega_star);
    }
    Eigen::VectorXd psi(n * l);
    Eigen::VectorXd target(n);
    for (int k = 0; k < l; ++k) {
        for (int i = 0; i < n; ++i) target[i] = dq_delta[i * l + k];
        auto component = detail::laplacian_fixed_point(net.topology, net.coupling, target,
                                                       net.coupling_gain, max_iterations);
        if (!component) return std::nullopt;
        for (int i = 0; i < n; ++i) psi[i * l + k] = (*component)[i];
    }
    // Gauge the per-component constants so the conserved block sum matches
    // the initial state.
    Eigen::MatrixXd q_sum = Eigen::MatrixXd::Zero(l, l);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(l);
    for (int i = 0; i < n; ++i) {
        q_sum += net.q_blocks[i];
        rhs += net.q_blocks[i] * (net.theta0.segment(i * l, l) - psi.segment(i * l, l));
    }
    const Eigen::VectorXd beta = Eigen::FullPivLU<Eigen::MatrixXd>(q_sum).solve(rhs);
    for (int i = 0; i < n; ++i) psi.segment(i * l, l) += beta;
    return psi;
}

/// Lyapunov diagnostic V(t) = 1/2 || D_c^{1/2} (Psi(t) - Psi*) ||^2 sampled
/// along a noise-free trajectory, with Psi(t) = theta(t) - omega* t.
inline Eigen::VectorXd lyapunov_series(const ScalarNetwork& net, const Trajectory& traj,
                                       const Eigen::VectorXd& psi_star) {
    const double omega_star = predicted_state_scalar(net);
    Eigen::VectorXd v(traj.times.size());
    for (Eigen::Index s = 0; s < traj.times.size(); ++s) {
        const Eigen::VectorXd psi =
            traj.states.row(s).transpose() -
            Eigen::VectorXd::Constant(net.omega.size(), omega_star * traj.times[s]);
        const Eigen::VectorXd d = psi - psi_star;
        v[s] = 0.5 * d.dot(net.c.cwiseProduct(d));
    }
    return v;
}

/// Vector companion, V(t) = 1/2 sum_i d_i^T Q_i d_i with symmetric part of
/// Q_i used for the quadratic form.
inline Eigen::VectorXd lyapunov_series(const VectorNetwork& net, const Trajectory& traj,
                                       const Eigen::VectorXd& psi_star) {
    const int l = net.block_size;
    const Eigen::VectorXd omega_star = predicted_state_vector(net);
    std::vector<Eigen::MatrixXd> sym;
    sym.reserve(net.q_blocks.size());
    for (const auto& q : net.q_blocks) sym.push_back(0.5 * (q + q.transpose()));
    Eigen::VectorXd v(traj.times.size());
    for (Eigen::Index s = 0; s < traj.times.size(); ++s) {
        double acc = 0.0;
        for (int i = 0; i < net.topology.node_count; ++i) {
            const Eigen::VectorXd d = traj.states.row(s).segment(i * l, l).transpose() -
                                      omega_star * traj.times[s] -
                                      psi_star.segment(i * l, l);
            acc += d.dot(sym[i] * d);
        }
        v[s] = 0.5 * acc;
    }
    return v;
}

}  // namespace syncnet
