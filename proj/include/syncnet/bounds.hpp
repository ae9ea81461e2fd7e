#pragma once

// Critical-coupling bounds: the computable lower bound on K_L and upper
// bound on K_U for scalar and vector networks, and the chi-tail bound on the
// non-synchronization probability under Gaussian observation noise.

#include "syncnet/coupling.hpp"
#include "syncnet/dynamics.hpp"
#include "syncnet/graph.hpp"
#include "syncnet/numeric.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <stdexcept>

namespace syncnet {

struct BoundIngredients {
    double dc_delta_inf = 0.0;  // ||D_c delta_omega||_inf (vector: max block)
    double dc_delta_l2 = 0.0;   // ||D_c delta_omega||_2 (vector: max block)
    double f_max = 0.0;
    double g = 0.0;
    double d_max = 0.0;
    double lambda2 = 0.0;
};

struct CouplingBounds {
    double k_l_lower = 0.0;  // below this no synchronized state exists
    double k_u_upper = 0.0;  // above this the synchronized state exists
    bool certified = true;   // false when the coupling fails a2
    BoundIngredients ingredients;
};

namespace detail {

inline CouplingBounds assemble_bounds(double inf_norm, double l2_norm,
                                      const CouplingFunction& f, const Topology& topo) {
    if (!is_connected(topo))
        throw std::invalid_argument("coupling bounds require a connected topology");
    CouplingBounds out;
    const GFunctional g = compute_g(f);
    out.certified = f.satisfies_a2();
    out.ingredients.dc_delta_inf = inf_norm;
    out.ingredients.dc_delta_l2 = l2_norm;
    out.ingredients.f_max = f.f_max();
    out.ingredients.g = g.value;
    out.ingredients.d_max = max_degree(topo);
    out.ingredients.lambda2 = algebraic_connectivity(topo);
    // Unbounded couplings drive both bounds to zero through the infinities.
    out.k_l_lower = inf_norm / (out.ingredients.f_max * out.ingredients.d_max);
    out.k_u_upper = l2_norm / (g.value * out.ingredients.lambda2);
    return out;
}

}  // namespace detail

/// Bounds for the scalar system from the disagreement vector
/// D_c (omega - omega* 1).
inline CouplingBounds scalar_bounds(const ScalarNetwork& net) {
    validate(net);
    const double omega_star = predicted_state_scalar(net);
    const Eigen::VectorXd dc_delta = net.c.cwiseProduct(
        net.omega - Eigen::VectorXd::Constant(net.omega.size(), omega_star));
    return detail::assemble_bounds(dc_delta.lpNorm<Eigen::Infinity>(), dc_delta.norm(),
                                   net.coupling, net.topology);
}

/// Bounds for the vector system: block norms of the component-major
/// reordering of D_Q (omega - 1 (x) omega_L*), maximized over components.
inline CouplingBounds vector_bounds(const VectorNetwork& net) {
    validate(net);
    const int n = net.topology.node_count;
    const int l = net.block_size;
    const Eigen::VectorXd omega_star = predicted_state_vector(net);
    Eigen::VectorXd dq_delta(n * l);
    for (int i = 0; i < n; ++i) {
        dq_delta.segment(i * l, l) =
            net.q_blocks[i] * (net.omega.segment(i * l, l) - omega_star);
    }
    double worst_inf = 0.0, worst_l2 = 0.0;
    Eigen::VectorXd block(n);
    for (int k = 0; k < l; ++k) {
        for (int i = 0; i < n; ++i) block[i] = dq_delta[i * l + k];
        worst_inf = std::max(worst_inf, block.lpNorm<Eigen::Infinity>());
        worst_l2 = std::max(worst_l2, block.norm());
    }
    return detail::assemble_bounds(worst_inf, worst_l2, net.coupling, net.topology);
}

/// Upper bound on the probability that the network fails to synchronize at
/// gain K under Gaussian observation noise, treating ||D_c delta_omega||_2
/// as a chi variable with N degrees of freedom and per-component standard
/// deviation s (supplied by the caller).
inline double non_sync_probability_bound(double coupling_gain, double f_max, double lambda2,
                                         double per_component_std, int nodes) {
    if (coupling_gain < 0.0)
        throw std::invalid_argument("non_sync_probability_bound: K must be nonnegative");
    if (!(per_component_std > 0.0))
        throw std::invalid_argument("non_sync_probability_bound: std must be positive");
    if (!(lambda2 > 0.0))
        throw std::invalid_argument("non_sync_probability_bound: lambda2 must be positive");
    if (nodes < 1) throw std::invalid_argument("non_sync_probability_bound: nodes must be >= 1");
    const double threshold = 0.5 * coupling_gain * f_max * lambda2 / per_component_std;
    if (std::isinf(threshold)) return 0.0;
    return 1.0 - chi_cdf(threshold, nodes);
}

inline double non_sync_probability_bound(const Topology& topo, const CouplingFunction& f,
                                         double coupling_gain, double per_component_std) {
    return non_sync_probability_bound(coupling_gain, f.f_max(),
                                      algebraic_connectivity(topo), per_component_std,
                                      topo.node_count);
}

}  // namespace syncnet
