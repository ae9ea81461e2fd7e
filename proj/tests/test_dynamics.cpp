#include <doctest.h>

#include "syncnet/dynamics.hpp"
#include "syncnet/generators.hpp"
#include "test_helpers.hpp"

#include <cmath>
#include <random>

using namespace syncnet;

namespace {

ScalarNetwork two_node_tanh(double gain) {
    ScalarNetwork net;
    net.topology = make_topology(2, {{0, 1, 1.0}});
    net.omega = Eigen::Vector2d(0.0, 2.0);
    net.c = Eigen::Vector2d(1.0, 1.0);
    net.coupling_gain = gain;
    net.coupling = CouplingFunction::hyperbolic_tangent();
    net.theta0 = Eigen::Vector2d(0.0, 0.0);
    return net;
}

ScalarNetwork random_scalar_net(std::mt19937_64& rng, int n, CouplingFunction f,
                                double gain) {
    std::uniform_real_distribution<double> omega_dist(-2.0, 2.0);
    std::uniform_real_distribution<double> c_dist(0.5, 3.0);
    std::uniform_real_distribution<double> theta_dist(-1.0, 1.0);
    ScalarNetwork net;
    net.topology = testutil::random_connected(rng, n, 0.5);
    net.omega.resize(n);
    net.c.resize(n);
    net.theta0.resize(n);
    for (int i = 0; i < n; ++i) {
        net.omega[i] = omega_dist(rng);
        net.c[i] = c_dist(rng);
        net.theta0[i] = theta_dist(rng);
    }
    net.coupling_gain = gain;
    net.coupling = f;
    return net;
}

VectorNetwork random_vector_net(std::mt19937_64& rng, int n, int l, double gain) {
    std::normal_distribution<double> gauss;
    std::uniform_real_distribution<double> theta_dist(-1.0, 1.0);
    VectorNetwork net;
    net.topology = testutil::random_connected(rng, n, 0.6);
    net.block_size = l;
    net.omega.resize(n * l);
    net.theta0.resize(n * l);
    for (int k = 0; k < n * l; ++k) {
        net.omega[k] = gauss(rng);
        net.theta0[k] = theta_dist(rng);
    }
    for (int i = 0; i < n; ++i) {
        Eigen::MatrixXd a(l + 2, l);
        for (Eigen::Index r = 0; r < a.rows(); ++r)
            for (Eigen::Index c = 0; c < a.cols(); ++c) a(r, c) = gauss(rng);
        net.q_blocks.push_back(a.transpose() * a + Eigen::MatrixXd::Identity(l, l));
    }
    net.coupling_gain = gain;
    net.coupling = CouplingFunction::hyperbolic_tangent();
    return net;
}

}  // namespace

TEST_CASE("scalar right-hand side basics") {
    std::mt19937_64 rng(3);
    ScalarNetwork net = random_scalar_net(rng, 6, CouplingFunction::hyperbolic_tangent(), 0.0);
    const Eigen::VectorXd theta = Eigen::VectorXd::Random(6);
    CHECK((rhs_scalar(net, theta) - net.omega).lpNorm<Eigen::Infinity>() == 0.0);

    net.coupling_gain = 2.5;
    const Eigen::VectorXd uniform = Eigen::VectorXd::Constant(6, 0.8);
    CHECK((rhs_scalar(net, uniform) - net.omega).lpNorm<Eigen::Infinity>() < 1e-15);
}

TEST_CASE("scalar right-hand side matches the two-node hand evaluation") {
    const double gain = 0.7;
    ScalarNetwork net = two_node_tanh(gain);
    const Eigen::VectorXd rhs = rhs_scalar(net, Eigen::Vector2d(0.0, 1.0));
    CHECK(std::abs(rhs[0] - gain * std::tanh(1.0)) < 1e-15);
    CHECK(std::abs(rhs[1] - (2.0 - gain * std::tanh(1.0))) < 1e-15);
}

TEST_CASE("permutation map") {
    const auto p = permutation_map(2, 2);
    // node-major [x1_1, x1_2, x2_1, x2_2] -> component-major [x1_1, x2_1, x1_2, x2_2]
    CHECK(p == std::vector<int>{0, 2, 1, 3});
    const auto identity = permutation_map(5, 1);
    for (int k = 0; k < 5; ++k) CHECK(identity[k] == k);

    const Eigen::VectorXd x = Eigen::VectorXd::Random(12);
    const Eigen::VectorXd roundtrip = to_node_major(to_component_major(x, 4, 3), 4, 3);
    CHECK((roundtrip - x).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("vector right-hand side block form equals the permuted stacked form") {
    std::mt19937_64 rng(8);
    const int n = 3, l = 2;
    const VectorNetwork net = random_vector_net(rng, n, l, 1.3);
    const Eigen::VectorXd theta = Eigen::VectorXd::Random(n * l);

    // Stacked form: omega - K D_Q^{-1} P^T (I_L x B D_A) f((I_L x B^T) P theta).
    const Eigen::MatrixXd b = incidence(net.topology);
    const Eigen::VectorXd w = weighted_laplacian(net.topology).weight_vector;
    const auto perm = permutation_map(n, l);
    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n * l, n * l);
    for (int k = 0; k < n * l; ++k) p(k, perm[k]) = 1.0;
    Eigen::MatrixXd dq = Eigen::MatrixXd::Zero(n * l, n * l);
    for (int i = 0; i < n; ++i) dq.block(i * l, i * l, l, l) = net.q_blocks[i];
    const Eigen::MatrixXd identity_l = Eigen::MatrixXd::Identity(l, l);
    const Eigen::MatrixXd kron_bt = testutil::kron(identity_l, b.transpose());
    const Eigen::MatrixXd kron_bda =
        testutil::kron(identity_l, b * w.asDiagonal());
    const Eigen::VectorXd stacked =
        net.omega - net.coupling_gain *
                        dq.inverse() * p.transpose() * kron_bda *
                        net.coupling(Eigen::VectorXd(kron_bt * p * theta));

    CHECK((rhs_vector(net, theta) - stacked).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("vector right-hand side degenerates to the scalar one at L = 1") {
    std::mt19937_64 rng(9);
    ScalarNetwork scalar = random_scalar_net(rng, 5, CouplingFunction::hyperbolic_tangent(), 1.7);
    VectorNetwork vec;
    vec.topology = scalar.topology;
    vec.block_size = 1;
    vec.omega = scalar.omega;
    vec.coupling_gain = scalar.coupling_gain;
    vec.coupling = scalar.coupling;
    vec.theta0 = scalar.theta0;
    for (int i = 0; i < 5; ++i)
        vec.q_blocks.push_back(Eigen::MatrixXd::Constant(1, 1, scalar.c[i]));

    const Eigen::VectorXd theta = Eigen::VectorXd::Random(5);
    CHECK((rhs_vector(vec, theta) - rhs_scalar(scalar, theta)).lpNorm<Eigen::Infinity>() <
          1e-14);

    // Uniform blocks: coupling vanishes.
    Eigen::VectorXd same = Eigen::VectorXd::Zero(5);
    same.setConstant(0.31);
    CHECK((rhs_vector(vec, same) - vec.omega).lpNorm<Eigen::Infinity>() < 1e-15);

    // Whole trajectories agree sample by sample.
    SimulateOptions opt;
    opt.t_end = 2.0;
    opt.dt = 1e-3;
    const Trajectory ts = simulate(scalar, opt);
    const Trajectory tv = simulate(vec, opt);
    CHECK((ts.states - tv.states).lpNorm<Eigen::Infinity>() < 1e-12);
    CHECK((ts.derivs - tv.derivs).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("predicted synchronized states") {
    ScalarNetwork net;
    net.topology = make_topology(3, {{0, 1, 1.0}, {1, 2, 1.0}});
    net.omega = Eigen::Vector3d(1.0, 2.0, 3.0);
    net.c = Eigen::Vector3d::Ones();
    net.theta0 = Eigen::Vector3d::Zero();
    CHECK(predicted_state_scalar(net) == 2.0);

    ScalarNetwork weighted = two_node_tanh(1.0);
    weighted.c = Eigen::Vector2d(1.0, 3.0);
    weighted.omega = Eigen::Vector2d(0.0, 4.0);
    CHECK(predicted_state_scalar(weighted) == 3.0);

    std::mt19937_64 rng(12);
    VectorNetwork vec = random_vector_net(rng, 4, 2, 1.0);
    Eigen::MatrixXd q_sum = Eigen::MatrixXd::Zero(2, 2);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(2);
    for (int i = 0; i < 4; ++i) {
        q_sum += vec.q_blocks[i];
        rhs += vec.q_blocks[i] * vec.omega.segment(i * 2, 2);
    }
    const Eigen::VectorXd oracle = q_sum.colPivHouseholderQr().solve(rhs);
    CHECK((predicted_state_vector(vec) - oracle).lpNorm<Eigen::Infinity>() < 1e-12);

    VectorNetwork identity = vec;
    for (auto& q : identity.q_blocks) q = Eigen::MatrixXd::Identity(2, 2);
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(2);
    for (int i = 0; i < 4; ++i) mean += identity.omega.segment(i * 2, 2);
    mean /= 4.0;
    CHECK((predicted_state_vector(identity) - mean).lpNorm<Eigen::Infinity>() < 1e-14);
}

TEST_CASE("decoupled integration is exact linear growth") {
    ScalarNetwork net = two_node_tanh(0.0);
    net.omega = Eigen::Vector2d(0.75, 0.75);
    net.theta0 = Eigen::Vector2d(0.1, -0.4);
    SimulateOptions opt;
    opt.t_end = 3.0;
    opt.dt = 1e-2;
    const Trajectory traj = simulate(net, opt);
    for (Eigen::Index s = 0; s < traj.times.size(); ++s) {
        const double t = traj.times[s];
        CHECK(std::abs(traj.states(s, 0) - (0.1 + 0.75 * t)) < 1e-12);
        CHECK(std::abs(traj.states(s, 1) - (-0.4 + 0.75 * t)) < 1e-12);
    }
    CHECK(traj.times[0] == 0.0);
    CHECK(traj.times[traj.times.size() - 1] == 3.0);
}

TEST_CASE("noise-free integration converges at fourth order") {
    std::mt19937_64 rng(21);
    ScalarNetwork net = random_scalar_net(rng, 5, CouplingFunction::hyperbolic_tangent(), 2.0);
    auto terminal = [&](double dt) {
        SimulateOptions opt;
        opt.t_end = 1.0;
        opt.dt = dt;
        opt.record_stride = 1 << 28;
        const Trajectory traj = simulate(net, opt);
        return Eigen::VectorXd(traj.states.row(traj.times.size() - 1));
    };
    const Eigen::VectorXd reference = terminal(0.05 / 8.0);
    const double coarse = (terminal(0.05) - reference).norm();
    const double fine = (terminal(0.025) - reference).norm();
    const double ratio = coarse / fine;
    CHECK(ratio > 8.0);   // dt^4 scaling within a factor of two of 16
    CHECK(ratio < 32.0);
}

TEST_CASE("simulation reports divergence instead of returning garbage") {
    std::mt19937_64 rng(5);
    ScalarNetwork net = random_scalar_net(rng, 4, CouplingFunction::linear(), -40.0);
    SimulateOptions opt;
    opt.t_end = 50.0;
    opt.dt = 0.05;
    CHECK_THROWS_WITH_AS(simulate(net, opt), doctest::Contains("non-finite"),
                         std::runtime_error);
}

TEST_CASE("sync detection on the two-node threshold case") {
    SimulateOptions opt;
    opt.t_end = 60.0;
    opt.dt = 1e-3;
    opt.record_stride = 10;

    // Exact threshold is K = 1: K tanh(delta) = 1 has a solution only for K > 1.
    const Trajectory below = simulate(two_node_tanh(0.5), opt);
    CHECK_FALSE(below.synchronized);

    const Trajectory above = simulate(two_node_tanh(2.0), opt);
    CHECK(above.synchronized);
    CHECK(above.sync_time.has_value());
    const Eigen::Index last = above.times.size() - 1;
    CHECK(std::abs(above.derivs(last, 0) - 1.0) < 1e-6);
    CHECK(std::abs(above.derivs(last, 1) - 1.0) < 1e-6);
    // Equilibrium state separation artanh(1/2).
    const double separation = above.states(last, 1) - above.states(last, 0);
    CHECK(std::abs(separation - std::atanh(0.5)) < 1e-6);
}

TEST_CASE("sync_time is zero when the system starts synchronized") {
    ScalarNetwork net = two_node_tanh(1.0);
    net.omega = Eigen::Vector2d(1.4, 1.4);  // zero disagreement
    SimulateOptions opt;
    opt.t_end = 1.0;
    opt.dt = 1e-2;
    const Trajectory traj = simulate(net, opt);
    CHECK(traj.synchronized);
    CHECK(*traj.sync_time == 0.0);
}

TEST_CASE("conservation identity on noise-free and noisy runs") {
    std::mt19937_64 rng(33);
    SimulateOptions opt;
    opt.t_end = 2.0;
    opt.dt = 1e-3;
    opt.record_stride = 5;
    for (int trial = 0; trial < 5; ++trial) {
        ScalarNetwork net = random_scalar_net(
            rng, 5 + trial, trial % 2 ? CouplingFunction::hyperbolic_tangent()
                                      : CouplingFunction::linear(),
            1.5);
        const Trajectory traj = simulate(net, opt);
        CHECK(conservation_check(net, traj) < 1e-9);
    }

    ScalarNetwork frozen = two_node_tanh(0.0);
    const Trajectory decoupled = simulate(frozen, opt);
    CHECK(conservation_check(frozen, decoupled) == 0.0);

    // The drift part of the derivative satisfies the identity pointwise even
    // under coupling noise, and the deviation does not grow with time.
    ScalarNetwork noisy = two_node_tanh(1.5);
    noisy.noise_std = 0.2;
    SimulateOptions long_opt = opt;
    long_opt.t_end = 8.0;
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        long_opt.seed = seed;
        const Trajectory traj = simulate(noisy, long_opt);
        CHECK(conservation_check(noisy, traj) < 1e-9);
    }
}

TEST_CASE("vector conservation identity") {
    std::mt19937_64 rng(44);
    SimulateOptions opt;
    opt.t_end = 1.5;
    opt.dt = 1e-3;
    opt.record_stride = 5;
    for (int trial = 0; trial < 4; ++trial) {
        const VectorNetwork net = random_vector_net(rng, 4 + trial, 2 + trial % 2, 1.2);
        const Trajectory traj = simulate(net, opt);
        CHECK(conservation_check(net, traj) < 1e-8);
    }
}

TEST_CASE("noisy simulation is deterministic per seed") {
    ScalarNetwork net = two_node_tanh(1.5);
    net.noise_std = 0.3;
    SimulateOptions opt;
    opt.t_end = 1.0;
    opt.dt = 1e-3;
    opt.seed = 77;
    const Trajectory a = simulate(net, opt);
    const Trajectory b = simulate(net, opt);
    CHECK((a.states - b.states).lpNorm<Eigen::Infinity>() == 0.0);
    opt.seed = 78;
    const Trajectory c = simulate(net, opt);
    CHECK((a.states - c.states).lpNorm<Eigen::Infinity>() > 0.0);
}

TEST_CASE("trajectories are invariant to uniform state shifts") {
    std::mt19937_64 rng(55);
    ScalarNetwork net = random_scalar_net(rng, 6, CouplingFunction::hyperbolic_tangent(), 2.0);
    SimulateOptions opt;
    opt.t_end = 2.0;
    opt.dt = 1e-3;
    opt.record_stride = 20;
    const Trajectory base = simulate(net, opt);
    ScalarNetwork shifted = net;
    shifted.theta0.array() += 4.2;
    const Trajectory moved = simulate(shifted, opt);
    CHECK((base.derivs - moved.derivs).lpNorm<Eigen::Infinity>() < 1e-9);
}

TEST_CASE("equilibrium solver closed forms") {
    std::mt19937_64 rng(66);

    // Linear coupling: psi solves L psi = D_c delta_omega / K directly.
    ScalarNetwork linear = random_scalar_net(rng, 6, CouplingFunction::linear(), 2.0);
    const auto psi = solve_equilibrium(linear);
    REQUIRE(psi.has_value());
    const double omega_star = predicted_state_scalar(linear);
    const Eigen::VectorXd target =
        linear.c.cwiseProduct(linear.omega -
                              Eigen::VectorXd::Constant(6, omega_star)) /
        linear.coupling_gain;
    const Eigen::VectorXd closed = generalized_inverse(linear.topology) * target;
    // Compare modulo the constant gauge shift.
    const Eigen::VectorXd diff = *psi - closed;
    CHECK((diff.array() - diff.mean()).abs().maxCoeff() < 1e-8);
    CHECK(std::abs(linear.c.dot(*psi - linear.theta0)) < 1e-8);

    // Zero disagreement: the equilibrium is the uniform state.
    ScalarNetwork flat = two_node_tanh(1.0);
    flat.omega = Eigen::Vector2d(0.6, 0.6);
    const auto psi_flat = solve_equilibrium(flat);
    REQUIRE(psi_flat.has_value());
    CHECK(std::abs((*psi_flat)[1] - (*psi_flat)[0]) < 1e-10);

    // Two-node tanh: state separation artanh(1/K).
    const auto psi_two = solve_equilibrium(two_node_tanh(2.0));
    REQUIRE(psi_two.has_value());
    CHECK(std::abs(((*psi_two)[1] - (*psi_two)[0]) - std::atanh(0.5)) < 1e-8);

    // Below the threshold there is no fixed point.
    CHECK_FALSE(solve_equilibrium(two_node_tanh(0.5)).has_value());

    CHECK_THROWS(solve_equilibrium(two_node_tanh(0.0)));
}

TEST_CASE("lyapunov function vanishes on the synchronized manifold") {
    ScalarNetwork net = two_node_tanh(2.0);
    const auto psi = solve_equilibrium(net);
    REQUIRE(psi.has_value());
    ScalarNetwork at_manifold = net;
    at_manifold.theta0 = *psi;
    SimulateOptions opt;
    opt.t_end = 1.0;
    opt.dt = 1e-3;
    const Trajectory traj = simulate(at_manifold, opt);
    const auto psi_again = solve_equilibrium(at_manifold);
    REQUIRE(psi_again.has_value());
    const Eigen::VectorXd v = lyapunov_series(at_manifold, traj, *psi_again);
    CHECK(v.maxCoeff() < 1e-12);
}

TEST_CASE("lyapunov descent above threshold and growth for negative gain") {
    ScalarNetwork net = two_node_tanh(2.0);
    net.theta0 = Eigen::Vector2d(1.0, -2.0);
    SimulateOptions opt;
    opt.t_end = 10.0;
    opt.dt = 1e-3;
    const Trajectory traj = simulate(net, opt);
    const auto psi = solve_equilibrium(net);
    REQUIRE(psi.has_value());
    const Eigen::VectorXd v = lyapunov_series(net, traj, *psi);
    for (Eigen::Index k = 1; k < v.size(); ++k) CHECK(v[k] <= v[k - 1] + 1e-10);
    CHECK(v[v.size() - 1] < 1e-10);

    // Negative gain: the same functional increases along trajectories.
    ScalarNetwork unstable = two_node_tanh(-1.0);
    unstable.coupling = CouplingFunction::linear();
    unstable.omega = Eigen::Vector2d(0.0, 0.0);
    unstable.theta0 = Eigen::Vector2d(-0.5, 0.5);
    SimulateOptions short_opt;
    short_opt.t_end = 1.0;
    short_opt.dt = 1e-3;
    const Trajectory diverging = simulate(unstable, short_opt);
    const Eigen::VectorXd v_bad =
        lyapunov_series(unstable, diverging, Eigen::Vector2d(0.0, 0.0));
    CHECK(v_bad[v_bad.size() - 1] > 10.0 * v_bad[0]);
}

TEST_CASE("vector equilibrium and lyapunov descent") {
    std::mt19937_64 rng(91);
    VectorNetwork net = random_vector_net(rng, 5, 2, 0.0);
    // Choose a gain comfortably above the bounded-coupling threshold.
    net.coupling_gain = 40.0;
    const auto psi = solve_equilibrium(net);
    REQUIRE(psi.has_value());
    SimulateOptions opt;
    opt.t_end = 6.0;
    opt.dt = 5e-4;
    const Trajectory traj = simulate(net, opt);
    CHECK(traj.synchronized);
    const Eigen::VectorXd v = lyapunov_series(net, traj, *psi);
    for (Eigen::Index k = 1; k < v.size(); ++k) CHECK(v[k] <= v[k - 1] + 1e-10);
}
