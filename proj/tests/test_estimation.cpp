#include <doctest.h>

#include "syncnet/bounds.hpp"
#include "syncnet/estimation.hpp"
#include "syncnet/generators.hpp"
#include "test_helpers.hpp"

#include <cmath>
#include <random>

using namespace syncnet;

namespace {

ScalarObservationModel random_scalar_model(std::mt19937_64& rng, int n) {
    std::uniform_real_distribution<double> gain(0.5, 2.0);
    std::uniform_real_distribution<double> var(0.25, 4.0);
    std::uniform_real_distribution<double> sign(0.0, 1.0);
    ScalarObservationModel m;
    m.b.resize(n);
    m.sigma2.resize(n);
    for (int i = 0; i < n; ++i) {
        m.b[i] = gain(rng) * (sign(rng) < 0.5 ? -1.0 : 1.0);
        m.sigma2[i] = var(rng);
    }
    m.xi = 3.0 * sign(rng) - 1.5;
    return m;
}

}  // namespace

TEST_CASE("scalar draws: noise-free limit and determinism") {
    ScalarObservationModel m;
    m.b = Eigen::Vector3d(1.0, -2.0, 0.5);
    m.sigma2 = Eigen::Vector3d::Constant(1e-30);
    m.xi = 1.7;
    const Eigen::VectorXd x = draw_scalar(m, 4);
    for (int i = 0; i < 3; ++i) CHECK(std::abs(x[i] - m.b[i] * m.xi) < 1e-12);

    m.sigma2 = Eigen::Vector3d::Constant(2.0);
    const Eigen::VectorXd a = draw_scalar(m, 99);
    const Eigen::VectorXd b = draw_scalar(m, 99);
    CHECK((a - b).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK((a - draw_scalar(m, 100)).lpNorm<Eigen::Infinity>() > 0.0);

    ScalarObservationModel bad = m;
    bad.b[1] = 0.0;
    CHECK_THROWS(draw_scalar(bad, 1));
}

TEST_CASE("scalar draws are unbiased") {
    ScalarObservationModel m;
    const int n = 200;
    m.b = Eigen::VectorXd::Constant(n, 2.0);
    m.sigma2 = Eigen::VectorXd::Constant(n, 0.25);
    m.xi = -0.6;
    double acc = 0.0;
    const int seeds = 500;
    for (int s = 0; s < seeds; ++s) {
        acc += (draw_scalar(m, 1000 + s).array() / m.b.array()).mean();
    }
    const double mean = acc / seeds;
    const double stderr_mean = (std::sqrt(0.25) / 2.0) / std::sqrt(double(n) * seeds);
    CHECK(std::abs(mean - m.xi) < 4.0 * stderr_mean);
}

TEST_CASE("scalar configuration realizes the ML estimate") {
    // b = 1, unit variance: the estimate is the sample mean.
    ScalarObservationModel plain;
    plain.b = Eigen::Vector4d::Ones();
    plain.sigma2 = Eigen::Vector4d::Ones();
    plain.xi = 0.0;
    Eigen::VectorXd x(4);
    x << 1.0, 2.0, 3.0, 6.0;
    ScalarNetwork net = configure_scalar(plain, x, 1.0, CouplingFunction::hyperbolic_tangent(),
                                         gen_ring(4, 2));
    CHECK(predicted_state_scalar(net) == 3.0);

    // Hand-computed weighted case: (1*1 + 2*2) / (1 + 4) = 1.
    ScalarObservationModel weighted;
    weighted.b = Eigen::Vector2d(1.0, 2.0);
    weighted.sigma2 = Eigen::Vector2d(1.0, 1.0);
    weighted.xi = 1.0;
    const Eigen::Vector2d obs(1.0, 2.0);
    ScalarNetwork wnet = configure_scalar(weighted, obs, 1.0,
                                          CouplingFunction::hyperbolic_tangent(),
                                          make_topology(2, {{0, 1, 1.0}}));
    CHECK(std::abs(predicted_state_scalar(wnet) - 1.0) < 1e-15);
    CHECK(std::abs(centralized_ml_scalar(weighted, obs) - 1.0) < 1e-15);
}

TEST_CASE("predicted state equals the centralized scalar estimate") {
    std::mt19937_64 rng(7);
    double worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 3 + trial % 10;
        const ScalarObservationModel m = random_scalar_model(rng, n);
        const Eigen::VectorXd x = draw_scalar(m, 500 + trial);
        const ScalarNetwork net = configure_scalar(
            m, x, 1.0, CouplingFunction::hyperbolic_tangent(),
            testutil::random_connected(rng, n, 0.6));
        worst = std::max(worst, std::abs(predicted_state_scalar(net) -
                                         centralized_ml_scalar(m, x)));
    }
    CHECK(worst < 1e-12);
}

TEST_CASE("centralized scalar estimate maximizes the likelihood") {
    std::mt19937_64 rng(13);
    const ScalarObservationModel m = random_scalar_model(rng, 6);
    const Eigen::VectorXd x = draw_scalar(m, 3);
    const double closed = centralized_ml_scalar(m, x);

    auto negloglik = [&](double xi) {
        double acc = 0.0;
        for (int i = 0; i < 6; ++i) {
            const double r = x[i] - m.b[i] * xi;
            acc += r * r / m.sigma2[i];
        }
        return acc;
    };
    const double pitch = 1e-4;
    double best = closed - 1.0, best_val = negloglik(best);
    for (double xi = closed - 1.0; xi <= closed + 1.0; xi += pitch) {
        const double v = negloglik(xi);
        if (v < best_val) {
            best_val = v;
            best = xi;
        }
    }
    CHECK(std::abs(best - closed) <= pitch);

    // Degenerate cases.
    ScalarObservationModel single;
    single.b = Eigen::VectorXd::Constant(1, 2.0);
    single.sigma2 = Eigen::VectorXd::Constant(1, 1.0);
    const Eigen::VectorXd one = Eigen::VectorXd::Constant(1, 5.0);
    CHECK(centralized_ml_scalar(single, one) == 2.5);
}

TEST_CASE("vector configuration and centralized estimate") {
    const int n = 5, l = 2, m_dim = 4;
    const Eigen::VectorXd xi = Eigen::Vector2d(0.4, -1.1);
    std::mt19937_64 rng(19);
    std::normal_distribution<double> gauss;

    VectorObservationModel model;
    model.xi = xi;
    for (int i = 0; i < n; ++i) {
        Eigen::MatrixXd a(m_dim, l);
        for (Eigen::Index r = 0; r < a.rows(); ++r)
            for (Eigen::Index c = 0; c < a.cols(); ++c) a(r, c) = gauss(rng);
        Eigen::MatrixXd g(m_dim, m_dim);
        for (Eigen::Index r = 0; r < m_dim; ++r)
            for (Eigen::Index c = 0; c < m_dim; ++c) g(r, c) = gauss(rng);
        model.a_blocks.push_back(a);
        model.c_blocks.push_back(g * g.transpose() +
                                 Eigen::MatrixXd::Identity(m_dim, m_dim));
    }
    const auto x = draw_vector(model, 77);

    // Noise-free observations recover xi exactly.
    std::vector<Eigen::VectorXd> clean;
    for (int i = 0; i < n; ++i) clean.push_back(model.a_blocks[i] * xi);
    CHECK((centralized_ml_vector(model, clean) - xi).lpNorm<Eigen::Infinity>() < 1e-12);

    // Independent solver path: whitened stacked least squares via QR.
    Eigen::MatrixXd stacked_a(n * m_dim, l);
    Eigen::VectorXd stacked_x(n * m_dim);
    for (int i = 0; i < n; ++i) {
        const Eigen::MatrixXd white = model.c_blocks[i].llt().matrixL().solve(
            Eigen::MatrixXd::Identity(m_dim, m_dim));
        stacked_a.block(i * m_dim, 0, m_dim, l) = white * model.a_blocks[i];
        stacked_x.segment(i * m_dim, m_dim) = white * x[i];
    }
    const Eigen::VectorXd qr = stacked_a.colPivHouseholderQr().solve(stacked_x);
    const Eigen::VectorXd closed = centralized_ml_vector(model, x);
    CHECK((closed - qr).lpNorm<Eigen::Infinity>() < 1e-10);

    // The configured network predicts the same estimate.
    std::mt19937_64 topo_rng(5);
    const VectorNetwork net = configure_vector(model, x, 1.0,
                                               CouplingFunction::hyperbolic_tangent(),
                                               testutil::random_connected(topo_rng, n, 0.7));
    CHECK((predicted_state_vector(net) - closed).lpNorm<Eigen::Infinity>() < 1e-10);

    // Identity model: plain mean of the observations.
    VectorObservationModel identity;
    identity.xi = xi;
    std::vector<Eigen::VectorXd> ix;
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(l);
    for (int i = 0; i < 3; ++i) {
        identity.a_blocks.push_back(Eigen::MatrixXd::Identity(l, l));
        identity.c_blocks.push_back(Eigen::MatrixXd::Identity(l, l));
        Eigen::VectorXd v(l);
        v << i, 2.0 * i - 1.0;
        ix.push_back(v);
        mean += v;
    }
    mean /= 3.0;
    CHECK((centralized_ml_vector(identity, ix) - mean).lpNorm<Eigen::Infinity>() < 1e-14);

    // Rank-deficient mixing matrices are rejected.
    VectorObservationModel defective = model;
    defective.a_blocks[2].col(1) = defective.a_blocks[2].col(0);
    CHECK_THROWS(configure_vector(defective, x, 1.0,
                                  CouplingFunction::hyperbolic_tangent(),
                                  testutil::random_connected(topo_rng, n, 0.7)));
}

TEST_CASE("gaussian vector model helper is deterministic") {
    const Eigen::VectorXd xi = Eigen::Vector3d(1.0, 2.0, 3.0);
    const VectorObservationModel a = make_gaussian_vector_model(16, 6, xi, 11);
    const VectorObservationModel b = make_gaussian_vector_model(16, 6, xi, 11);
    CHECK((a.a_blocks[7] - b.a_blocks[7]).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK(a.a_blocks[7].rows() == 6);
    CHECK(a.a_blocks[7].cols() == 3);
    CHECK_THROWS(make_gaussian_vector_model(4, 2, xi, 1));
}

TEST_CASE("general consensus functions") {
    GeneralFunctionSpec mean_spec;
    mean_spec.g = [](double v) { return v; };
    mean_spec.h = [](double v) { return v; };
    mean_spec.c = Eigen::Vector3d::Ones();
    Eigen::Vector3d x(1.0, 2.0, 6.0);
    CHECK(general_consensus_function(mean_spec, x) == 3.0);

    GeneralFunctionSpec geometric;
    geometric.g = [](double v) { return std::log(v); };
    geometric.h = [](double v) { return std::exp(v); };
    geometric.c = Eigen::Vector2d::Ones();
    CHECK(std::abs(general_consensus_function(geometric, Eigen::Vector2d(1.0, 4.0)) - 2.0) <
          1e-12);

    const double p = 64.0;
    GeneralFunctionSpec power;
    power.g = [p](double v) { return std::pow(v, p); };
    power.h = [p](double v) { return std::pow(v, 1.0 / p); };
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> positive(0.5, 5.0);
    Eigen::VectorXd data(8);
    for (int i = 0; i < 8; ++i) data[i] = positive(rng);
    power.c = Eigen::VectorXd::Ones(8);
    const double approx_max = general_consensus_function(power, data);
    CHECK(std::abs(approx_max - data.maxCoeff()) < 0.05 * data.maxCoeff());
}

TEST_CASE("metropolis weights are doubly stochastic and averaging") {
    std::mt19937_64 rng(23);
    const Topology t = testutil::random_connected(rng, 9, 0.4);
    const Eigen::MatrixXd w = metropolis_weights(t);
    CHECK((w - w.transpose()).lpNorm<Eigen::Infinity>() < 1e-15);
    CHECK((w.rowwise().sum() - Eigen::VectorXd::Ones(9)).lpNorm<Eigen::Infinity>() < 1e-12);
    const Eigen::MatrixXd deviation = w - Eigen::MatrixXd::Ones(9, 9) / 9.0;
    const Eigen::VectorXd evals =
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(deviation, Eigen::EigenvaluesOnly)
            .eigenvalues();
    CHECK(std::max(std::abs(evals[0]), std::abs(evals[8])) < 1.0);
}

TEST_CASE("average consensus baseline") {
    std::mt19937_64 rng(29);
    const Topology t = testutil::random_connected(rng, 8, 0.5);
    Eigen::VectorXd x0(8);
    for (int i = 0; i < 8; ++i) x0[i] = i * 0.7 - 2.0;

    const ConsensusRun clean = average_consensus_baseline(t, x0, 400, 0.0, 0);
    const double mean = x0.mean();
    for (int i = 0; i < 8; ++i)
        CHECK(std::abs(clean.states(400, i) - mean) < 1e-8);
    CHECK(std::abs(clean.running_mean[400] - mean) < 1e-12);

    // Edgeless graph: W = I, one step just adds the noise.
    const Topology isolated = make_topology(3, {});
    const Eigen::VectorXd y0 = Eigen::Vector3d(1.0, -1.0, 0.5);
    const ConsensusRun frozen = average_consensus_baseline(isolated, y0, 1, 0.0, 0);
    CHECK((frozen.states.row(1).transpose() - y0).lpNorm<Eigen::Infinity>() == 0.0);
    const ConsensusRun stepped = average_consensus_baseline(isolated, y0, 1, 0.4, 5);
    const ConsensusRun stepped_again = average_consensus_baseline(isolated, y0, 1, 0.4, 5);
    CHECK((stepped.states - stepped_again.states).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK((stepped.states.row(1).transpose() - y0).lpNorm<Eigen::Infinity>() > 0.0);

    // The running mean's variance over seeds grows roughly linearly.
    const int seeds = 60;
    auto variance_at = [&](int step) {
        Eigen::VectorXd values(seeds);
        for (int s = 0; s < seeds; ++s) {
            const ConsensusRun run = average_consensus_baseline(t, x0, step, 0.5, 100 + s);
            values[s] = run.running_mean[step];
        }
        const double m = values.mean();
        return (values.array() - m).square().sum() / (seeds - 1);
    };
    const double v50 = variance_at(50);
    const double v200 = variance_at(200);
    CHECK(v200 / v50 > 2.0);
    CHECK(v200 / v50 < 8.0);
}

TEST_CASE("end-to-end: the network synchronizes onto the ML estimate") {
    std::mt19937_64 rng(31);
    const int n = 8;
    const ScalarObservationModel m = random_scalar_model(rng, n);
    const Eigen::VectorXd x = draw_scalar(m, 17);
    ScalarNetwork net = configure_scalar(m, x, 0.0, CouplingFunction::hyperbolic_tangent(),
                                         gen_ring(n, 4));
    const CouplingBounds bounds = scalar_bounds(net);
    net.coupling_gain = 1.5 * bounds.k_u_upper;
    std::uniform_real_distribution<double> init(-1.0, 1.0);
    for (int i = 0; i < n; ++i) net.theta0[i] = init(rng);

    SimulateOptions opt;
    opt.t_end = 40.0;
    opt.dt = 1e-3;
    opt.record_stride = 50;
    const Trajectory traj = simulate(net, opt);
    CHECK(traj.synchronized);
    const double ml = centralized_ml_scalar(m, x);
    const Eigen::Index last = traj.times.size() - 1;
    for (int i = 0; i < n; ++i) CHECK(std::abs(traj.derivs(last, i) - ml) < 1e-5);
}
