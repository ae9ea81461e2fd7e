#include "syncnet/experiments.hpp"

#include "syncnet/estimation.hpp"
#include "syncnet/generators.hpp"
#include "syncnet/io.hpp"
#include "syncnet/numeric.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <thread>

namespace syncnet {

namespace {

using nlohmann::json;

std::uint64_t derive_seed(std::uint64_t seed, std::uint32_t a, std::uint32_t b = 0,
                          std::uint32_t c = 0) {
    auto eng = substream(seed, 0xD5EEDu, a, b, c);
    return eng();
}

/// Runs fn(0..total-1) on a small thread pool; per-index results must go to
/// independent slots so the merge order stays deterministic.
void parallel_for(int total, const std::function<void(int)>& fn) {
    const int workers = std::min<int>(
        std::max(1u, std::thread::hardware_concurrency()), total);
    if (workers <= 1) {
        for (int i = 0; i < total; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&]() {
        for (;;) {
            const int i = next.fetch_add(1);
            if (i >= total) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

Eigen::VectorXd vector_option(const KeyValues& options, const std::string& key, int n,
                              double fallback) {
    if (!options.has(key)) return Eigen::VectorXd::Constant(n, fallback);
    const std::vector<double> values = options.get_double_list(key);
    if (values.size() == 1) return Eigen::VectorXd::Constant(n, values[0]);
    if (static_cast<int>(values.size()) != n)
        throw std::runtime_error("config key " + key + ": expected 1 or " +
                                 std::to_string(n) + " values");
    return Eigen::Map<const Eigen::VectorXd>(values.data(), n);
}

Eigen::VectorXd initial_state_from_spec(const std::string& spec, int nodes, int block,
                                        std::uint64_t seed) {
    if (spec == "zero") return Eigen::VectorXd::Zero(nodes * block);
    if (spec.rfind("uniform", 0) == 0) {
        double amplitude = 1.0;
        if (spec.size() > 7) {
            if (spec[7] != '*') throw std::runtime_error("theta0 spec: expected uniform*A");
            amplitude = std::stod(spec.substr(8));
        }
        Eigen::VectorXd theta0(nodes * block);
        std::uniform_real_distribution<double> uniform(-amplitude, amplitude);
        for (int i = 0; i < nodes; ++i) {
            auto rng = substream(seed, stream_tag::initial_state,
                                 static_cast<std::uint32_t>(i));
            for (int k = 0; k < block; ++k) theta0[i * block + k] = uniform(rng);
        }
        return theta0;
    }
    throw std::runtime_error("unknown theta0 spec: " + spec);
}

/// Dominant eigenvalue magnitude of the linearized coupling operator,
/// measured by power iteration. f'(0) = 1 bounds the state-dependent slope
/// for the whole catalog, so the linear-coupling operator is the stiffest
/// case. Deterministic (fixed internal start vector).
template <class Net, class Rhs>
double dominant_coupling_eigenvalue(const Net& net) {
    Net lin = net;
    lin.coupling = CouplingFunction::linear();
    lin.omega = Eigen::VectorXd::Zero(net.omega.size());
    lin.noise_std = 0.0;
    const Rhs rhs(lin);
    auto rng = substream(0, 0x5717FFu);
    std::normal_distribution<double> gauss;
    Eigen::VectorXd x(net.omega.size()), y(net.omega.size());
    for (Eigen::Index k = 0; k < x.size(); ++k) x[k] = gauss(rng);
    x.normalize();
    double lambda = 0.0;
    for (int it = 0; it < 120; ++it) {
        rhs(x, y);
        lambda = y.norm();
        if (!(lambda > 0.0)) return 0.0;
        x = y / lambda;
    }
    return lambda;
}

double clamp_dt(double requested, double lambda_dominant, bool stochastic) {
    if (!(lambda_dominant > 0.0)) return requested;
    // RK4 real-axis stability reaches ~2.78; the 1.15 inflation absorbs the
    // power-iteration residual.
    const double safety = stochastic ? 1.0 : 2.4;
    return std::min(requested, safety / (1.15 * lambda_dominant));
}

void ensure_out_dir(const std::string& dir) {
    if (!dir.empty()) std::filesystem::create_directories(dir);
}

json config_echo(const ExperimentConfig& config) {
    json echo = json::object();
    for (const auto& [key, value] : config.options.items()) echo[key] = value;
    return echo;
}

void write_summary(const ExperimentConfig& config, json summary) {
    if (config.out_dir.empty()) return;
    summary["experiment"] = config.experiment;
    summary["seed"] = config.seed;
    summary["config"] = config_echo(config);
    std::ofstream out(std::filesystem::path(config.out_dir) / "summary.json");
    if (!out) throw std::runtime_error("cannot write summary.json in " + config.out_dir);
    out << summary.dump(2) << '\n';
}

void write_matrix_csv(const Eigen::MatrixXd& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            if (c) out << ',';
            out << format_double(m(r, c));
        }
        out << '\n';
    }
}

json bounds_to_json(const CouplingBounds& b) {
    return json{{"k_l_lower", b.k_l_lower},
                {"k_u_upper", b.k_u_upper},
                {"certified", b.certified},
                {"ingredients",
                 json{{"dc_delta_inf", b.ingredients.dc_delta_inf},
                      {"dc_delta_l2", b.ingredients.dc_delta_l2},
                      {"f_max", b.ingredients.f_max},
                      {"g", b.ingredients.g},
                      {"d_max", b.ingredients.d_max},
                      {"lambda2", b.ingredients.lambda2}}}};
}

json optional_to_json(const std::optional<double>& v) {
    return v ? json(*v) : json(nullptr);
}

/// Sample variance with the data shifted by its first element, so identical
/// inputs give exactly zero.
double sample_variance(const Eigen::VectorXd& values) {
    if (values.size() < 2) return 0.0;
    const Eigen::ArrayXd shifted = values.array() - values[0];
    const double mean = shifted.mean();
    return (shifted - mean).square().sum() / (values.size() - 1);
}

struct BuiltScalar {
    ScalarObservationModel model;
    Eigen::VectorXd observations;
    ScalarNetwork net;
    CouplingBounds bounds;
};

BuiltScalar build_scalar_case(const ExperimentConfig& config, const Topology& topo) {
    const KeyValues& opt = config.options;
    const int n = topo.node_count;
    BuiltScalar built;
    built.model.b = vector_option(opt, "b", n, 1.0);
    built.model.sigma2 = vector_option(opt, "sigma2", n, 1.0);
    built.model.xi = opt.get_double("xi", 1.0);
    built.observations = draw_scalar(built.model, derive_seed(config.seed, 11));
    const CouplingFunction f = CouplingFunction::from_name(opt.get_string("coupling", "tanh"));
    built.net = configure_scalar(built.model, built.observations, 0.0, f, topo);
    built.bounds = scalar_bounds(built.net);
    built.net.coupling_gain =
        resolve_gain(parse_gain(opt.get_string("k", "auto*1.5")), built.bounds, f,
                     opt.get_bool("k_allow_uncertified", false));
    return built;
}

struct BuiltVector {
    VectorObservationModel model;
    std::vector<Eigen::VectorXd> observations;
    VectorNetwork net;
    CouplingBounds bounds;
};

BuiltVector build_vector_case(const ExperimentConfig& config, const Topology& topo) {
    const KeyValues& opt = config.options;
    const std::vector<double> xi_list = opt.has("xi")
                                            ? opt.get_double_list("xi")
                                            : std::vector<double>{1.0, 2.0, 3.0};
    Eigen::VectorXd xi = Eigen::Map<const Eigen::VectorXd>(
        xi_list.data(), static_cast<Eigen::Index>(xi_list.size()));
    const int obs_dim = opt.get_int("obs_dim", 2 * static_cast<int>(xi.size()));
    BuiltVector built;
    built.model = make_gaussian_vector_model(topo.node_count, obs_dim, xi,
                                             derive_seed(config.seed, 12));
    built.observations = draw_vector(built.model, derive_seed(config.seed, 11));
    const CouplingFunction f = CouplingFunction::from_name(opt.get_string("coupling", "tanh"));
    built.net = configure_vector(built.model, built.observations, 0.0, f, topo);
    built.bounds = vector_bounds(built.net);
    built.net.coupling_gain =
        resolve_gain(parse_gain(opt.get_string("k", "auto*1.5")), built.bounds, f,
                     opt.get_bool("k_allow_uncertified", false));
    return built;
}

}  // namespace

double stability_limited_dt(const ScalarNetwork& net, double requested) {
    return clamp_dt(requested,
                    dominant_coupling_eigenvalue<ScalarNetwork, detail::ScalarRhs>(net),
                    net.noise_std > 0.0);
}

double stability_limited_dt(const VectorNetwork& net, double requested) {
    return clamp_dt(requested,
                    dominant_coupling_eigenvalue<VectorNetwork, detail::VectorRhs>(net),
                    net.noise_std > 0.0);
}

TraceResult run_trace(const ExperimentConfig& config) {
    const KeyValues& opt = config.options;
    const Topology topo = topology_from_config(opt, config.seed);
    const std::string model_kind = opt.get_string("model", "vector");

    TraceResult result;
    SimulateOptions sim;
    sim.t_end = opt.get_double("t_end", 10.0);
    sim.dt = opt.get_double("dt", 1e-3);
    sim.seed = derive_seed(config.seed, 13);
    sim.record_stride = opt.get_int("record_stride", 1);
    sim.sync_eps = opt.get_double("eps", 1e-6);
    sim.sync_hold = opt.get_double("hold", -1.0);
    const bool auto_dt = opt.get_bool("auto_dt", true);
    const double noise_std = opt.get_double("noise_std", 0.0);
    const bool want_lyapunov = opt.get_bool("lyapunov", true);

    if (model_kind == "vector") {
        BuiltVector built = build_vector_case(config, topo);
        built.net.noise_std = noise_std;
        built.net.theta0 =
            initial_state_from_spec(opt.get_string("theta0", "uniform*1"), topo.node_count,
                                    built.net.block_size, derive_seed(config.seed, 14));
        if (auto_dt) sim.dt = stability_limited_dt(built.net, sim.dt);
        result.vector_case = true;
        result.trajectory = simulate(built.net, sim);
        result.ml_reference = centralized_ml_vector(built.model, built.observations);
        result.conservation_deviation = conservation_check(built.net, result.trajectory);
        result.bounds = built.bounds;
        result.gain_used = built.net.coupling_gain;
        if (noise_std == 0.0 && want_lyapunov) {
            if (auto psi = solve_equilibrium(built.net)) {
                const Eigen::VectorXd v = lyapunov_series(built.net, result.trajectory, *psi);
                result.final_lyapunov = v[v.size() - 1];
            }
        }
    } else if (model_kind == "scalar") {
        BuiltScalar built = build_scalar_case(config, topo);
        built.net.noise_std = noise_std;
        built.net.theta0 =
            initial_state_from_spec(opt.get_string("theta0", "uniform*1"), topo.node_count, 1,
                                    derive_seed(config.seed, 14));
        if (auto_dt) sim.dt = stability_limited_dt(built.net, sim.dt);
        result.vector_case = false;
        result.trajectory = simulate(built.net, sim);
        result.ml_reference = Eigen::VectorXd::Constant(
            1, centralized_ml_scalar(built.model, built.observations));
        result.conservation_deviation = conservation_check(built.net, result.trajectory);
        result.bounds = built.bounds;
        result.gain_used = built.net.coupling_gain;
        if (noise_std == 0.0 && want_lyapunov) {
            if (auto psi = solve_equilibrium(built.net)) {
                const Eigen::VectorXd v = lyapunov_series(built.net, result.trajectory, *psi);
                result.final_lyapunov = v[v.size() - 1];
            }
        }
    } else {
        throw std::runtime_error("unknown model kind: " + model_kind);
    }
    result.dt_used = sim.dt;

    if (!config.out_dir.empty()) {
        ensure_out_dir(config.out_dir);
        write_trajectory_csv_file(result.trajectory,
                                  (std::filesystem::path(config.out_dir) / "trace.csv").string());
        std::vector<double> ml(result.ml_reference.data(),
                               result.ml_reference.data() + result.ml_reference.size());
        std::vector<double> predicted(result.trajectory.predicted.data(),
                                      result.trajectory.predicted.data() +
                                          result.trajectory.predicted.size());
        write_summary(config,
                      json{{"model", model_kind},
                           {"nodes", topo.node_count},
                           {"block_size", result.trajectory.block_size},
                           {"gain_used", result.gain_used},
                           {"dt_used", result.dt_used},
                           {"noise_std", noise_std},
                           {"synchronized", result.trajectory.synchronized},
                           {"sync_time", optional_to_json(result.trajectory.sync_time)},
                           {"predicted_state", predicted},
                           {"ml_estimate", ml},
                           {"conservation_deviation", result.conservation_deviation},
                           {"final_lyapunov", optional_to_json(result.final_lyapunov)},
                           {"bounds", bounds_to_json(result.bounds)}});
    }
    return result;
}

MonteCarloResult run_montecarlo(const ExperimentConfig& config) {
    const KeyValues& opt = config.options;
    std::vector<int> n_values = opt.has("n_list") ? opt.get_int_list("n_list")
                                                  : std::vector<int>{8, 16, 32, 64};
    const int trials = opt.get_int("trials", 100);
    const int degree = opt.get_int("degree", 4);
    const std::vector<double> xi_list = opt.has("xi") ? opt.get_double_list("xi")
                                                      : std::vector<double>{1.0, 2.0, 3.0};
    const Eigen::VectorXd xi = Eigen::Map<const Eigen::VectorXd>(
        xi_list.data(), static_cast<Eigen::Index>(xi_list.size()));
    const int l = static_cast<int>(xi.size());
    const int obs_dim = opt.get_int("obs_dim", 6);
    const CouplingFunction f = CouplingFunction::from_name(opt.get_string("coupling", "tanh"));
    const GainSpec gain_spec = parse_gain(opt.get_string("k", "auto*8"));
    const bool allow_uncertified = opt.get_bool("k_allow_uncertified", false);
    const std::string theta0_spec = opt.get_string("theta0", "uniform*1");
    const double t_end = opt.get_double("t_end", 1.0);
    const double dt_request = opt.get_double("dt", 1e-3);
    const bool auto_dt = opt.get_bool("auto_dt", true);

    MonteCarloResult result;
    result.n_values = n_values;
    result.variance_decentralized.resize(n_values.size());
    result.variance_centralized.resize(n_values.size());

    for (std::size_t ni = 0; ni < n_values.size(); ++ni) {
        const int n = n_values[ni];
        const Topology topo = gen_ring(n, degree);
        std::vector<double> dec_sq(trials), cen_sq(trials);
        parallel_for(trials, [&](int trial) {
            const auto nid = static_cast<std::uint32_t>(ni);
            const auto tid = static_cast<std::uint32_t>(trial);
            const VectorObservationModel model = make_gaussian_vector_model(
                n, obs_dim, xi, derive_seed(config.seed, 21, nid, tid));
            const auto x = draw_vector(model, derive_seed(config.seed, 22, nid, tid));
            VectorNetwork net = configure_vector(model, x, 0.0, f, topo);
            const CouplingBounds bounds = vector_bounds(net);
            net.coupling_gain = resolve_gain(gain_spec, bounds, f, allow_uncertified);
            net.theta0 = initial_state_from_spec(theta0_spec, n, l,
                                                 derive_seed(config.seed, 23, nid, tid));
            SimulateOptions sim;
            sim.t_end = t_end;
            sim.dt = auto_dt ? stability_limited_dt(net, dt_request) : dt_request;
            sim.record_stride = 1 << 28;  // keep only the endpoints
            const Trajectory traj = simulate(net, sim);
            double acc = 0.0;
            const Eigen::Index last = traj.times.size() - 1;
            for (int i = 0; i < n; ++i)
                for (int k = 0; k < l; ++k) {
                    const double err = traj.derivs(last, i * l + k) - xi[k];
                    acc += err * err;
                }
            dec_sq[trial] = acc / (n * l);
            const Eigen::VectorXd central = centralized_ml_vector(model, x);
            cen_sq[trial] = (central - xi).squaredNorm() / l;
        });
        double dec = 0.0, cen = 0.0;
        for (int t = 0; t < trials; ++t) {
            dec += dec_sq[t];
            cen += cen_sq[t];
        }
        result.variance_decentralized[ni] = dec / trials;
        result.variance_centralized[ni] = cen / trials;
    }

    if (n_values.size() >= 2) {
        Eigen::VectorXd log_n(n_values.size()), log_var(n_values.size());
        for (std::size_t i = 0; i < n_values.size(); ++i) {
            log_n[static_cast<Eigen::Index>(i)] = std::log(static_cast<double>(n_values[i]));
            log_var[static_cast<Eigen::Index>(i)] =
                std::log(result.variance_decentralized[i]);
        }
        result.loglog_slope = fit_line(log_n, log_var).slope;
    } else {
        result.loglog_slope = std::numeric_limits<double>::quiet_NaN();
    }

    if (!config.out_dir.empty()) {
        ensure_out_dir(config.out_dir);
        CsvTable table;
        table.header = {"n", "var_decentralized", "var_centralized", "ratio"};
        for (std::size_t i = 0; i < n_values.size(); ++i) {
            table.rows.push_back({static_cast<double>(n_values[i]),
                                  result.variance_decentralized[i],
                                  result.variance_centralized[i],
                                  result.variance_decentralized[i] /
                                      result.variance_centralized[i]});
        }
        write_csv_file(table,
                       (std::filesystem::path(config.out_dir) / "variance.csv").string());
        write_summary(config, json{{"loglog_slope", result.loglog_slope},
                                   {"trials", trials},
                                   {"coupling", f.name()}});
    }
    return result;
}

NoiseContrastResult run_noise_contrast(const ExperimentConfig& config) {
    const KeyValues& opt = config.options;
    const Topology topo = topology_from_config(opt, config.seed);
    const int n = topo.node_count;
    const CouplingFunction f = CouplingFunction::from_name(opt.get_string("coupling", "linear"));
    if (f.kind() != CouplingFunction::Kind::Linear)
        throw std::runtime_error("noise-contrast: the analytical comparison needs linear coupling");
    const double noise_std = opt.get_double("noise_std", 0.3);
    const int steps = opt.get_int("steps", 300);
    const int trials = opt.get_int("trials", 200);
    const double gain = parse_gain(opt.get_string("k", "2")).value;

    ScalarObservationModel model;
    model.b = vector_option(opt, "b", n, 1.0);
    model.sigma2 = vector_option(opt, "sigma2", n, 1.0);
    model.xi = opt.get_double("xi", 0.0);
    const Eigen::VectorXd x0 = draw_scalar(model, derive_seed(config.seed, 11));

    NoiseContrastResult result;
    result.noise_std = noise_std;
    result.nodes = n;

    // Discrete baseline: the running average random-walks under step noise.
    Eigen::MatrixXd means(trials, steps + 1);
    parallel_for(trials, [&](int trial) {
        const ConsensusRun run = average_consensus_baseline(
            topo, x0, steps, noise_std,
            derive_seed(config.seed, 31, static_cast<std::uint32_t>(trial)));
        means.row(trial) = run.running_mean.transpose();
    });
    result.baseline_step.resize(steps);
    result.baseline_variance.resize(steps);
    for (int s = 1; s <= steps; ++s) {
        result.baseline_step[s - 1] = s;
        result.baseline_variance[s - 1] = sample_variance(means.col(s));
    }
    {
        const Eigen::Map<const Eigen::VectorXd> xs(result.baseline_step.data(), steps);
        const Eigen::Map<const Eigen::VectorXd> ys(result.baseline_variance.data(), steps);
        const LinearFit fit = fit_line(xs, ys);
        result.baseline_slope = fit.slope;
        result.baseline_slope_stderr = fit.slope_stderr;
    }

    // Continuous system: variance of windowed node derivatives stays flat.
    const double t_end = opt.get_double("t_end", 12.0);
    const double skip = opt.get_double("skip", 0.5) * t_end;
    const int windows = opt.get_int("windows", 7);
    const double spacing = (t_end - skip) / windows;
    const double window_len = 0.8 * spacing;
    ScalarNetwork base = configure_scalar(model, x0, gain, f, topo);
    base.noise_std = noise_std;
    base.theta0 = initial_state_from_spec(opt.get_string("theta0", "zero"), n, 1,
                                          derive_seed(config.seed, 14));
    SimulateOptions sim;
    sim.t_end = t_end;
    sim.dt = opt.get_bool("auto_dt", true)
                 ? stability_limited_dt(base, opt.get_double("dt", 1e-3))
                 : opt.get_double("dt", 1e-3);
    sim.record_stride = opt.get_int("record_stride", 4);

    result.window_end.resize(windows);
    for (int w = 0; w < windows; ++w) result.window_end[w] = skip + (w + 1) * spacing;

    Eigen::MatrixXd windowed(trials, windows * n);
    parallel_for(trials, [&](int trial) {
        SimulateOptions local = sim;
        local.seed = derive_seed(config.seed, 32, static_cast<std::uint32_t>(trial));
        const Trajectory traj = simulate(base, local);
        for (int w = 0; w < windows; ++w) {
            const double hi = result.window_end[w];
            const double lo = hi - window_len;
            Eigen::VectorXd acc = Eigen::VectorXd::Zero(n);
            int count = 0;
            for (Eigen::Index s = 0; s < traj.times.size(); ++s) {
                if (traj.times[s] <= lo || traj.times[s] > hi) continue;
                acc += traj.derivs.row(s).transpose();
                ++count;
            }
            if (count == 0) throw std::runtime_error("noise-contrast: empty window");
            windowed.row(trial).segment(w * n, n) = (acc / count).transpose();
        }
    });
    result.system_variance.assign(windows, 0.0);
    for (int w = 0; w < windows; ++w) {
        double pooled = 0.0;
        for (int i = 0; i < n; ++i) pooled += sample_variance(windowed.col(w * n + i));
        result.system_variance[w] = pooled / n;
    }
    {
        const Eigen::Map<const Eigen::VectorXd> xs(result.window_end.data(), windows);
        const Eigen::Map<const Eigen::VectorXd> ys(result.system_variance.data(), windows);
        const LinearFit fit = fit_line(xs, ys);
        result.system_slope = fit.slope;
        result.system_slope_stderr = fit.slope_stderr;
    }

    if (!config.out_dir.empty()) {
        ensure_out_dir(config.out_dir);
        CsvTable baseline;
        baseline.header = {"step", "variance"};
        for (int s = 0; s < steps; ++s)
            baseline.rows.push_back({result.baseline_step[s], result.baseline_variance[s]});
        write_csv_file(baseline, (std::filesystem::path(config.out_dir) /
                                  "baseline_variance.csv").string());
        CsvTable system;
        system.header = {"window_end", "variance"};
        for (int w = 0; w < windows; ++w)
            system.rows.push_back({result.window_end[w], result.system_variance[w]});
        write_csv_file(system, (std::filesystem::path(config.out_dir) /
                                "system_variance.csv").string());
        write_summary(config,
                      json{{"baseline_slope", result.baseline_slope},
                           {"baseline_slope_stderr", result.baseline_slope_stderr},
                           {"baseline_expected_slope", noise_std * noise_std / n},
                           {"system_slope", result.system_slope},
                           {"system_slope_stderr", result.system_slope_stderr},
                           {"trials", trials}});
    }
    return result;
}

TopologyScanResult run_topology_scan(const ExperimentConfig& config) {
    const KeyValues& opt = config.options;
    TopologyScanResult result;
    result.family = opt.get_string("family", "ring");
    const bool ring = result.family == "ring";
    if (!ring && result.family != "scale-free")
        throw std::runtime_error("topology-scan: family must be ring or scale-free");
    const std::vector<int> n_values =
        opt.has("n_list") ? opt.get_int_list("n_list")
                          : (ring ? std::vector<int>{16, 32, 64, 128}
                                  : std::vector<int>{32, 64, 128, 256});
    const int degree = opt.get_int("degree", 4);
    const int m0 = opt.get_int("m0", 3);
    const int m = opt.get_int("m", 3);
    const int graph_trials = opt.get_int("graph_trials", 10);
    const CouplingFunction f = CouplingFunction::from_name(opt.get_string("coupling", "tanh"));
    const double gain = opt.get_double("k", 5.0);
    const double t_end = opt.get_double("t_end", 30.0);

    for (std::size_t ni = 0; ni < n_values.size(); ++ni) {
        const int n = n_values[ni];
        TopologyScanRow row;
        row.nodes = n;
        Topology sim_topo;
        if (ring) {
            sim_topo = gen_ring(n, degree);
            row.lambda2 = algebraic_connectivity(sim_topo);
            row.lambda2_reference = ring_lambda2_formula(n, degree);
            row.spectral_lower_bound = fiedler_degree_bound(sim_topo);
        } else {
            double acc = 0.0;
            for (int g = 0; g < graph_trials; ++g) {
                const Topology topo = gen_scale_free(
                    n, m0, m,
                    derive_seed(config.seed, 41, static_cast<std::uint32_t>(ni),
                                static_cast<std::uint32_t>(g)));
                acc += algebraic_connectivity(topo);
                if (g == 0) {
                    sim_topo = topo;
                    row.spectral_lower_bound = fiedler_degree_bound(topo);
                }
            }
            row.lambda2 = acc / graph_trials;
            row.lambda2_reference = std::numeric_limits<double>::quiet_NaN();
        }

        ScalarObservationModel model;
        model.b = Eigen::VectorXd::Ones(n);
        model.sigma2 = Eigen::VectorXd::Ones(n);
        model.xi = opt.get_double("xi", 0.0);
        const Eigen::VectorXd x = draw_scalar(
            model, derive_seed(config.seed, 42, static_cast<std::uint32_t>(ni)));
        ScalarNetwork net = configure_scalar(model, x, gain, f, sim_topo);
        net.theta0 = Eigen::VectorXd::Zero(n);
        SimulateOptions sim;
        sim.t_end = t_end;
        sim.dt = opt.get_bool("auto_dt", true)
                     ? stability_limited_dt(net, opt.get_double("dt", 1e-3))
                     : opt.get_double("dt", 1e-3);
        sim.record_stride = opt.get_int("record_stride", 10);
        sim.sync_eps = opt.get_double("eps", 1e-6);
        const Trajectory traj = simulate(net, sim);
        row.synchronized = traj.synchronized;
        row.sync_time = traj.sync_time ? *traj.sync_time
                                       : std::numeric_limits<double>::quiet_NaN();
        result.rows.push_back(row);
    }

    if (!config.out_dir.empty()) {
        ensure_out_dir(config.out_dir);
        CsvTable table;
        table.header = {"n", "lambda2", "lambda2_reference", "spectral_lower_bound",
                        "synchronized", "sync_time"};
        for (const auto& row : result.rows) {
            table.rows.push_back({static_cast<double>(row.nodes), row.lambda2,
                                  row.lambda2_reference, row.spectral_lower_bound,
                                  row.synchronized ? 1.0 : 0.0, row.sync_time});
        }
        write_csv_file(table, (std::filesystem::path(config.out_dir) / "scan.csv").string());
        write_summary(config, json{{"family", result.family},
                                   {"k", gain},
                                   {"rows", result.rows.size()}});
    }
    return result;
}

ClusterReport run_cluster(const ExperimentConfig& config) {
    const KeyValues& opt = config.options;
    const int rows = opt.get_int("rows", 16);
    const int cols = opt.get_int("cols", 16);
    const double radius = opt.get_double("radius", 2.0);
    const Topology topo = gen_grid(rows, cols, radius);
    const int n = topo.node_count;

    const std::vector<double> region_values = opt.has("field_values")
                                                  ? opt.get_double_list("field_values")
                                                  : std::vector<double>{0.0, 6.0, 12.0, 18.0};
    const double field_noise = opt.get_double("field_noise", 0.2);

    ClusterReport report;
    report.field_before.resize(rows, cols);
    report.region_labels.resize(n);
    // Four values tile the grid as quadrants; any other count becomes equal
    // vertical bands.
    std::normal_distribution<double> gauss;
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            int region;
            if (region_values.size() == 4) {
                region = (r >= rows / 2 ? 2 : 0) + (c >= cols / 2 ? 1 : 0);
            } else {
                region = std::min<int>(static_cast<int>(region_values.size()) - 1,
                                       c * static_cast<int>(region_values.size()) / cols);
            }
            const int id = r * cols + c;
            report.region_labels[id] = region;
            auto rng = substream(config.seed, stream_tag::field,
                                 static_cast<std::uint32_t>(id));
            report.field_before(r, c) = region_values[region] + field_noise * gauss(rng);
        }
    }

    ScalarNetwork net;
    net.topology = topo;
    net.omega.resize(n);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) net.omega[r * cols + c] = report.field_before(r, c);
    net.c = Eigen::VectorXd::Ones(n);
    net.coupling = CouplingFunction::from_name(opt.get_string("coupling", "tanh"));
    net.theta0 = initial_state_from_spec(opt.get_string("theta0", "zero"), n, 1,
                                         derive_seed(config.seed, 14));
    net.noise_std = opt.get_double("noise_std", 0.0);
    report.bounds = scalar_bounds(net);
    net.coupling_gain = resolve_gain(parse_gain(opt.get_string("k", "auto_low*0.3")),
                                     report.bounds, net.coupling,
                                     opt.get_bool("k_allow_uncertified", false));
    report.gain_used = net.coupling_gain;

    SimulateOptions sim;
    sim.t_end = opt.get_double("t_end", 1.0);
    sim.dt = opt.get_bool("auto_dt", true)
                 ? stability_limited_dt(net, opt.get_double("dt", 1e-3))
                 : opt.get_double("dt", 1e-3);
    sim.seed = derive_seed(config.seed, 13);
    const long long nsteps = static_cast<long long>(std::ceil(sim.t_end / sim.dt));
    sim.record_stride = static_cast<int>(std::max<long long>(1, nsteps / 200));
    report.dt_used = sim.dt;
    const Trajectory traj = simulate(net, sim);

    const Eigen::Index last = traj.times.size() - 1;
    report.field_after.resize(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            report.field_after(r, c) = traj.derivs(last, r * cols + c);

    // Gap threshold: configured, or 10x the trailing temporal noise scale of
    // the node derivatives.
    double threshold = opt.get_double("gap_threshold", -1.0);
    if (threshold <= 0.0) {
        const double t_tail = traj.times[last] - 0.2 * sim.t_end;
        std::vector<double> node_std(n, 0.0);
        Eigen::Index first_tail = last;
        while (first_tail > 0 && traj.times[first_tail - 1] >= t_tail) --first_tail;
        const Eigen::Index count = last - first_tail + 1;
        for (int i = 0; i < n; ++i) {
            const Eigen::VectorXd tail = traj.derivs.col(i).segment(first_tail, count);
            const double mean = tail.mean();
            node_std[i] = count > 1
                              ? std::sqrt((tail.array() - mean).square().sum() / (count - 1))
                              : 0.0;
        }
        std::nth_element(node_std.begin(), node_std.begin() + n / 2, node_std.end());
        threshold = std::max(10.0 * node_std[n / 2], 1e-9);
    }
    report.gap_threshold = threshold;

    // 1-D gap split on the sorted derivatives.
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        return traj.derivs(last, a) < traj.derivs(last, b);
    });
    report.cluster_labels.assign(n, 0);
    int cluster = 0;
    for (int k = 1; k < n; ++k) {
        if (traj.derivs(last, order[k]) - traj.derivs(last, order[k - 1]) > threshold)
            ++cluster;
        report.cluster_labels[order[k]] = cluster;
    }
    report.cluster_count = cluster + 1;

    int same_region_pairs = 0, same_label_pairs = 0;
    auto tally = [&](int a, int b) {
        if (report.region_labels[a] != report.region_labels[b]) return;
        ++same_region_pairs;
        if (report.cluster_labels[a] == report.cluster_labels[b]) ++same_label_pairs;
    };
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            if (c + 1 < cols) tally(r * cols + c, r * cols + c + 1);
            if (r + 1 < rows) tally(r * cols + c, (r + 1) * cols + c);
        }
    }
    report.region_contiguity =
        same_region_pairs ? static_cast<double>(same_label_pairs) / same_region_pairs : 1.0;

    if (!config.out_dir.empty()) {
        ensure_out_dir(config.out_dir);
        const std::filesystem::path dir(config.out_dir);
        write_matrix_csv(report.field_before, (dir / "field_before.csv").string());
        write_matrix_csv(report.field_after, (dir / "field_after.csv").string());
        Eigen::MatrixXd labels(rows, cols);
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c)
                labels(r, c) = report.cluster_labels[r * cols + c];
        write_matrix_csv(labels, (dir / "clusters.csv").string());
        write_summary(config, json{{"cluster_count", report.cluster_count},
                                   {"gap_threshold", report.gap_threshold},
                                   {"region_contiguity", report.region_contiguity},
                                   {"gain_used", report.gain_used},
                                   {"dt_used", report.dt_used},
                                   {"bounds", bounds_to_json(report.bounds)}});
    }
    return report;
}

void run_experiment(const ExperimentConfig& config) {
    const std::string& name = config.experiment;
    if (name == "trace") {
        run_trace(config);
    } else if (name == "montecarlo") {
        run_montecarlo(config);
    } else if (name == "noise-contrast") {
        run_noise_contrast(config);
    } else if (name == "topology-scan") {
        run_topology_scan(config);
    } else if (name == "cluster") {
        run_cluster(config);
    } else {
        throw std::runtime_error("unknown experiment: " + name);
    }
}

std::string bounds_report_json(const ExperimentConfig& config) {
    const Topology topo = topology_from_config(config.options, config.seed);
    const std::string model_kind = config.options.get_string("model", "scalar");
    json out;
    if (model_kind == "vector") {
        BuiltVector built = build_vector_case(config, topo);
        out = bounds_to_json(built.bounds);
        const Eigen::VectorXd predicted = predicted_state_vector(built.net);
        out["predicted_state"] =
            std::vector<double>(predicted.data(), predicted.data() + predicted.size());
        out["gain_resolved"] = built.net.coupling_gain;
        out["coupling"] = built.net.coupling.name();
    } else {
        BuiltScalar built = build_scalar_case(config, topo);
        out = bounds_to_json(built.bounds);
        out["predicted_state"] = predicted_state_scalar(built.net);
        out["gain_resolved"] = built.net.coupling_gain;
        out["coupling"] = built.net.coupling.name();
    }
    out["nodes"] = topo.node_count;
    out["edges"] = topo.edge_count();
    return out.dump(2);
}

std::string topology_info_json(const Topology& topology) {
    json out{{"nodes", topology.node_count},
             {"edges", topology.edge_count()},
             {"connected", is_connected(topology)},
             {"max_degree", max_degree(topology)},
             {"min_degree", min_degree(topology)}};
    if (topology.node_count >= 2) out["lambda2"] = algebraic_connectivity(topology);
    return out.dump(2);
}

}  // namespace syncnet
