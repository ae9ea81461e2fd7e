#pragma once

// Experiment runners behind the CLI: convergence traces, the variance-vs-N
// Monte Carlo study, the coupling-noise contrast against discrete average
// consensus, topology scans, and the sub-threshold clustering regime. Every
// runner is deterministic given (config, seed) and optionally writes CSV
// data plus one summary.json into the configured output directory.

#include "syncnet/bounds.hpp"
#include "syncnet/dynamics.hpp"
#include "syncnet/topology.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace syncnet {

/// Flat `key = value` configuration text with '#' comments.
class KeyValues {
  public:
    static KeyValues parse(std::istream& in);
    static KeyValues parse_file(const std::string& path);

    bool has(const std::string& key) const { return kv_.count(key) != 0; }
    void set(const std::string& key, const std::string& value) { kv_[key] = value; }

    std::string get_string(const std::string& key) const;
    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key) const;
    double get_double(const std::string& key, double fallback) const;
    int get_int(const std::string& key) const;
    int get_int(const std::string& key, int fallback) const;
    std::uint64_t get_uint64(const std::string& key, std::uint64_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<double> get_double_list(const std::string& key) const;
    std::vector<int> get_int_list(const std::string& key) const;

    const std::map<std::string, std::string>& items() const { return kv_; }

  private:
    std::map<std::string, std::string> kv_;
};

struct ExperimentConfig {
    std::string experiment;
    std::uint64_t seed = 0;
    std::string out_dir;  // empty: results are returned but not written
    KeyValues options;

    static ExperimentConfig from_file(const std::string& path);
};

/// Coupling gain specification: an explicit number, `auto*F` for F times the
/// computed k_u_upper, or `auto_low*F` for F times the computed k_l_lower.
struct GainSpec {
    enum class Mode { Explicit, AutoUpper, AutoLower };
    Mode mode = Mode::Explicit;
    double value = 0.0;
    double factor = 1.0;
};

GainSpec parse_gain(const std::string& text);
double resolve_gain(const GainSpec& spec, const CouplingBounds& bounds,
                    const CouplingFunction& f, bool allow_uncertified);

Topology topology_from_config(const KeyValues& options, std::uint64_t seed);

/// Largest stable fixed step for the configured network, capped by the
/// requested dt. Conservative spectral estimate of the stiffest mode.
double stability_limited_dt(const ScalarNetwork& net, double requested);
double stability_limited_dt(const VectorNetwork& net, double requested);

struct TraceResult {
    bool vector_case = false;
    Trajectory trajectory;
    Eigen::VectorXd ml_reference;  // centralized estimate, size 1 or L
    double conservation_deviation = 0.0;
    std::optional<double> final_lyapunov;
    CouplingBounds bounds;
    double gain_used = 0.0;
    double dt_used = 0.0;
};
TraceResult run_trace(const ExperimentConfig& config);

struct MonteCarloResult {
    std::vector<int> n_values;
    std::vector<double> variance_decentralized;  // mean square error vs true xi
    std::vector<double> variance_centralized;
    double loglog_slope = 0.0;
};
MonteCarloResult run_montecarlo(const ExperimentConfig& config);

struct NoiseContrastResult {
    std::vector<double> baseline_step;      // discrete iteration index
    std::vector<double> baseline_variance;  // Var over seeds of the running mean
    std::vector<double> window_end;         // window end times for the ODE system
    std::vector<double> system_variance;    // Var over seeds of windowed node derivatives
    double baseline_slope = 0.0;
    double baseline_slope_stderr = 0.0;
    double system_slope = 0.0;
    double system_slope_stderr = 0.0;
    double noise_std = 0.0;
    int nodes = 0;
};
NoiseContrastResult run_noise_contrast(const ExperimentConfig& config);

struct TopologyScanRow {
    int nodes = 0;
    double lambda2 = 0.0;            // mean over graph seeds for random families
    double lambda2_reference = 0.0;  // ring closed form; NaN when not applicable
    double spectral_lower_bound = 0.0;
    bool synchronized = false;
    double sync_time = 0.0;  // NaN when not synchronized
};
struct TopologyScanResult {
    std::string family;
    std::vector<TopologyScanRow> rows;
};
TopologyScanResult run_topology_scan(const ExperimentConfig& config);

struct ClusterReport {
    Eigen::MatrixXd field_before;  // rows x cols observed field
    Eigen::MatrixXd field_after;   // rows x cols node derivatives at t_end
    int cluster_count = 0;
    double gap_threshold = 0.0;
    double region_contiguity = 0.0;  // same-label fraction of same-region adjacent pairs
    std::vector<int> cluster_labels;
    std::vector<int> region_labels;
    CouplingBounds bounds;
    double gain_used = 0.0;
    double dt_used = 0.0;
};
ClusterReport run_cluster(const ExperimentConfig& config);

/// Dispatches on config.experiment and writes all outputs. Throws on any
/// configuration or runtime error.
void run_experiment(const ExperimentConfig& config);

/// JSON renderings used by the CLI.
std::string bounds_report_json(const ExperimentConfig& config);
std::string topology_info_json(const Topology& topology);

}  // namespace syncnet
