// syncnet: simulation and analysis CLI for self-synchronizing estimation
// networks. Each experiment reads a key=value config file and writes CSV
// data plus a summary.json into the output directory.

#include "syncnet/experiments.hpp"
#include "syncnet/io.hpp"
#include "syncnet/topology.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <iostream>
#include <optional>
#include <string>

namespace {

struct CommonArgs {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "path to the key=value config file")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--seed,-s", args.seed, "override the config seed");
    cmd->add_option("--out,-o", args.out_dir, "override the output directory");
}

syncnet::ExperimentConfig load(const CommonArgs& args, const std::string& experiment) {
    syncnet::ExperimentConfig config = syncnet::ExperimentConfig::from_file(args.config_path);
    config.experiment = experiment;
    if (args.seed) {
        config.seed = *args.seed;
        config.options.set("seed", std::to_string(*args.seed));
    }
    if (args.out_dir) config.out_dir = *args.out_dir;
    return config;
}

int fail(const std::string& experiment, const std::exception& error) {
    nlohmann::json record{{"error", error.what()}, {"experiment", experiment}};
    std::cerr << record.dump() << '\n';
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"self-synchronizing decentralized estimation networks"};
    app.require_subcommand(1);

    const std::vector<std::string> experiments = {"trace", "montecarlo", "noise-contrast",
                                                  "topology-scan", "cluster"};
    std::map<std::string, CommonArgs> args;
    for (const auto& name : experiments) {
        auto* cmd = app.add_subcommand(name, "run the " + name + " experiment");
        add_common(cmd, args[name]);
    }

    CommonArgs bounds_args;
    auto* bounds_cmd =
        app.add_subcommand("bounds", "print the critical-coupling bounds record as JSON");
    add_common(bounds_cmd, bounds_args);

    CommonArgs topo_args;
    std::string topo_out_file;
    auto* topo_cmd = app.add_subcommand("topology", "generate a topology and write its edge list");
    add_common(topo_cmd, topo_args);
    topo_cmd->add_option("--edge-list", topo_out_file, "path for the emitted edge-list file");

    CLI11_PARSE(app, argc, argv);

    for (const auto& name : experiments) {
        if (!app.get_subcommand(name)->parsed()) continue;
        try {
            syncnet::run_experiment(load(args[name], name));
            return 0;
        } catch (const std::exception& e) {
            return fail(name, e);
        }
    }

    if (bounds_cmd->parsed()) {
        try {
            std::cout << syncnet::bounds_report_json(load(bounds_args, "bounds")) << '\n';
            return 0;
        } catch (const std::exception& e) {
            return fail("bounds", e);
        }
    }

    if (topo_cmd->parsed()) {
        try {
            const syncnet::ExperimentConfig config = load(topo_args, "topology");
            const syncnet::Topology topo =
                syncnet::topology_from_config(config.options, config.seed);
            if (!topo_out_file.empty()) syncnet::save_topology_file(topo, topo_out_file);
            std::cout << syncnet::topology_info_json(topo) << '\n';
            return 0;
        } catch (const std::exception& e) {
            return fail("topology", e);
        }
    }
    return 0;
}
