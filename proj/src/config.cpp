#include "syncnet/experiments.hpp"

#include "syncnet/generators.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace syncnet {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> parts;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) parts.push_back(trim(item));
    return parts;
}

}  // namespace

KeyValues KeyValues::parse(std::istream& in) {
    KeyValues out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("config line " + std::to_string(lineno) +
                                     ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw std::runtime_error("config line " + std::to_string(lineno) +
                                                  ": empty key");
        out.kv_[key] = value;
    }
    return out;
}

KeyValues KeyValues::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    return parse(in);
}

std::string KeyValues::get_string(const std::string& key) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) throw std::runtime_error("missing config key: " + key);
    return it->second;
}

std::string KeyValues::get_string(const std::string& key, const std::string& fallback) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? fallback : it->second;
}

double KeyValues::get_double(const std::string& key) const {
    const std::string v = get_string(key);
    try {
        std::size_t used = 0;
        const double parsed = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return parsed;
    } catch (const std::exception&) {
        throw std::runtime_error("config key " + key + ": not a number: " + v);
    }
}

double KeyValues::get_double(const std::string& key, double fallback) const {
    return has(key) ? get_double(key) : fallback;
}

int KeyValues::get_int(const std::string& key) const {
    const double v = get_double(key);
    const int i = static_cast<int>(v);
    if (static_cast<double>(i) != v)
        throw std::runtime_error("config key " + key + ": not an integer");
    return i;
}

int KeyValues::get_int(const std::string& key, int fallback) const {
    return has(key) ? get_int(key) : fallback;
}

std::uint64_t KeyValues::get_uint64(const std::string& key, std::uint64_t fallback) const {
    if (!has(key)) return fallback;
    return std::stoull(get_string(key));
}

bool KeyValues::get_bool(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const std::string v = get_string(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw std::runtime_error("config key " + key + ": not a boolean: " + v);
}

std::vector<double> KeyValues::get_double_list(const std::string& key) const {
    std::vector<double> out;
    for (const std::string& part : split(get_string(key), ',')) {
        if (part.empty()) continue;
        out.push_back(std::stod(part));
    }
    if (out.empty()) throw std::runtime_error("config key " + key + ": empty list");
    return out;
}

std::vector<int> KeyValues::get_int_list(const std::string& key) const {
    std::vector<int> out;
    for (double v : get_double_list(key)) {
        const int i = static_cast<int>(v);
        if (static_cast<double>(i) != v)
            throw std::runtime_error("config key " + key + ": not an integer list");
        out.push_back(i);
    }
    return out;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
    ExperimentConfig config;
    config.options = KeyValues::parse_file(path);
    config.experiment = config.options.get_string("experiment", "");
    config.seed = config.options.get_uint64("seed", 0);
    config.out_dir = config.options.get_string("out", "");
    return config;
}

GainSpec parse_gain(const std::string& text) {
    GainSpec spec;
    auto parse_factor = [&](std::size_t prefix_len) {
        const std::string rest = text.substr(prefix_len);
        if (rest.empty()) return 1.0;
        if (rest[0] != '*')
            throw std::runtime_error("gain spec: expected auto*FACTOR, got " + text);
        return std::stod(rest.substr(1));
    };
    if (text.rfind("auto_low", 0) == 0) {
        spec.mode = GainSpec::Mode::AutoLower;
        spec.factor = parse_factor(8);
    } else if (text.rfind("auto", 0) == 0) {
        spec.mode = GainSpec::Mode::AutoUpper;
        spec.factor = parse_factor(4);
    } else {
        spec.mode = GainSpec::Mode::Explicit;
        spec.value = std::stod(text);
    }
    return spec;
}

double resolve_gain(const GainSpec& spec, const CouplingBounds& bounds,
                    const CouplingFunction& f, bool allow_uncertified) {
    if (spec.mode == GainSpec::Mode::Explicit) return spec.value;
    if (!allow_uncertified && (!f.bounded() || !bounds.certified))
        throw std::runtime_error(
            "automatic gain needs a bounded coupling certified by the synchronization "
            "conditions; set the gain explicitly or allow_uncertified = true");
    return spec.mode == GainSpec::Mode::AutoUpper ? spec.factor * bounds.k_u_upper
                                                  : spec.factor * bounds.k_l_lower;
}

Topology topology_from_config(const KeyValues& options, std::uint64_t seed) {
    const std::string kind = options.get_string("topology");
    if (kind == "ring") {
        return gen_ring(options.get_int("nodes"), options.get_int("degree", 4));
    }
    if (kind == "grid") {
        return gen_grid(options.get_int("rows"), options.get_int("cols"),
                        options.get_double("radius", 2.0));
    }
    if (kind == "scale-free") {
        return gen_scale_free(options.get_int("nodes"), options.get_int("m0", 3),
                              options.get_int("m", 3), seed);
    }
    if (kind == "file") {
        return load_topology_file(options.get_string("topology_file"));
    }
    throw std::runtime_error("unknown topology kind: " + kind);
}

}  // namespace syncnet
