#pragma once

// Run configuration read from an INI file with sections [network], [policy],
// [sim], [train] and [output]. Unknown sections and keys are rejected so that
// a typo cannot silently fall back to a default.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "gsp/error.hpp"
#include "gsp/learn.hpp"
#include "gsp/network.hpp"
#include "gsp/sim.hpp"

namespace gsp {

enum class OutputFormat { table, csv, json };

inline OutputFormat parse_format(const std::string& s) {
    if (s == "table") return OutputFormat::table;
    if (s == "csv") return OutputFormat::csv;
    if (s == "json") return OutputFormat::json;
    throw ConfigInvalid("unknown output format '" + s + "' (expected table, csv or json)");
}

inline const char* format_name(OutputFormat f) {
    switch (f) {
        case OutputFormat::table: return "table";
        case OutputFormat::csv: return "csv";
        default: return "json";
    }
}

struct PolicyConfig {
    std::string name = "gsp";                      // gsp, ssp or ob
    std::optional<GspParams> params;               // trained when unset
    std::optional<std::array<double, kNumPaths>> eta;  // optimized when unset
    double grid_step = 0.02;
    double search_horizon = 1e5;  // sec per OB grid candidate
};

struct DriftConfig {
    std::vector<TrafficState::Count> shells{10, 50, 200, 1000};
    int per_shell = 2000;
};

struct OutputConfig {
    std::filesystem::path dir = "gsp-out";
    OutputFormat format = OutputFormat::table;
    std::optional<std::string> baseline;  // policy name
    std::optional<double> baseline_mean;  // sec
};

struct RunConfig {
    NetworkSpec network = NetworkSpec::reference();
    PolicyConfig policy;
    SimConfig sim;
    int replications = 1;
    PiConfig train;
    DriftConfig drift;
    OutputConfig output;
};

namespace detail {

using boost::property_tree::ptree;

inline double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigInvalid("'" + key + "' expects a number, got '" + v + "'");
    }
}

inline std::int64_t to_int(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const long long i = std::stoll(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return i;
    } catch (const std::exception&) {
        throw ConfigInvalid("'" + key + "' expects an integer, got '" + v + "'");
    }
}

inline bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigInvalid("'" + key + "' expects true or false, got '" + v + "'");
}

inline std::vector<double> to_list(const std::string& key, const std::string& v) {
    std::vector<double> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto b = item.find_first_not_of(" \t");
        const auto e = item.find_last_not_of(" \t");
        if (b == std::string::npos) throw ConfigInvalid("'" + key + "' has an empty list entry");
        out.push_back(to_double(key, item.substr(b, e - b + 1)));
    }
    return out;
}

inline const std::set<std::string>& known_keys(const std::string& section) {
    static const std::map<std::string, std::set<std::string>> keys{
        {"network", {"lambda", "mu1", "mu2", "mu3", "mu4", "mu5"}},
        {"policy", {"name", "beta", "gamma", "eta", "grid_step", "search_horizon"}},
        {"sim", {"mode", "dt", "horizon", "warmup", "max_epochs", "seed", "replications", "drift_shells",
                 "drift_samples"}},
        {"train", {"episode_length", "theta_beta", "theta_gamma", "max_iters", "estimate_rates", "confidence_z",
                   "initial_lambda", "initial_mu", "initial_beta", "initial_gamma"}},
        {"output", {"dir", "format", "baseline", "baseline_mean"}},
    };
    static const std::set<std::string> none;
    auto it = keys.find(section);
    return it == keys.end() ? none : it->second;
}

}  // namespace detail

inline void validate(const RunConfig& cfg) {
    validate(cfg.sim, cfg.network);
    if (cfg.replications < 1) throw ConfigInvalid("sim.replications must be at least 1");
    if (cfg.drift.shells.empty()) throw ConfigInvalid("sim.drift_shells must not be empty");
    if (cfg.drift.per_shell < 1) throw ConfigInvalid("sim.drift_samples must be at least 1");
    if (!(cfg.train.episode_length > 0.0)) throw ConfigInvalid("train.episode_length must be positive");
    if (!(cfg.train.theta_beta > 0.0) || !(cfg.train.theta_gamma > 0.0))
        throw ConfigInvalid("train.theta_beta and train.theta_gamma must be positive");
    if (cfg.train.max_iters < 0) throw ConfigInvalid("train.max_iters must be non-negative");
    if (cfg.train.confidence_z < 0.0) throw ConfigInvalid("train.confidence_z must be non-negative");
    if (!(cfg.train.initial.lambda > 0.0)) throw ConfigInvalid("train.initial_lambda must be positive");
    for (double m : cfg.train.initial.mu) {
        if (!(m > 0.0)) throw ConfigInvalid("train.initial_mu entries must be positive");
    }
    if (!(cfg.policy.grid_step > 0.0) || cfg.policy.grid_step > 1.0)
        throw ConfigInvalid("policy.grid_step must lie in (0, 1]");
    if (!(cfg.policy.search_horizon > 0.0)) throw ConfigInvalid("policy.search_horizon must be positive");
    if (cfg.output.baseline_mean && !(*cfg.output.baseline_mean > 0.0))
        throw ConfigInvalid("output.baseline_mean must be positive");
}

// Later keys override earlier defaults; missing keys keep the RunConfig defaults.
inline RunConfig parse_config(std::istream& in) {
    detail::ptree tree;
    try {
        boost::property_tree::ini_parser::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigInvalid(std::string("malformed config: ") + e.what());
    }
    for (const auto& [section, body] : tree) {
        const auto& allowed = detail::known_keys(section);
        if (allowed.empty()) throw ConfigInvalid("unknown config section [" + section + "]");
        if (!body.data().empty()) throw ConfigInvalid("key '" + section + "' must sit inside a section");
        for (const auto& [key, _] : body) {
            if (!allowed.count(key)) throw ConfigInvalid("unknown key '" + key + "' in [" + section + "]");
        }
    }
    auto get = [&](const std::string& path) -> std::optional<std::string> {
        if (auto v = tree.get_optional<std::string>(detail::ptree::path_type(path, '.'))) return *v;
        return std::nullopt;
    };
    auto num = [&](const std::string& path) -> std::optional<double> {
        if (auto v = get(path)) return detail::to_double(path, *v);
        return std::nullopt;
    };
    auto integer = [&](const std::string& path) -> std::optional<std::int64_t> {
        if (auto v = get(path)) return detail::to_int(path, *v);
        return std::nullopt;
    };

    RunConfig cfg;

    ServiceRates mu = cfg.network.service_rates();
    double lambda = cfg.network.arrival_rate();
    for (int n = 1; n <= kNumServers; ++n) {
        if (auto v = num("network.mu" + std::to_string(n))) mu[n - 1] = *v;
    }
    if (auto v = num("network.lambda")) lambda = *v;
    cfg.network = NetworkSpec(mu, lambda);

    if (auto v = get("policy.name")) {
        if (*v != "gsp" && *v != "ssp" && *v != "ob") throw ConfigInvalid("policy.name must be gsp, ssp or ob");
        cfg.policy.name = *v;
    }
    const auto beta = num("policy.beta");
    const auto gamma = num("policy.gamma");
    if (beta.has_value() != gamma.has_value()) throw ConfigInvalid("policy.beta and policy.gamma go together");
    if (beta) cfg.policy.params = GspParams{*beta, *gamma};
    if (auto v = get("policy.eta")) {
        const auto list = detail::to_list("policy.eta", *v);
        if (list.size() != kNumPaths) throw ConfigInvalid("policy.eta needs three probabilities (paths 12, 135, 45)");
        cfg.policy.eta = std::array<double, kNumPaths>{list[0], list[1], list[2]};
        try {
            BernoulliWeights{*cfg.policy.eta};
        } catch (const InvalidWeights& e) {
            throw ConfigInvalid(std::string("policy.eta: ") + e.what());
        }
    }
    if (auto v = num("policy.grid_step")) cfg.policy.grid_step = *v;
    if (auto v = num("policy.search_horizon")) cfg.policy.search_horizon = *v;

    if (auto v = get("sim.mode")) {
        try {
            cfg.sim.mode = parse_mode(*v);
        } catch (const std::exception&) {
            throw ConfigInvalid("sim.mode must be bernoulli_dt or event_driven");
        }
    }
    if (auto v = num("sim.dt")) cfg.sim.dt = *v;
    if (auto v = num("sim.horizon")) cfg.sim.horizon = *v;
    if (auto v = num("sim.warmup")) cfg.sim.warmup = *v;
    if (auto v = integer("sim.max_epochs")) cfg.sim.max_epochs = *v;
    if (auto v = integer("sim.seed")) {
        if (*v < 0) throw ConfigInvalid("sim.seed must be non-negative");
        cfg.sim.seed = static_cast<std::uint64_t>(*v);
    }
    if (auto v = integer("sim.replications")) cfg.replications = static_cast<int>(*v);
    if (auto v = get("sim.drift_shells")) {
        cfg.drift.shells.clear();
        for (double s : detail::to_list("sim.drift_shells", *v)) {
            if (s < 0 || s != std::floor(s)) throw ConfigInvalid("sim.drift_shells must be non-negative integers");
            cfg.drift.shells.push_back(static_cast<TrafficState::Count>(s));
        }
    }
    if (auto v = integer("sim.drift_samples")) cfg.drift.per_shell = static_cast<int>(*v);

    if (auto v = num("train.episode_length")) cfg.train.episode_length = *v;
    if (auto v = num("train.theta_beta")) cfg.train.theta_beta = *v;
    if (auto v = num("train.theta_gamma")) cfg.train.theta_gamma = *v;
    if (auto v = integer("train.max_iters")) cfg.train.max_iters = static_cast<int>(*v);
    if (auto v = get("train.estimate_rates")) cfg.train.estimate_rates = detail::to_bool("train.estimate_rates", *v);
    if (auto v = num("train.confidence_z")) cfg.train.confidence_z = *v;
    if (auto v = num("train.initial_lambda")) cfg.train.initial.lambda = *v;
    if (auto v = get("train.initial_mu")) {
        const auto list = detail::to_list("train.initial_mu", *v);
        if (list.size() != kNumServers) throw ConfigInvalid("train.initial_mu needs five rates");
        std::copy(list.begin(), list.end(), cfg.train.initial.mu.begin());
    }
    const auto b0 = num("train.initial_beta");
    const auto g0 = num("train.initial_gamma");
    if (b0.has_value() != g0.has_value()) throw ConfigInvalid("train.initial_beta and train.initial_gamma go together");
    if (b0) cfg.train.initial_params = GspParams{*b0, *g0};

    if (auto v = get("output.dir")) cfg.output.dir = *v;
    if (auto v = get("output.format")) cfg.output.format = parse_format(*v);
    if (auto v = get("output.baseline")) cfg.output.baseline = *v;
    if (auto v = num("output.baseline_mean")) cfg.output.baseline_mean = *v;

    validate(cfg);
    return cfg;
}

inline RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigInvalid("cannot open config file " + path.string());
    return parse_config(in);
}

}  // namespace gsp
