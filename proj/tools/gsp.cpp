// gsp: stability constants, simulation, training, comparison and drift
// checks for the bridge network.

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "gsp/cli.hpp"

namespace {

constexpr const char* kConfigHelp = R"(Config file (INI), every key optional:
  [network] lambda, mu1..mu5                     defaults 0.2; 0.15 0.1 0.25 0.15 0.2
  [policy]  name = gsp|ssp|ob                    default gsp (simulate)
            beta, gamma                          trained when unset
            eta = p12, p135, p45                 grid-searched when unset
            grid_step = 0.02, search_horizon = 1e5
  [sim]     mode = bernoulli_dt|event_driven     default bernoulli_dt
            dt = 0.1, horizon = 1e5, warmup = 0, max_epochs = 0, seed = 1
            replications = 1 (compare)
            drift_shells = 10,50,200,1000, drift_samples = 2000
  [train]   episode_length = 1e5, theta_beta = theta_gamma = 1e-3, max_iters = 50
            estimate_rates = true, confidence_z = 3
            initial_lambda = 0.1, initial_mu = 0.5,0.5,0.5,0.5,0.5
            initial_beta, initial_gamma          region midpoint when unset
  [output]  dir = gsp-out, format = table|csv|json
            baseline = gsp|ssp|ob, baseline_mean (sec); best policy when unset

Exit codes: 0 ok, 1 other error, 2 invalid config, 3 not stabilizable,
4 infeasible (beta, gamma), 5 drift-check found violations.)";

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"GSP routing for the bridge queueing network"};
    app.footer(kConfigHelp);
    app.require_subcommand(1, 1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    std::optional<std::string> format;
    std::optional<double> baseline_mean;

    const std::vector<std::pair<std::string, std::string>> subs{
        {"stability", "cuts, m, delta_G and the feasible (beta, gamma) region"},
        {"simulate", "run one policy; writes jobs.csv and summary.json"},
        {"train", "GSP policy iteration; writes history.csv and params.json"},
        {"compare", "GSP vs SSP vs OB mean system time and NAST; writes comparison.csv/json"},
        {"drift-check", "sampled Lyapunov drift certificate; writes drift.csv and certificate.json"},
    };
    for (const auto& [name, desc] : subs) {
        auto* sub = app.add_subcommand(name, desc);
        sub->add_option("--config", config_path, "config file")->check(CLI::ExistingFile);
        sub->add_option("--seed", seed, "base seed (overrides [sim] seed)");
        sub->add_option("--out", out_dir, "output directory (overrides [output] dir)");
        sub->add_option("--format", format, "table, csv or json")->check(CLI::IsMember({"table", "csv", "json"}));
        sub->add_option("--baseline-mean", baseline_mean, "external baseline mean system time in seconds");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : gsp::exit_code::usage;
    }
    const std::string command = app.get_subcommands().front()->get_name();

    gsp::RunConfig cfg;
    try {
        if (!config_path.empty()) cfg = gsp::load_config(config_path);
        if (seed) cfg.sim.seed = *seed;
        if (out_dir) cfg.output.dir = *out_dir;
        if (format) cfg.output.format = gsp::parse_format(*format);
        if (baseline_mean) cfg.output.baseline_mean = *baseline_mean;
        gsp::validate(cfg);
    } catch (const gsp::ConfigInvalid& e) {
        std::cerr << "invalid configuration: " << e.what() << '\n';
        return gsp::exit_code::config_invalid;
    }
    return gsp::run_command(command, cfg, std::cout, std::cerr);
}
