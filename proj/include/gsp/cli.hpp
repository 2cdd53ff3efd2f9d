#pragma once

// Subcommands behind tools/gsp: each takes a validated RunConfig, writes its
// artifacts under cfg.output.dir, prints a report in the requested format and
// returns a process exit code.

#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "gsp/analysis.hpp"
#include "gsp/config.hpp"
#include "gsp/error.hpp"
#include "gsp/learn.hpp"
#include "gsp/network.hpp"
#include "gsp/policy.hpp"
#include "gsp/sim.hpp"

namespace gsp {

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int failure = 1;
inline constexpr int config_invalid = 2;
inline constexpr int not_stabilizable = 3;
inline constexpr int infeasible_params = 4;
inline constexpr int drift_violation = 5;
inline constexpr int usage = 64;
}  // namespace exit_code

inline constexpr int kSchemaVersion = 1;

using Json = nlohmann::ordered_json;

namespace detail {

inline Json header(const std::string& command) {
    Json j;
    j["schema_version"] = kSchemaVersion;
    j["command"] = command;
    return j;
}

inline Json to_json(const NetworkSpec& spec) {
    Json j;
    j["lambda"] = spec.arrival_rate();
    j["mu"] = spec.service_rates();
    return j;
}

inline Json to_json(const RateEstimates& e) {
    Json j;
    j["lambda"] = e.lambda;
    j["mu"] = e.mu;
    return j;
}

inline Json to_json(const GspParams& p) { return Json{{"beta", p.beta}, {"gamma", p.gamma}}; }

inline std::ofstream open_output(const std::filesystem::path& dir, const std::string& name) {
    std::filesystem::create_directories(dir);
    std::ofstream f(dir / name);
    if (!f) throw std::runtime_error("cannot write " + (dir / name).string());
    return f;
}

inline void write_json_file(const std::filesystem::path& dir, const std::string& name, const Json& j) {
    auto f = open_output(dir, name);
    f << j.dump(2) << '\n';
}

inline std::string join(const std::vector<int>& v, const char* sep) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? sep : "") + std::to_string(v[i]);
    return s;
}

// Supplied GSP parameters, or the result of training on the configured network.
inline GspParams gsp_params(const RunConfig& cfg, Json* trained = nullptr) {
    if (cfg.policy.params) {
        const FeasibleRegion region = feasible_region(cfg.network);
        if (!region.contains(*cfg.policy.params)) {
            std::ostringstream os;
            os << "(beta, gamma) = (" << cfg.policy.params->beta << ", " << cfg.policy.params->gamma
               << ") lies outside the stability region (beta < " << region.beta_upper() << ")";
            throw InfeasibleParams(os.str());
        }
        return *cfg.policy.params;
    }
    const PiState st = policy_iteration(cfg.network, cfg.sim, cfg.train);
    if (trained) {
        (*trained)["iterations"] = st.iteration();
        (*trained)["converged"] = st.converged;
    }
    return st.params();
}

inline BernoulliWeights ob_weights(const RunConfig& cfg, Json* searched = nullptr) {
    if (cfg.policy.eta) return BernoulliWeights(*cfg.policy.eta);
    SimConfig s = cfg.sim;
    s.horizon = cfg.policy.search_horizon;
    s.warmup = std::min(s.warmup, 0.5 * s.horizon);
    const auto best = optimize_bernoulli(cfg.network, s, cfg.policy.grid_step);
    if (searched) {
        (*searched)["evaluated"] = best.evaluated;
        (*searched)["skipped"] = best.skipped;
        (*searched)["search_mean_system_time"] = best.mean_system_time;
    }
    return best.weights;
}

inline AnyPolicy make_policy(const std::string& name, const RunConfig& cfg, Json& info) {
    if (name == "gsp") {
        Json trained;
        const GspParams p = gsp_params(cfg, &trained);
        info["params"] = to_json(p);
        if (!trained.empty()) info["training"] = trained;
        return GspPolicy(p, cfg.network.service_rates());
    }
    if (name == "ssp") return SspPolicy();
    Json searched;
    const BernoulliWeights w = ob_weights(cfg, &searched);
    info["eta"] = w.values();
    if (!searched.empty()) info["search"] = searched;
    return BernoulliPolicy(w);
}

inline EpisodeData run_any(const NetworkSpec& spec, const AnyPolicy& policy, const SimConfig& sim) {
    return std::visit([&](const auto& p) { return run_episode(spec, p, sim); }, policy.variant());
}

}  // namespace detail

inline int cmd_stability(const RunConfig& cfg, std::ostream& out) {
    const auto sc = stability_constants(cfg.network);
    const FeasibleRegion region(sc.m, sc.delta_g);
    const auto& fmt = cfg.output.format;
    if (fmt == OutputFormat::json) {
        Json j = detail::header("stability");
        j["network"] = detail::to_json(cfg.network);
        Json cuts = Json::array();
        for (const auto& c : sc.per_cut_g)
            cuts.push_back({{"servers", c.cut.servers}, {"capacity", c.cut.capacity}, {"g1", c.g1}, {"g2", c.g2},
                            {"g", c.g}});
        j["cuts"] = cuts;
        j["min_cut_capacity"] = sc.min_cut_capacity;
        j["m"] = sc.m;
        j["delta_g"] = sc.delta_g;
        j["depths"] = sc.depths;
        j["region"] = {{"exponent", region.exponent()}, {"beta_upper", region.beta_upper()}};
        out << j.dump(2) << '\n';
    } else if (fmt == OutputFormat::csv) {
        out << "servers,capacity,g1,g2,g\n";
        for (const auto& c : sc.per_cut_g)
            out << detail::join(c.cut.servers, " ") << ',' << c.cut.capacity << ',' << c.g1 << ',' << c.g2 << ','
                << c.g << '\n';
    } else {
        out << "minimal cuts:\n";
        for (const auto& c : sc.per_cut_g)
            out << "  {" << detail::join(c.cut.servers, ",") << "}  capacity " << c.cut.capacity << "  g " << c.g
                << '\n';
        out << std::setprecision(6);
        out << "min-cut capacity: " << sc.min_cut_capacity << "  (lambda = " << cfg.network.arrival_rate() << ")\n";
        out << "m: " << std::fixed << std::setprecision(2) << sc.m << '\n';
        out.unsetf(std::ios::fixed);
        out << "delta_G: " << sc.delta_g << '\n';
        out << "feasible region: 1 < gamma^" << region.exponent() << " < beta^" << region.exponent() << " < m"
            << "  (beta in (1, " << std::setprecision(5) << region.beta_upper() << "))\n";
    }
    return exit_code::ok;
}

inline int cmd_simulate(const RunConfig& cfg, std::ostream& out) {
    Json summary = detail::header("simulate");
    Json info;
    const AnyPolicy policy = detail::make_policy(cfg.policy.name, cfg, info);
    const EpisodeData data = detail::run_any(cfg.network, policy, cfg.sim);

    {
        auto f = detail::open_output(cfg.output.dir, "jobs.csv");
        write_jobs_csv(f, data);
    }
    summary["policy"] = policy.name();
    for (auto& [k, v] : info.items()) summary[k] = v;
    summary["seed"] = cfg.sim.seed;
    summary["mode"] = mode_name(cfg.sim.mode);
    summary["horizon"] = cfg.sim.horizon;
    summary["warmup"] = cfg.sim.warmup;
    summary["network"] = detail::to_json(cfg.network);
    summary["completed_jobs"] = data.completed_jobs.size();
    summary["mean_system_time"] =
        data.completed_jobs.empty() ? Json(nullptr) : Json(average_system_time(data));
    summary["time_average_queue"] = time_average_queue(data);
    summary["utilization"] = utilization(data);
    summary["arrivals"] = data.arrivals;
    summary["completions"] = data.completions;
    summary["censored"] = data.censored;
    detail::write_json_file(cfg.output.dir, "summary.json", summary);

    if (cfg.output.format == OutputFormat::json) {
        out << summary.dump(2) << '\n';
    } else if (cfg.output.format == OutputFormat::csv) {
        write_jobs_csv(out, data);
    } else {
        out << "policy " << policy.name() << ", seed " << cfg.sim.seed << ", " << mode_name(cfg.sim.mode) << '\n';
        out << "completed jobs: " << data.completed_jobs.size() << "  censored: " << data.censored << '\n';
        if (!data.completed_jobs.empty())
            out << "mean system time: " << std::fixed << std::setprecision(3) << average_system_time(data) << " s\n";
        out << "time-average queue: " << std::fixed << std::setprecision(3) << time_average_queue(data) << '\n';
        out.unsetf(std::ios::fixed);
        out << "wrote " << (cfg.output.dir / "jobs.csv").string() << '\n';
    }
    return exit_code::ok;
}

inline void write_history_csv(std::ostream& os, const PiState& st) {
    os << "iteration,beta,gamma,lambda_hat,mu1_hat,mu2_hat,mu3_hat,mu4_hat,mu5_hat,m_hat,delta_g,sse,mean_system_time,"
          "rows\n";
    os.precision(10);
    for (const auto& r : st.history()) {
        os << r.iteration << ',' << r.beta << ',' << r.gamma << ',' << r.estimates.lambda;
        for (double m : r.estimates.mu) os << ',' << m;
        os << ',' << r.m_hat << ',' << r.delta_g << ',';
        if (!std::isnan(r.sse)) os << r.sse;
        os << ',';
        if (!std::isnan(r.mean_system_time)) os << r.mean_system_time;
        os << ',' << r.rows << '\n';
    }
}

inline int cmd_train(const RunConfig& cfg, std::ostream& out) {
    const PiState st = policy_iteration(cfg.network, cfg.sim, cfg.train);
    {
        auto f = detail::open_output(cfg.output.dir, "history.csv");
        write_history_csv(f, st);
    }
    Json j = detail::header("train");
    j["seed"] = cfg.sim.seed;
    j["params"] = detail::to_json(st.params());
    j["converged"] = st.converged;
    j["iterations"] = st.iteration();
    j["estimates"] = detail::to_json(st.estimates());
    j["m_hat"] = st.last().m_hat;
    j["delta_g"] = st.last().delta_g;
    detail::write_json_file(cfg.output.dir, "params.json", j);

    if (cfg.output.format == OutputFormat::json) {
        out << j.dump(2) << '\n';
    } else if (cfg.output.format == OutputFormat::csv) {
        write_history_csv(out, st);
    } else {
        out << std::setprecision(6);
        for (const auto& r : st.history())
            out << "iter " << std::setw(2) << r.iteration << "  beta " << r.beta << "  gamma " << r.gamma
                << "  m_hat " << r.m_hat << '\n';
        out << (st.converged ? "converged" : "not converged") << " after " << st.iteration() << " iterations: beta "
            << st.params().beta << ", gamma " << st.params().gamma << '\n';
    }
    return exit_code::ok;
}

// Mean system time of each policy over cfg.replications seeds shared by all
// policies, normalized per cfg.output.
inline int cmd_compare(const RunConfig& cfg, std::ostream& out) {
    Json j = detail::header("compare");
    PolicyMeans means;
    Json per_policy = Json::object();
    for (const std::string name : {"gsp", "ssp", "ob"}) {
        Json info;
        const AnyPolicy policy = detail::make_policy(name, cfg, info);
        Json runs = Json::array();
        double total = 0.0;
        for (int r = 0; r < cfg.replications; ++r) {
            SimConfig s = cfg.sim;
            s.seed = episode_seed(cfg.sim.seed, 1000 + static_cast<std::uint64_t>(r));
            const double w = average_system_time(detail::run_any(cfg.network, policy, s));
            runs.push_back(w);
            total += w;
        }
        info["runs"] = runs;
        per_policy[name] = info;
        means.emplace_back(name, total / cfg.replications);
    }
    ComparisonTable table = cfg.output.baseline_mean ? nast(means, *cfg.output.baseline_mean)
                            : cfg.output.baseline   ? nast(means, *cfg.output.baseline)
                                                    : nast(means);
    {
        auto f = detail::open_output(cfg.output.dir, "comparison.csv");
        table.write_csv(f);
    }
    j["seed"] = cfg.sim.seed;
    j["replications"] = cfg.replications;
    j["horizon"] = cfg.sim.horizon;
    j["baseline"] = table.baseline;
    j["baseline_mean"] = table.baseline_mean;
    Json rows = Json::array();
    for (const auto& r : table.rows)
        rows.push_back({{"policy", r.name}, {"mean_system_time", r.mean_system_time}, {"nast", r.nast}});
    j["rows"] = rows;
    j["policies"] = per_policy;
    detail::write_json_file(cfg.output.dir, "comparison.json", j);

    if (cfg.output.format == OutputFormat::json)
        out << j.dump(2) << '\n';
    else if (cfg.output.format == OutputFormat::csv)
        table.write_csv(out);
    else
        table.write_text(out);
    return exit_code::ok;
}

inline void write_drift_csv(std::ostream& os, const DriftCertificate& cert) {
    os << "norm,drift,b12,b135,b45,x1_12,x1_135,x2_12,x3_135,x4_45,x5_135,x5_45\n";
    os.precision(10);
    for (const auto& d : cert.samples) {
        os << d.norm << ',' << d.drift;
        for (int b : d.combo.server) os << ',' << b;
        for (auto v : d.x.values()) os << ',' << v;
        os << '\n';
    }
}

// Supplied parameters, else the midpoint of the region for the true rates.
inline int cmd_drift_check(const RunConfig& cfg, std::ostream& out) {
    const GspParams params = cfg.policy.params ? *cfg.policy.params : feasible_region(cfg.network).midpoint();
    SamplerConfig sampler;
    sampler.shells = cfg.drift.shells;
    sampler.per_shell = cfg.drift.per_shell;
    sampler.seed = cfg.sim.seed;
    const DriftCertificate cert = certify_drift(cfg.network, params, sampler);
    {
        auto f = detail::open_output(cfg.output.dir, "drift.csv");
        write_drift_csv(f, cert);
    }
    Json j = detail::header("drift-check");
    j["seed"] = cfg.sim.seed;
    j["params"] = detail::to_json(params);
    j["epsilon_hat"] = cert.epsilon_hat;
    j["c_hat"] = cert.c_hat;
    Json shells = Json::array();
    for (const auto& s : cert.shells)
        shells.push_back({{"norm", s.norm}, {"samples", s.count}, {"min_drift", s.min_drift},
                          {"max_drift", s.max_drift}, {"non_negative", s.non_negative}});
    j["shells"] = shells;
    Json violations = Json::array();
    for (const auto& v : cert.violations)
        violations.push_back({{"x", v.x.values()}, {"norm", v.norm}, {"drift", v.drift}});
    j["violations"] = violations;
    detail::write_json_file(cfg.output.dir, "certificate.json", j);

    if (cfg.output.format == OutputFormat::json) {
        out << j.dump(2) << '\n';
    } else if (cfg.output.format == OutputFormat::csv) {
        write_drift_csv(out, cert);
    } else {
        out << "beta " << params.beta << ", gamma " << params.gamma << '\n';
        out << std::left << std::setw(8) << "|x|_1" << std::right << std::setw(10) << "samples" << std::setw(16)
            << "max drift" << std::setw(14) << "drift >= 0\n";
        for (const auto& s : cert.shells)
            out << std::left << std::setw(8) << s.norm << std::right << std::setw(10) << s.count << std::setw(16)
                << s.max_drift << std::setw(13) << s.non_negative << '\n';
        out << "epsilon_hat " << cert.epsilon_hat << ", C_hat " << cert.c_hat << '\n';
        out << "violations on the largest shell: " << cert.violations.size() << '\n';
        for (const auto& v : cert.violations) {
            out << "  x = (";
            for (int c = 0; c < kNumClasses; ++c) out << (c ? "," : "") << v.x[c];
            out << ")  drift " << v.drift << '\n';
        }
    }
    return cert.violations.empty() ? exit_code::ok : exit_code::drift_violation;
}

using Command = std::function<int(const RunConfig&, std::ostream&)>;

inline const std::map<std::string, Command>& commands() {
    static const std::map<std::string, Command> table{
        {"stability", cmd_stability}, {"simulate", cmd_simulate}, {"train", cmd_train},
        {"compare", cmd_compare},     {"drift-check", cmd_drift_check},
    };
    return table;
}

// Runs `command`, turning library errors into exit codes with a message on `err`.
inline int run_command(const std::string& command, const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    auto it = commands().find(command);
    if (it == commands().end()) {
        err << "error: unknown command '" << command << "'\n";
        return exit_code::usage;
    }
    try {
        return it->second(cfg, out);
    } catch (const NotStabilizable& e) {
        err << "not stabilizable: " << e.what() << '\n';
        return exit_code::not_stabilizable;
    } catch (const InfeasibleParams& e) {
        err << "infeasible parameters: " << e.what() << '\n';
        return exit_code::infeasible_params;
    } catch (const ConfigInvalid& e) {
        err << "invalid configuration: " << e.what() << '\n';
        return exit_code::config_invalid;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return exit_code::failure;
    }
}

}  // namespace gsp
