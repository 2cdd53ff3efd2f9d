#pragma once

// Lyapunov drift of V(x) = sum_p Q_p(x)^2, sampled drift certificates and
// cross-policy comparison tables.

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <ranges>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "gsp/error.hpp"
#include "gsp/network.hpp"
#include "gsp/plq.hpp"
#include "gsp/policy.hpp"

namespace gsp {

inline double lyapunov_v(const TrafficState& x, double beta) {
    double v = 0.0;
    for (double q : q_values(x, beta)) v += q * q;
    return v;
}

// State after one class-`cls` job leaves its server: it joins the next
// class on its path or leaves the network.
inline TrafficState after_service(TrafficState x, int cls) {
    x.decrement(cls);
    const auto path = topology::hops(topology::kClassPath[cls]);
    const int hop = topology::kClassHop[cls];
    if (hop + 1 < path.length) x.increment(path[hop + 1].cls);
    return x;
}

inline TrafficState after_arrival(TrafficState x, PathId p) {
    x.increment(topology::hops(p)[0].cls);
    return x;
}

struct Transition {
    enum class Kind { arrival, service };
    Kind kind = Kind::arrival;
    PathId path = PathId::P12;  // arrivals
    int server = 0;             // services
    int cls = -1;
    double rate = 0.0;
    double delta_v = 0.0;

    double contribution() const { return rate * delta_v; }
};

struct DriftReport {
    TrafficState x;
    std::vector<PathId> routes;                         // P*, each taken with equal probability
    std::array<std::vector<int>, kNumServers> served;   // candidate classes per server
    std::vector<Transition> transitions;
    double drift = 0.0;                                 // job^2 / sec
};

// Exact generator applied to V; ties in routing and scheduling are averaged
// uniformly rather than sampled.
template <DecisionSetPolicy P>
DriftReport generator_drift(const TrafficState& x, const NetworkSpec& spec, const P& policy, double beta) {
    DriftReport r;
    r.x = x;
    const double v0 = lyapunov_v(x, beta);
    if (spec.arrival_rate() > 0.0) {
        r.routes = policy.route_candidates(x);
        const double share = spec.arrival_rate() / static_cast<double>(r.routes.size());
        for (PathId p : r.routes) {
            Transition t;
            t.kind = Transition::Kind::arrival;
            t.path = p;
            t.cls = topology::hops(p)[0].cls;
            t.rate = share;
            t.delta_v = lyapunov_v(after_arrival(x, p), beta) - v0;
            r.transitions.push_back(t);
        }
    }
    for (int n = 1; n <= kNumServers; ++n) {
        r.served[n - 1] = policy.schedule_candidates(n, x);
        if (r.served[n - 1].empty()) continue;
        const double share = spec.service_rate(n) / static_cast<double>(r.served[n - 1].size());
        for (int c : r.served[n - 1]) {
            Transition t;
            t.kind = Transition::Kind::service;
            t.server = n;
            t.cls = c;
            t.rate = share;
            t.delta_v = lyapunov_v(after_service(x, c), beta) - v0;
            r.transitions.push_back(t);
        }
    }
    for (const auto& t : r.transitions) r.drift += t.contribution();
    return r;
}

// GSP with the true rates as the controller's belief.
inline DriftReport generator_drift(const TrafficState& x, const GspParams& params, const NetworkSpec& spec) {
    return generator_drift(x, spec, GspPolicy(params, spec.service_rates()), params.beta);
}

struct SamplerConfig {
    std::vector<TrafficState::Count> shells{10, 50, 200, 1000};
    int per_shell = 2000;
    std::uint64_t seed = 1;
};

// Uniform over the compositions of `total` into kNumClasses non-negative parts.
inline TrafficState sample_composition(TrafficState::Count total, Rng& rng) {
    if (total < 0 || total > std::numeric_limits<int>::max() - kNumClasses)
        throw std::invalid_argument("shell norm out of range");
    std::array<int, kNumClasses - 1> bars{};
    std::ranges::sample(std::views::iota(0, static_cast<int>(total) + kNumClasses - 1), bars.begin(),
                        kNumClasses - 1, rng);
    std::ranges::sort(bars);
    std::array<TrafficState::Count, kNumClasses> x{};
    TrafficState::Count prev = -1;
    for (int i = 0; i < kNumClasses - 1; ++i) {
        x[i] = bars[i] - prev - 1;
        prev = bars[i];
    }
    x[kNumClasses - 1] = total + kNumClasses - 2 - prev;
    return TrafficState(x);
}

struct DriftSample {
    TrafficState x;
    TrafficState::Count norm = 0;
    double drift = 0.0;
    BottleneckCombo combo;
};

struct ShellSummary {
    TrafficState::Count norm = 0;
    int count = 0;
    double max_drift = -std::numeric_limits<double>::infinity();
    double min_drift = std::numeric_limits<double>::infinity();
    int non_negative = 0;
};

struct DriftCertificate {
    // drift <= -epsilon_hat * |x|_1 + c_hat over every sample.
    double epsilon_hat = 0.0;
    double c_hat = 0.0;
    std::vector<DriftSample> violations;  // non-negative drift on the largest shell
    std::vector<ShellSummary> shells;
    std::vector<DriftSample> samples;
};

// epsilon_hat is the smallest normalized decay -drift/|x|_1 on the largest
// shell, so the bound is tight there; c_hat is the least offset that makes
// the bound hold on every sample.
inline DriftCertificate certify_drift(const NetworkSpec& spec, const GspParams& params, const SamplerConfig& cfg = {}) {
    const FeasibleRegion region = feasible_region(spec);
    if (!region.contains(params)) {
        std::ostringstream os;
        os << "(beta, gamma) = (" << params.beta << ", " << params.gamma << ") lies outside the stability region";
        throw InfeasibleParams(os.str());
    }
    if (cfg.shells.empty() || cfg.per_shell <= 0) throw ConfigInvalid("drift sampler needs shells and samples");
    const GspPolicy policy(params, spec.service_rates());
    const auto largest = *std::max_element(cfg.shells.begin(), cfg.shells.end());
    Rng rng(cfg.seed);
    DriftCertificate cert;
    for (auto norm : cfg.shells) {
        ShellSummary s;
        s.norm = norm;
        for (int i = 0; i < cfg.per_shell; ++i) {
            DriftSample d;
            d.x = sample_composition(norm, rng);
            d.norm = norm;
            d.drift = generator_drift(d.x, spec, policy, params.beta).drift;
            d.combo = bottlenecks(d.x, params.beta);
            ++s.count;
            s.max_drift = std::max(s.max_drift, d.drift);
            s.min_drift = std::min(s.min_drift, d.drift);
            if (d.drift >= 0.0) {
                ++s.non_negative;
                if (norm == largest) cert.violations.push_back(d);
            }
            cert.samples.push_back(std::move(d));
        }
        cert.shells.push_back(s);
    }
    double eps = std::numeric_limits<double>::infinity();
    for (const auto& d : cert.samples) {
        if (d.norm == largest && d.norm > 0) eps = std::min(eps, -d.drift / static_cast<double>(d.norm));
    }
    cert.epsilon_hat = std::isfinite(eps) ? std::max(eps, 0.0) : 0.0;
    for (const auto& d : cert.samples)
        cert.c_hat = std::max(cert.c_hat, d.drift + cert.epsilon_hat * static_cast<double>(d.norm));
    return cert;
}

// Product-form mean system time of FIFO Bernoulli routing:
// (1/lambda) * sum_n rho_n / (1 - rho_n).
inline double jackson_mean_system_time(const NetworkSpec& spec, const BernoulliWeights& w) {
    const auto rho = flow_balance_utilization(spec, w);
    double jobs = 0.0;
    for (double r : rho) {
        if (r >= 1.0) return std::numeric_limits<double>::infinity();
        jobs += r / (1.0 - r);
    }
    return jobs / spec.arrival_rate();
}

struct ComparisonRow {
    std::string name;
    double mean_system_time = 0.0;  // sec
    double nast = 0.0;
};

struct ComparisonTable {
    std::vector<ComparisonRow> rows;
    std::string baseline;
    double baseline_mean = 0.0;

    const ComparisonRow& row(const std::string& name) const {
        for (const auto& r : rows) {
            if (r.name == name) return r;
        }
        throw std::out_of_range("no row named " + name);
    }

    void write_text(std::ostream& os) const {
        os << std::left << std::setw(12) << "policy" << std::right << std::setw(14) << "mean W (s)" << std::setw(8)
           << "NAST" << '\n';
        for (const auto& r : rows) {
            os << std::left << std::setw(12) << r.name << std::right << std::fixed << std::setprecision(2)
               << std::setw(14) << r.mean_system_time << std::setw(8) << r.nast << '\n';
        }
        os << "baseline: " << baseline << " (" << std::setprecision(2) << baseline_mean << " s)\n";
        os.unsetf(std::ios::fixed);
    }

    void write_csv(std::ostream& os) const {
        os << "policy,mean_system_time,nast\n";
        os.precision(10);
        for (const auto& r : rows) os << r.name << ',' << r.mean_system_time << ',' << r.nast << '\n';
    }
};

using PolicyMeans = std::vector<std::pair<std::string, double>>;

namespace detail {

inline ComparisonTable normalize(const PolicyMeans& results, std::string baseline, double baseline_mean) {
    if (!(baseline_mean > 0.0)) throw ConfigInvalid("baseline mean must be positive");
    ComparisonTable t;
    t.baseline = std::move(baseline);
    t.baseline_mean = baseline_mean;
    for (const auto& [name, mean] : results) {
        if (!(mean > 0.0)) throw ConfigInvalid("mean system time of " + name + " must be positive");
        t.rows.push_back({name, mean, mean / baseline_mean});
    }
    return t;
}

}  // namespace detail

// Normalized by one of the listed policies.
inline ComparisonTable nast(const PolicyMeans& results, const std::string& baseline) {
    for (const auto& [name, mean] : results) {
        if (name == baseline) return detail::normalize(results, baseline, mean);
    }
    throw MissingBaseline("baseline policy '" + baseline + "' is not among the results");
}

// Normalized by an external reference mean.
inline ComparisonTable nast(const PolicyMeans& results, double baseline_mean, std::string label = "external") {
    return detail::normalize(results, std::move(label), baseline_mean);
}

// Normalized by the best (smallest) observed mean.
inline ComparisonTable nast(const PolicyMeans& results) {
    if (results.empty()) throw MissingBaseline("no results to normalize");
    const auto best = std::min_element(results.begin(), results.end(),
                                       [](const auto& a, const auto& b) { return a.second < b.second; });
    return nast(results, best->first);
}

}  // namespace gsp
