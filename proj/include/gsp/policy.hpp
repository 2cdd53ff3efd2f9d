#pragma once

// Routing and scheduling policies consumed by the simulator.
//
// A policy exposes
//   RoutingDecision route(const TrafficState&, Rng&) const;
//   int serve_class(int server, const TrafficState&, const HeadOfLine&, Rng&) const;
// where serve_class returns the class index served at `server` or -1 when
// the server idles. GSP and SSP additionally expose the exact decision sets
// (route_candidates / schedule_candidates) used by the drift analysis.

#include <algorithm>
#include <array>
#include <cmath>
#include <concepts>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "gsp/error.hpp"
#include "gsp/network.hpp"
#include "gsp/plq.hpp"

namespace gsp {

using Rng = std::mt19937_64;

struct RoutingDecision {
    PathId path = PathId::P12;
    // Cost of the chosen path as seen by the policy (gamma_p * Q_p for GSP,
    // path population for SSP); Bernoulli routing has none.
    std::optional<double> cost;

    std::array<double, kNumPaths> arrival_rates(double lambda) const {
        std::array<double, kNumPaths> out{};
        out[index(path)] = lambda;
        return out;
    }
};

// Service rate allotted to each class, same layout as TrafficState.
struct SchedulingDecision {
    std::array<double, kNumClasses> rate{};

    int served_class(int server) const {
        for (int c = 0; c < kNumClasses; ++c) {
            if (topology::kClassServer[c] == server && rate[c] > 0.0) return c;
        }
        return -1;
    }
};

// Time at which the head job of each class joined its queue; +inf if empty.
struct HeadOfLine {
    std::array<double, kNumClasses> since;

    HeadOfLine() { since.fill(std::numeric_limits<double>::infinity()); }
};

namespace detail {

inline constexpr std::array<int, 2> kServer1Classes{0, 1};
inline constexpr std::array<int, 2> kServer5Classes{5, 6};

inline std::span<const int> shared_classes(int server) {
    return server == 1 ? std::span<const int>(kServer1Classes) : std::span<const int>(kServer5Classes);
}

inline bool is_shared(int server) { return server == 1 || server == 5; }

// Class at a single-class server.
inline int sole_class(int server) {
    switch (server) {
        case 2: return 2;
        case 3: return 3;
        case 4: return 4;
    }
    return -1;
}

template <class T>
T pick_uniform(const std::vector<T>& options, Rng& rng) {
    if (options.size() == 1) return options.front();
    std::uniform_int_distribution<std::size_t> dist(0, options.size() - 1);
    return options[dist(rng)];
}

// Indices attaining the minimum (ties within relative 1e-12).
inline std::vector<PathId> argmin_paths(const PathCosts& cost) {
    const double best = *std::min_element(cost.begin(), cost.end());
    std::vector<PathId> out;
    for (PathId p : kAllPaths) {
        if (cost[index(p)] <= best || nearly_equal(cost[index(p)], best)) out.push_back(p);
    }
    return out;
}

// Among `classes`, those whose path score is maximal.
inline std::vector<int> argmax_classes(const std::vector<int>& classes, const PathCosts& score) {
    std::vector<int> out;
    double best = -std::numeric_limits<double>::infinity();
    for (int c : classes) best = std::max(best, score[index(topology::kClassPath[c])]);
    for (int c : classes) {
        double s = score[index(topology::kClassPath[c])];
        if (s >= best || nearly_equal(s, best)) out.push_back(c);
    }
    return out;
}

// Class with the larger score; a fair coin on ties.
inline int larger_or_random(int a, double score_a, int b, double score_b, Rng& rng) {
    if (nearly_equal(score_a, score_b)) return std::uniform_int_distribution<int>(0, 1)(rng) == 0 ? a : b;
    return score_a > score_b ? a : b;
}

inline std::vector<int> nonempty_classes(int server, const TrafficState& x) {
    std::vector<int> out;
    for (int c : shared_classes(server)) {
        if (x[c] > 0) out.push_back(c);
    }
    return out;
}

}  // namespace detail

class GspPolicy {
public:
    // `rates` are the service rates the controller believes in; they only
    // enter through the weight tiers.
    GspPolicy(GspParams params, ServiceRates rates) : params_(params), rates_(rates) {
        if (!(params.beta > 1.0) || !(params.gamma > 1.0)) throw InfeasibleParams("GSP needs beta > 1 and gamma > 1");
    }

    const GspParams& params() const { return params_; }
    const ServiceRates& rates() const { return rates_; }

    // P* = argmin_p gamma_p(B) Q_p(x).
    std::vector<PathId> route_candidates(const TrafficState& x) const {
        return detail::argmin_paths(weighted_costs(x, params_, rates_));
    }

    RoutingDecision route(const TrafficState& x, Rng& rng) const {
        const auto cost = weighted_costs(x, params_, rates_);
        const auto best = detail::argmin_paths(cost);
        const PathId p = detail::pick_uniform(best, rng);
        return {p, cost[index(p)]};
    }

    // Classes that may be served at `server`; more than one only on ties.
    // Servers 1 and 5 prefer classes whose path has its bottleneck there,
    // largest Q first; with no such nonempty class they fall back to the
    // nonempty class with the largest Q.
    std::vector<int> schedule_candidates(int server, const TrafficState& x) const {
        if (!detail::is_shared(server)) {
            const int c = detail::sole_class(server);
            return x[c] > 0 ? std::vector<int>{c} : std::vector<int>{};
        }
        const auto nonempty = detail::nonempty_classes(server, x);
        if (nonempty.empty()) return {};
        const auto q = q_values(x, params_.beta);
        const auto b = bottlenecks(x, params_.beta);
        std::vector<int> designated;
        for (int c : nonempty) {
            if (b[topology::kClassPath[c]] == server) designated.push_back(c);
        }
        return detail::argmax_classes(designated.empty() ? nonempty : designated, q);
    }

    // Same rule as schedule_candidates without allocating; the simulator
    // calls this for every server at every step.
    int serve_class(int server, const TrafficState& x, const HeadOfLine& /*hol*/, Rng& rng) const {
        if (!detail::is_shared(server)) {
            const int c = detail::sole_class(server);
            return x[c] > 0 ? c : -1;
        }
        const auto cls = detail::shared_classes(server);
        const int a = cls[0], b = cls[1];
        if (x[a] == 0) return x[b] > 0 ? b : -1;
        if (x[b] == 0) return a;
        const PathId pa = topology::kClassPath[a], pb = topology::kClassPath[b];
        const auto sa = segments(pa, x, params_.beta), sb = segments(pb, x, params_.beta);
        const bool da = topology::hops(pa)[bottleneck_hop(sa)].server == server;
        const bool db = topology::hops(pb)[bottleneck_hop(sb)].server == server;
        if (da != db) return da ? a : b;
        return detail::larger_or_random(a, *std::max_element(sa.value.begin(), sa.value.begin() + sa.count), b,
                                        *std::max_element(sb.value.begin(), sb.value.begin() + sb.count), rng);
    }

private:
    GspParams params_;
    ServiceRates rates_;
};

// Routes to the path with the fewest jobs; shared servers give priority to
// the class whose path holds more jobs.
class SspPolicy {
public:
    static PathCosts populations(const TrafficState& x) {
        PathCosts phi{};
        for (PathId p : kAllPaths) phi[index(p)] = static_cast<double>(x.path_total(p));
        return phi;
    }

    std::vector<PathId> route_candidates(const TrafficState& x) const {
        return detail::argmin_paths(populations(x));
    }

    RoutingDecision route(const TrafficState& x, Rng& rng) const {
        const auto phi = populations(x);
        const PathId p = detail::pick_uniform(detail::argmin_paths(phi), rng);
        return {p, phi[index(p)]};
    }

    std::vector<int> schedule_candidates(int server, const TrafficState& x) const {
        if (!detail::is_shared(server)) {
            const int c = detail::sole_class(server);
            return x[c] > 0 ? std::vector<int>{c} : std::vector<int>{};
        }
        const auto nonempty = detail::nonempty_classes(server, x);
        if (nonempty.empty()) return {};
        return detail::argmax_classes(nonempty, populations(x));
    }

    int serve_class(int server, const TrafficState& x, const HeadOfLine& /*hol*/, Rng& rng) const {
        if (!detail::is_shared(server)) {
            const int c = detail::sole_class(server);
            return x[c] > 0 ? c : -1;
        }
        const auto cls = detail::shared_classes(server);
        const int a = cls[0], b = cls[1];
        if (x[a] == 0) return x[b] > 0 ? b : -1;
        if (x[b] == 0) return a;
        return detail::larger_or_random(a, static_cast<double>(x.path_total(topology::kClassPath[a])), b,
                                        static_cast<double>(x.path_total(topology::kClassPath[b])), rng);
    }
};

class BernoulliWeights {
public:
    static constexpr double kTolerance = 1e-9;

    explicit BernoulliWeights(std::array<double, kNumPaths> eta) : eta_(eta) {
        double sum = 0.0;
        for (double e : eta_) {
            if (!(e >= 0.0)) throw InvalidWeights("routing probabilities must be non-negative");
            sum += e;
        }
        if (std::abs(sum - 1.0) > kTolerance) throw InvalidWeights("routing probabilities must sum to 1");
    }

    double operator[](PathId p) const { return eta_[index(p)]; }
    const std::array<double, kNumPaths>& values() const { return eta_; }

private:
    std::array<double, kNumPaths> eta_;
};

inline PathId bernoulli_route(const BernoulliWeights& w, Rng& rng) {
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const double u = u01(rng);
    double acc = 0.0;
    for (PathId p : kAllPaths) {
        acc += w[p];
        if (u < acc && w[p] > 0.0) return p;
    }
    // u landed in the rounding slack above the last cumulative sum.
    for (int i = kNumPaths - 1; i >= 0; --i) {
        if (w.values()[i] > 0.0) return kAllPaths[i];
    }
    return PathId::P12;
}

// Per-server utilization lambda * (sum of eta over paths through n) / mu_n.
inline std::array<double, kNumServers> flow_balance_utilization(const NetworkSpec& spec, const BernoulliWeights& w) {
    std::array<double, kNumServers> rho{};
    for (PathId p : kAllPaths) {
        for (const auto& h : topology::hops(p)) rho[h.server - 1] += spec.arrival_rate() * w[p];
    }
    for (int n = 1; n <= kNumServers; ++n) rho[n - 1] /= spec.service_rate(n);
    return rho;
}

// State-independent routing; shared servers work first-come-first-served
// across classes.
class BernoulliPolicy {
public:
    explicit BernoulliPolicy(BernoulliWeights w) : weights_(w) {}

    const BernoulliWeights& weights() const { return weights_; }

    RoutingDecision route(const TrafficState& /*x*/, Rng& rng) const { return {bernoulli_route(weights_, rng), {}}; }

    int serve_class(int server, const TrafficState& x, const HeadOfLine& hol, Rng& rng) const {
        if (!detail::is_shared(server)) {
            const int c = detail::sole_class(server);
            return x[c] > 0 ? c : -1;
        }
        std::vector<int> oldest;
        double best = std::numeric_limits<double>::infinity();
        for (int c : detail::shared_classes(server)) {
            if (x[c] == 0) continue;
            if (hol.since[c] < best) {
                best = hol.since[c];
                oldest.assign(1, c);
            } else if (hol.since[c] == best) {
                oldest.push_back(c);
            }
        }
        return oldest.empty() ? -1 : detail::pick_uniform(oldest, rng);
    }

private:
    BernoulliWeights weights_;
};

template <class P>
concept Policy = requires(const P& p, const TrafficState& x, const HeadOfLine& hol, Rng& rng, int server) {
    { p.route(x, rng) } -> std::same_as<RoutingDecision>;
    { p.serve_class(server, x, hol, rng) } -> std::convertible_to<int>;
};

template <class P>
concept DecisionSetPolicy = Policy<P> && requires(const P& p, const TrafficState& x, int server) {
    { p.route_candidates(x) } -> std::same_as<std::vector<PathId>>;
    { p.schedule_candidates(server, x) } -> std::same_as<std::vector<int>>;
};

// Full service-rate vector; shared-server ties are resolved with `rng`.
template <Policy P>
SchedulingDecision schedule(const P& policy, const NetworkSpec& spec, const TrafficState& x, const HeadOfLine& hol,
                            Rng& rng) {
    SchedulingDecision d;
    for (int n = 1; n <= kNumServers; ++n) {
        const int c = policy.serve_class(n, x, hol, rng);
        if (c >= 0) d.rate[c] = spec.service_rate(n);
    }
    return d;
}

// Runtime-selected policy ("gsp", "ssp", "ob").
class AnyPolicy {
public:
    using Variant = std::variant<GspPolicy, SspPolicy, BernoulliPolicy>;

    AnyPolicy(GspPolicy p) : v_(std::move(p)) {}
    AnyPolicy(SspPolicy p) : v_(p) {}
    AnyPolicy(BernoulliPolicy p) : v_(std::move(p)) {}

    std::string name() const {
        switch (v_.index()) {
            case 0: return "gsp";
            case 1: return "ssp";
            default: return "ob";
        }
    }

    const Variant& variant() const { return v_; }

    RoutingDecision route(const TrafficState& x, Rng& rng) const {
        return std::visit([&](const auto& p) { return p.route(x, rng); }, v_);
    }

    int serve_class(int server, const TrafficState& x, const HeadOfLine& hol, Rng& rng) const {
        return std::visit([&](const auto& p) { return p.serve_class(server, x, hol, rng); }, v_);
    }

private:
    Variant v_;
};

}  // namespace gsp
