#pragma once

// Bridge network topology and the stability constants derived from it.
//
//            +--> 1 --> 2 ---------+
//   origin --|    |                |--> destination
//            |    +--> 3 --> 5 ----+
//            +--> 4 -------^
//
// Servers are numbered 1..5. Paths are (1,2), (1,3,5) and (4,5).

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "gsp/error.hpp"

namespace gsp {

inline constexpr int kNumServers = 5;
inline constexpr int kNumPaths = 3;
inline constexpr int kNumClasses = 7;

enum class PathId : int { P12 = 0, P135 = 1, P45 = 2 };

inline constexpr std::array<PathId, kNumPaths> kAllPaths{PathId::P12, PathId::P135, PathId::P45};

inline constexpr int index(PathId p) { return static_cast<int>(p); }

inline const char* path_name(PathId p) {
    switch (p) {
        case PathId::P12: return "12";
        case PathId::P135: return "135";
        case PathId::P45: return "45";
    }
    return "?";
}

// Per-server service rates, indexed by server - 1.
using ServiceRates = std::array<double, kNumServers>;

namespace topology {

inline constexpr int kOrigin = 0;
inline constexpr int kSink = kNumServers + 1;
inline constexpr int kNumNodes = kNumServers + 2;

// Class index layout of the traffic state:
//   [x1^12, x1^135, x2^12, x3^135, x4^45, x5^135, x5^45]
struct Hop {
    int server;
    int cls;
};

inline constexpr std::array<Hop, 2> kPath12{{{1, 0}, {2, 2}}};
inline constexpr std::array<Hop, 3> kPath135{{{1, 1}, {3, 3}, {5, 5}}};
inline constexpr std::array<Hop, 2> kPath45{{{4, 4}, {5, 6}}};

struct PathView {
    const Hop* hops;
    int length;

    constexpr const Hop* begin() const { return hops; }
    constexpr const Hop* end() const { return hops + length; }
    constexpr const Hop& operator[](int i) const { return hops[i]; }
    constexpr const Hop& back() const { return hops[length - 1]; }
};

inline constexpr PathView hops(PathId p) {
    switch (p) {
        case PathId::P12: return {kPath12.data(), 2};
        case PathId::P135: return {kPath135.data(), 3};
        case PathId::P45: return {kPath45.data(), 2};
    }
    return {nullptr, 0};
}

// Path and server of each class.
inline constexpr std::array<PathId, kNumClasses> kClassPath{
    PathId::P12, PathId::P135, PathId::P12, PathId::P135, PathId::P45, PathId::P135, PathId::P45};
inline constexpr std::array<int, kNumClasses> kClassServer{1, 1, 2, 3, 4, 5, 5};
// Position of each class along its path.
inline constexpr std::array<int, kNumClasses> kClassHop{0, 0, 1, 1, 0, 2, 1};

// Directed adjacency over nodes {origin, 1..5, sink}.
inline const std::array<std::vector<int>, kNumNodes>& adjacency() {
    static const std::array<std::vector<int>, kNumNodes> adj{{
        {1, 4},   // origin
        {2, 3},   // 1
        {kSink},  // 2
        {5},      // 3
        {5},      // 4
        {kSink},  // 5
        {},       // sink
    }};
    return adj;
}

// Whether the destination is reachable from the origin with the servers in
// `removed` (bit n-1 set for server n) taken out.
inline bool origin_reaches_sink(unsigned removed) {
    const auto& adj = adjacency();
    std::array<bool, kNumNodes> seen{};
    std::vector<int> stack{kOrigin};
    seen[kOrigin] = true;
    while (!stack.empty()) {
        int u = stack.back();
        stack.pop_back();
        if (u == kSink) return true;
        for (int v : adj[u]) {
            if (seen[v]) continue;
            if (v >= 1 && v <= kNumServers && (removed >> (v - 1) & 1u)) continue;
            seen[v] = true;
            stack.push_back(v);
        }
    }
    return false;
}

}  // namespace topology

class NetworkSpec {
public:
    NetworkSpec(ServiceRates service_rates, double arrival_rate)
        : service_rates_(service_rates), arrival_rate_(arrival_rate) {
        for (int n = 1; n <= kNumServers; ++n) {
            double mu = service_rates_[n - 1];
            if (!(mu > 0.0) || !std::isfinite(mu)) {
                throw ConfigInvalid("service rate of server " + std::to_string(n) + " must be positive");
            }
        }
        // Zero arrivals are allowed for drain-only simulations; negative never.
        if (!(arrival_rate_ >= 0.0) || !std::isfinite(arrival_rate_)) {
            throw ConfigInvalid("arrival rate must be non-negative");
        }
    }

    // mu = (0.15, 0.1, 0.25, 0.15, 0.2), lambda = 0.2.
    static NetworkSpec reference() { return NetworkSpec({0.15, 0.1, 0.25, 0.15, 0.2}, 0.2); }

    double service_rate(int server) const { return service_rates_.at(server - 1); }
    const ServiceRates& service_rates() const { return service_rates_; }
    double arrival_rate() const { return arrival_rate_; }

    NetworkSpec with_arrival_rate(double lambda) const { return NetworkSpec(service_rates_, lambda); }
    NetworkSpec with_service_rates(const ServiceRates& mu) const { return NetworkSpec(mu, arrival_rate_); }

private:
    ServiceRates service_rates_;
    double arrival_rate_;
};

struct Cut {
    std::vector<int> servers;  // sorted ascending
    double capacity = 0.0;

    unsigned mask() const {
        unsigned m = 0;
        for (int n : servers) m |= 1u << (n - 1);
        return m;
    }
};

inline std::vector<int> servers_of(unsigned mask) {
    std::vector<int> out;
    for (int n = 1; n <= kNumServers; ++n) {
        if (mask >> (n - 1) & 1u) out.push_back(n);
    }
    return out;
}

// Minimal vertex cuts separating origin from destination, ordered by size
// then lexicographically. Exhaustive over the 2^5 server subsets.
inline std::vector<Cut> enumerate_cuts(const NetworkSpec& spec) {
    std::vector<Cut> cuts;
    for (unsigned mask = 1; mask < (1u << kNumServers); ++mask) {
        if (topology::origin_reaches_sink(mask)) continue;
        // Disconnection is monotone in the removed set, so dropping single
        // elements is enough to test minimality.
        bool minimal = true;
        for (int n = 1; n <= kNumServers && minimal; ++n) {
            unsigned bit = 1u << (n - 1);
            if ((mask & bit) && !topology::origin_reaches_sink(mask & ~bit)) minimal = false;
        }
        if (!minimal) continue;
        Cut cut{servers_of(mask), 0.0};
        for (int n : cut.servers) cut.capacity += spec.service_rate(n);
        cuts.push_back(std::move(cut));
    }
    std::sort(cuts.begin(), cuts.end(), [](const Cut& a, const Cut& b) {
        if (a.servers.size() != b.servers.size()) return a.servers.size() < b.servers.size();
        return a.servers < b.servers;
    });
    return cuts;
}

inline double min_cut_capacity(const std::vector<Cut>& cuts) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& c : cuts) best = std::min(best, c.capacity);
    return best;
}

inline double min_cut_capacity(const NetworkSpec& spec) { return min_cut_capacity(enumerate_cuts(spec)); }

inline bool stabilizable(const NetworkSpec& spec) { return spec.arrival_rate() < min_cut_capacity(spec); }

namespace detail {

inline void require_stabilizable(const NetworkSpec& spec, double capacity) {
    if (!(spec.arrival_rate() < capacity)) {
        std::ostringstream os;
        os << "arrival rate " << spec.arrival_rate() << " is not below the min-cut capacity " << capacity;
        throw NotStabilizable(os.str());
    }
}

}  // namespace detail

// Smallest ratio of residual cut capacity to residual demand, over every cut
// M and every proper subset M~ of M (the empty set included) that leaves
// positive residual demand.
inline double compute_m(const NetworkSpec& spec) {
    const auto cuts = enumerate_cuts(spec);
    detail::require_stabilizable(spec, min_cut_capacity(cuts));
    const double lambda = spec.arrival_rate();
    double m = std::numeric_limits<double>::infinity();
    for (const auto& cut : cuts) {
        const unsigned full = cut.mask();
        // Iterate proper subsets of `full`, including the empty set.
        for (unsigned sub = (full - 1) & full;; sub = (sub - 1) & full) {
            double removed = 0.0;
            double residual_capacity = 0.0;
            for (int n : cut.servers) {
                if (sub >> (n - 1) & 1u)
                    removed += spec.service_rate(n);
                else
                    residual_capacity += spec.service_rate(n);
            }
            double residual_demand = lambda - removed;
            if (residual_demand > 0.0) m = std::min(m, residual_capacity / residual_demand);
            if (sub == 0) break;
        }
    }
    return m;
}

// Number of links on the longest origin->server walk; the origin->server
// link counts, so servers adjacent to the origin have depth 1.
inline std::array<int, kNumServers> compute_depths(const NetworkSpec& /*spec*/) {
    const auto& adj = topology::adjacency();
    std::array<int, topology::kNumNodes> depth{};
    depth.fill(-1);
    depth[topology::kOrigin] = 0;
    // Node ids are already a topological order of the bridge DAG.
    for (int u = 0; u < topology::kNumNodes; ++u) {
        if (depth[u] < 0) continue;
        for (int v : adj[u]) depth[v] = std::max(depth[v], depth[u] + 1);
    }
    std::array<int, kNumServers> out{};
    for (int n = 1; n <= kNumServers; ++n) out[n - 1] = depth[n];
    return out;
}

struct CutG {
    Cut cut;
    int g1 = 0;  // sum of depths over the fastest servers of the cut
    int g2 = 0;  // min depth over the slowest servers of the cut
    int g = 0;
};

struct DeltaG {
    int delta_g = 0;
    std::vector<CutG> per_cut;
};

inline DeltaG compute_delta_g(const NetworkSpec& spec) {
    const auto depths = compute_depths(spec);
    DeltaG out;
    int max_g = 0;
    for (auto& cut : enumerate_cuts(spec)) {
        double mu_max = -std::numeric_limits<double>::infinity();
        double mu_min = std::numeric_limits<double>::infinity();
        for (int n : cut.servers) {
            mu_max = std::max(mu_max, spec.service_rate(n));
            mu_min = std::min(mu_min, spec.service_rate(n));
        }
        CutG entry;
        entry.g2 = std::numeric_limits<int>::max();
        for (int n : cut.servers) {
            if (spec.service_rate(n) == mu_max) entry.g1 += depths[n - 1];
            if (spec.service_rate(n) == mu_min) entry.g2 = std::min(entry.g2, depths[n - 1]);
        }
        const int sgn = mu_max > mu_min ? 1 : 0;
        entry.g = sgn * std::max(entry.g2 - entry.g1, 0);
        max_g = std::max(max_g, entry.g);
        entry.cut = std::move(cut);
        out.per_cut.push_back(std::move(entry));
    }
    out.delta_g = max_g > 0 ? 1 : 0;
    return out;
}

struct GspParams {
    double beta = 0.0;
    double gamma = 0.0;
};

// Parameter region 1 < gamma^k < beta^k < m with k = 2 + delta_g.
// Strict inequalities are tested with relative margin kMargin.
class FeasibleRegion {
public:
    static constexpr double kMargin = 1e-9;

    FeasibleRegion(double m, int delta_g) : m_(m), delta_g_(delta_g) {
        if (!(m > 1.0)) throw NotStabilizable("m must exceed 1 for a non-empty parameter region");
    }

    double m() const { return m_; }
    int delta_g() const { return delta_g_; }
    int exponent() const { return 2 + delta_g_; }
    double beta_upper() const { return std::pow(m_, 1.0 / exponent()); }

    bool contains(const GspParams& p) const {
        const int k = exponent();
        const double gk = std::pow(p.gamma, k);
        const double bk = std::pow(p.beta, k);
        return gk > 1.0 + kMargin && bk > gk * (1.0 + kMargin) && m_ > bk * (1.0 + kMargin);
    }

    // Closed bounds strictly inside the open intervals; any beta in
    // beta_bounds(gamma) and gamma in gamma_bounds(beta) passes contains().
    std::pair<double, double> beta_bounds() const { return {1.0 + 4 * kMargin, beta_upper() * (1.0 - 4 * kMargin)}; }
    std::pair<double, double> beta_bounds(double gamma) const {
        auto [lo, hi] = beta_bounds();
        return {std::max(lo, gamma * (1.0 + 4 * kMargin)), hi};
    }
    std::pair<double, double> gamma_bounds(double beta) const {
        return {1.0 + 2 * kMargin, beta * (1.0 - 2 * kMargin)};
    }

    // Nearest interior point with margin.
    GspParams project(const GspParams& p) const {
        auto [blo, bhi] = beta_bounds();
        // gamma needs room below beta, so beta keeps a little clearance above 1.
        blo = std::max(blo, 1.0 + 16 * kMargin);
        GspParams out;
        out.beta = std::clamp(p.beta, blo, bhi);
        auto [glo, ghi] = gamma_bounds(out.beta);
        out.gamma = std::clamp(p.gamma, glo, ghi);
        return out;
    }

    // Interval midpoints: beta at the middle of (1, beta_upper), gamma at the
    // middle of (1, beta).
    GspParams midpoint() const {
        GspParams p;
        p.beta = 0.5 * (1.0 + beta_upper());
        p.gamma = 0.5 * (1.0 + p.beta);
        return p;
    }

private:
    double m_;
    int delta_g_;
};

struct StabilityConstants {
    std::vector<Cut> cuts;
    double min_cut_capacity = 0.0;
    double m = 0.0;
    int delta_g = 0;
    std::array<int, kNumServers> depths{};
    std::vector<CutG> per_cut_g;
};

inline StabilityConstants stability_constants(const NetworkSpec& spec) {
    StabilityConstants s;
    s.cuts = enumerate_cuts(spec);
    s.min_cut_capacity = min_cut_capacity(s.cuts);
    s.m = compute_m(spec);
    auto dg = compute_delta_g(spec);
    s.delta_g = dg.delta_g;
    s.per_cut_g = std::move(dg.per_cut);
    s.depths = compute_depths(spec);
    return s;
}

inline FeasibleRegion feasible_region(const NetworkSpec& spec) {
    return FeasibleRegion(compute_m(spec), compute_delta_g(spec).delta_g);
}

}  // namespace gsp
