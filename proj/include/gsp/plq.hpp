#pragma once

// Piecewise-linear path costs, bottleneck detection and path weight tiers.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>

#include "gsp/network.hpp"

namespace gsp {

// Per-class queue lengths, ordered [x1^12, x1^135, x2^12, x3^135, x4^45, x5^135, x5^45].
class TrafficState {
public:
    using Count = std::int64_t;

    TrafficState() = default;
    explicit TrafficState(const std::array<Count, kNumClasses>& x) : x_(x) {
        for (Count v : x_) {
            if (v < 0) throw std::invalid_argument("traffic state components must be non-negative");
        }
    }

    Count operator[](int cls) const { return x_[cls]; }
    const std::array<Count, kNumClasses>& values() const { return x_; }

    void increment(int cls) { ++x_[cls]; }
    void decrement(int cls) {
        if (x_[cls] <= 0) throw std::logic_error("departure from an empty class");
        --x_[cls];
    }

    Count server_total(int server) const {
        Count total = 0;
        for (int c = 0; c < kNumClasses; ++c) {
            if (topology::kClassServer[c] == server) total += x_[c];
        }
        return total;
    }

    Count path_total(PathId p) const {
        Count total = 0;
        for (const auto& h : topology::hops(p)) total += x_[h.cls];
        return total;
    }

    Count l1() const { return std::accumulate(x_.begin(), x_.end(), Count{0}); }

    friend bool operator==(const TrafficState&, const TrafficState&) = default;

private:
    std::array<Count, kNumClasses> x_{};
};

using PathCosts = std::array<double, kNumPaths>;

namespace detail {

// a and b tie when they differ by at most 1e-12 of the larger magnitude.
inline bool nearly_equal(double a, double b) {
    return std::abs(a - b) <= 1e-12 * std::max(std::abs(a), std::abs(b));
}

}  // namespace detail

// Segment j of a path sums the first j+1 classes and is scaled by
// beta^(2-j): beta^2 * x_first, beta * (x_first + x_second), then the plain
// sum for the third server of path 135.
inline int segment_power(int hop) { return 2 - hop; }

struct Segments {
    std::array<double, 3> value{};
    std::array<double, 3> prefix_sum{};
    int count = 0;
};

inline Segments segments(PathId p, const TrafficState& x, double beta) {
    Segments s;
    const auto path = topology::hops(p);
    const std::array<double, 3> scale{beta * beta, beta, 1.0};
    double prefix = 0.0;
    for (int j = 0; j < path.length; ++j) {
        prefix += static_cast<double>(x[path[j].cls]);
        s.prefix_sum[j] = prefix;
        s.value[j] = scale[j] * prefix;
    }
    s.count = path.length;
    return s;
}

inline double q_value(PathId p, const TrafficState& x, double beta) {
    const auto s = segments(p, x, beta);
    return *std::max_element(s.value.begin(), s.value.begin() + s.count);
}

inline PathCosts q_values(const TrafficState& x, double beta) {
    PathCosts q{};
    for (PathId p : kAllPaths) q[index(p)] = q_value(p, x, beta);
    return q;
}

// Position along the path of the active segment, preferring the most
// downstream one at ties. This is the unique server whose own right
// derivative is positive while its successor's is zero.
inline int bottleneck_hop(const Segments& s) {
    int best = 0;
    for (int j = 1; j < s.count; ++j) {
        if (s.value[j] > s.value[best] || detail::nearly_equal(s.value[j], s.value[best])) best = j;
    }
    return best;
}

struct BottleneckCombo {
    std::array<int, kNumPaths> server{};  // b_12, b_135, b_45

    int operator[](PathId p) const { return server[index(p)]; }
    friend bool operator==(const BottleneckCombo&, const BottleneckCombo&) = default;
};

inline BottleneckCombo bottlenecks(const TrafficState& x, double beta) {
    BottleneckCombo b;
    for (PathId p : kAllPaths) b.server[index(p)] = topology::hops(p)[bottleneck_hop(segments(p, x, beta))].server;
    return b;
}

// Paths tiered by the service rate of their bottleneck: every path at the
// top rate gets exponent 0 (weight 1), every path at the best remaining rate
// gets exponent 1 (gamma), and the rest exponent 2 (gamma^2).
struct PathWeights {
    std::array<int, kNumPaths> exponent{};

    double weight(PathId p, double gamma) const {
        const int e = exponent[index(p)];
        return e == 0 ? 1.0 : (e == 1 ? gamma : gamma * gamma);
    }
};

inline PathWeights path_weights(const BottleneckCombo& b, const ServiceRates& rates) {
    std::array<double, kNumPaths> r{};
    for (PathId p : kAllPaths) r[index(p)] = rates[b[p] - 1];
    PathWeights w;
    w.exponent.fill(2);
    const double top = *std::max_element(r.begin(), r.end());
    double second = -1.0;
    for (int i = 0; i < kNumPaths; ++i) {
        if (r[i] == top)
            w.exponent[i] = 0;
        else
            second = std::max(second, r[i]);
    }
    for (int i = 0; i < kNumPaths; ++i) {
        if (w.exponent[i] != 0 && r[i] == second) w.exponent[i] = 1;
    }
    return w;
}

inline PathWeights path_weights(const BottleneckCombo& b, const NetworkSpec& spec) {
    return path_weights(b, spec.service_rates());
}

// gamma_p(B) * Q_p(x) for every path.
inline PathCosts weighted_costs(const TrafficState& x, const GspParams& params, const ServiceRates& rates) {
    const auto q = q_values(x, params.beta);
    const auto w = path_weights(bottlenecks(x, params.beta), rates);
    PathCosts out{};
    for (PathId p : kAllPaths) out[index(p)] = w.weight(p, params.gamma) * q[index(p)];
    return out;
}

}  // namespace gsp
