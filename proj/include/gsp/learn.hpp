#pragma once

// Policy iteration for the GSP parameters (beta, gamma).
//
// Each completed job contributes one row (pre-arrival state, path, system
// time W). The parameters are fitted by least squares of gamma_p(B) Q_p(x)
// against W: beta by alternating partition/minimize rounds, then gamma with
// the weight tiers frozen at the new beta.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include "gsp/error.hpp"
#include "gsp/network.hpp"
#include "gsp/plq.hpp"
#include "gsp/policy.hpp"
#include "gsp/sim.hpp"

namespace gsp {

struct FitRow {
    TrafficState x;  // state the router saw, before the job joined
    PathId path = PathId::P12;
    double system_time = 0.0;
};

class FitDataset {
public:
    FitDataset() = default;

    explicit FitDataset(std::vector<FitRow> rows) {
        for (auto& r : rows) add(std::move(r));
    }

    static FitDataset from_episode(const EpisodeData& data) {
        FitDataset ds;
        for (const auto& j : data.completed_jobs) ds.add({j.state_at_arrival, j.path, j.system_time});
        return ds;
    }

    // Rows with W <= 0 carry no arrival and are dropped.
    void add(FitRow r) {
        if (r.system_time > 0.0) rows_.push_back(std::move(r));
    }

    const std::vector<FitRow>& rows() const { return rows_; }
    std::size_t size() const { return rows_.size(); }
    bool empty() const { return rows_.empty(); }

private:
    std::vector<FitRow> rows_;
};

inline double sse(const FitDataset& data, double beta, double gamma, const ServiceRates& rates) {
    const GspParams params{beta, gamma};
    double total = 0.0;
    for (const auto& r : data.rows()) {
        const double pred = weighted_costs(r.x, params, rates)[index(r.path)];
        const double e = pred - r.system_time;
        total += e * e;
    }
    return total;
}

// Quartic in one variable, coefficients by ascending power.
struct Quartic {
    std::array<double, 5> c{};

    double operator()(double t) const { return (((c[4] * t + c[3]) * t + c[2]) * t + c[1]) * t + c[0]; }

    // Sum of (a * t^k - w)^2 accumulated term by term.
    void add_square(double a, int k, double w) {
        c[2 * k] += a * a;
        c[k] -= 2.0 * a * w;
        c[0] += w * w;
    }

    bool constant() const { return c[1] == 0.0 && c[2] == 0.0 && c[3] == 0.0 && c[4] == 0.0; }
};

// Box-constrained scalar minimizer: coarse scan, golden-section refinement
// around the best scan point, endpoints checked last.
template <class F>
double minimize_scalar(F&& f, double lo, double hi, double tol = 1e-6) {
    if (!(hi > lo)) return lo;
    constexpr int kScan = 64;
    const double h = (hi - lo) / kScan;
    int best = 0;
    double best_val = f(lo);
    for (int i = 1; i <= kScan; ++i) {
        const double v = f(lo + i * h);
        if (v < best_val) {
            best_val = v;
            best = i;
        }
    }
    double a = lo + std::max(0, best - 1) * h;
    double b = lo + std::min(kScan, best + 1) * h;
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - inv_phi * (b - a);
    double d = a + inv_phi * (b - a);
    double fc = f(c), fd = f(d);
    while (b - a > tol) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    double arg = 0.5 * (a + b);
    double val = f(arg);
    for (double t : {lo, hi, lo + best * h}) {
        const double v = f(t);
        if (v < val) {
            val = v;
            arg = t;
        }
    }
    return arg;
}

// Which linear piece and which weight tier each row sits in at a given beta.
struct RowPiece {
    int hop = 0;       // active segment of the row's path
    int exponent = 0;  // gamma exponent of the row's path

    friend bool operator==(const RowPiece&, const RowPiece&) = default;
};

using Partition = std::vector<RowPiece>;

inline Partition partition(const FitDataset& data, double beta, const ServiceRates& rates) {
    Partition out;
    out.reserve(data.size());
    for (const auto& r : data.rows()) {
        const auto b = bottlenecks(r.x, beta);
        const auto w = path_weights(b, rates);
        out.push_back({bottleneck_hop(segments(r.path, r.x, beta)), w.exponent[index(r.path)]});
    }
    return out;
}

// SSE as a polynomial in beta with the partition frozen.
inline Quartic frozen_sse_in_beta(const FitDataset& data, const Partition& part, double gamma) {
    Quartic q;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto& r = data.rows()[i];
        const auto s = segments(r.path, r.x, 1.0);
        const double a = std::pow(gamma, part[i].exponent) * s.prefix_sum[part[i].hop];
        q.add_square(a, segment_power(part[i].hop), r.system_time);
    }
    return q;
}

// SSE as a polynomial in gamma with beta and the tiers fixed.
inline Quartic frozen_sse_in_gamma(const FitDataset& data, const Partition& part, double beta) {
    Quartic q;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto& r = data.rows()[i];
        q.add_square(q_value(r.path, r.x, beta), part[i].exponent, r.system_time);
    }
    return q;
}

struct BetaFit {
    double beta = 0.0;
    int rounds = 0;
    bool partition_stable = false;
    std::vector<double> sse_trace;  // true SSE at the start and after each accepted round
};

inline constexpr int kMaxPartitionRounds = 20;

inline BetaFit fit_beta(const FitDataset& data, double beta_prev, double gamma_fixed, const FeasibleRegion& region,
                        const ServiceRates& rates) {
    BetaFit fit;
    fit.beta = beta_prev;
    if (data.empty()) return fit;
    const auto [lo, hi] = region.beta_bounds(gamma_fixed);
    if (!(hi > lo)) return fit;
    double beta = std::clamp(beta_prev, lo, hi);
    double current = sse(data, beta, gamma_fixed, rates);
    fit.sse_trace.push_back(current);
    // Tier switches make the true SSE jump, and the frozen steps cannot see
    // across a jump. Start from the best point of a direct scan when it wins.
    const double scanned = minimize_scalar([&](double b) { return sse(data, b, gamma_fixed, rates); }, lo, hi);
    if (const double s = sse(data, scanned, gamma_fixed, rates); s < current) {
        beta = scanned;
        current = s;
        fit.sse_trace.push_back(current);
    }
    Partition part = partition(data, beta, rates);
    for (int round = 1; round <= kMaxPartitionRounds; ++round) {
        const Quartic objective = frozen_sse_in_beta(data, part, gamma_fixed);
        if (objective.constant()) {
            fit.partition_stable = true;
            break;
        }
        double candidate = minimize_scalar(objective, lo, hi);
        double candidate_sse = sse(data, candidate, gamma_fixed, rates);
        fit.rounds = round;
        // The frozen minimiser can land past a partition boundary; back off
        // towards the current beta until the true SSE does not increase.
        int halvings = 0;
        for (; candidate_sse > current && halvings < 40; ++halvings) {
            candidate = 0.5 * (candidate + beta);
            candidate_sse = sse(data, candidate, gamma_fixed, rates);
        }
        if (candidate_sse > current) break;
        beta = candidate;
        current = candidate_sse;
        fit.sse_trace.push_back(current);
        Partition next = partition(data, beta, rates);
        if (next == part && halvings == 0) {
            fit.partition_stable = true;
            break;
        }
        part = std::move(next);
    }
    fit.beta = beta;
    return fit;
}

inline double fit_gamma(const FitDataset& data, double beta_fixed, double gamma_prev, const FeasibleRegion& region,
                        const ServiceRates& rates) {
    if (data.empty()) return gamma_prev;
    const Quartic objective = frozen_sse_in_gamma(data, partition(data, beta_fixed, rates), beta_fixed);
    if (objective.constant()) return gamma_prev;
    const auto [lo, hi] = region.gamma_bounds(beta_fixed);
    return minimize_scalar(objective, lo, hi);
}

inline FeasibleRegion region_from(const RateEstimates& est) {
    return feasible_region(NetworkSpec(est.mu, est.lambda));
}

// Region under pessimistic rates: lambda raised and each mu_n lowered by z
// standard errors of its reciprocal-mean estimate (relative error
// 1/sqrt(samples) for exponential times). Rates without samples stay at the
// point estimate. Delta_G keeps the point estimates, since it only depends on
// the ordering of the rates.
inline FeasibleRegion region_from(const RateEstimates& est, const RateHistory& h, double z) {
    if (z <= 0.0) return region_from(est);
    RateEstimates pess = est;
    if (h.interarrival_count > 0) pess.lambda *= 1.0 + z / std::sqrt(static_cast<double>(h.interarrival_count));
    for (int n = 0; n < kNumServers; ++n) {
        if (h.service_count[n] == 0) continue;
        const double shrink = 1.0 - z / std::sqrt(static_cast<double>(h.service_count[n]));
        pess.mu[n] = est.mu[n] * std::max(shrink, 1e-3);
    }
    const int delta_g = compute_delta_g(NetworkSpec(est.mu, est.lambda)).delta_g;
    return FeasibleRegion(compute_m(NetworkSpec(pess.mu, pess.lambda)), delta_g);
}

struct PiConfig {
    RateEstimates initial;  // lambda 0.1, mu_n 0.5
    double episode_length = 1e5;
    double theta_beta = 1e-3;
    double theta_gamma = 1e-3;
    int max_iters = 50;
    bool estimate_rates = true;
    // Standard errors of pessimism applied to the estimated rates before the
    // parameter region is derived from them; 0 uses the point estimates.
    double confidence_z = 3.0;
    std::optional<GspParams> initial_params;  // region midpoint when unset
};

struct PiRecord {
    int iteration = 0;
    double beta = 0.0;
    double gamma = 0.0;
    RateEstimates estimates;
    double m_hat = 0.0;
    int delta_g = 0;
    double sse = std::numeric_limits<double>::quiet_NaN();
    double mean_system_time = std::numeric_limits<double>::quiet_NaN();
    std::size_t rows = 0;
};

class PiState {
public:
    // Rejects parameters outside the region they were fitted under.
    void push(const PiRecord& r, const FeasibleRegion& region) {
        if (!region.contains({r.beta, r.gamma})) throw std::logic_error("policy iteration produced infeasible parameters");
        history_.push_back(r);
    }

    const std::vector<PiRecord>& history() const { return history_; }
    const PiRecord& last() const { return history_.back(); }
    int iteration() const { return history_.back().iteration; }
    GspParams params() const { return {last().beta, last().gamma}; }
    const RateEstimates& estimates() const { return last().estimates; }

    bool converged = false;

private:
    std::vector<PiRecord> history_;
};

// `evaluate(policy, iteration)` runs one episode under `policy` and returns
// its data. With estimation disabled the controller uses `pi.initial` as the
// known rates.
template <class Evaluate>
PiState policy_iteration(Evaluate&& evaluate, const PiConfig& pi) {
    RateEstimates est = pi.initial;
    RateHistory history;
    FeasibleRegion region = region_from(est);
    GspParams params = pi.initial_params ? region.project(*pi.initial_params) : region.midpoint();

    PiState state;
    PiRecord r0;
    r0.beta = params.beta;
    r0.gamma = params.gamma;
    r0.estimates = est;
    r0.m_hat = region.m();
    r0.delta_g = region.delta_g();
    state.push(r0, region);

    for (int i = 1; i <= pi.max_iters; ++i) {
        const GspPolicy policy(params, est.mu);
        const EpisodeData data = evaluate(policy, i);
        if (pi.estimate_rates) {
            history.accumulate(data);
            est = estimate_rates(history, est);
        }
        region = pi.estimate_rates ? region_from(est, history, pi.confidence_z) : region_from(est);
        const GspParams prev = params;
        params = region.project(params);

        const FitDataset ds = FitDataset::from_episode(data);
        const double beta = fit_beta(ds, params.beta, params.gamma, region, est.mu).beta;
        const double gamma_start = std::clamp(params.gamma, region.gamma_bounds(beta).first, region.gamma_bounds(beta).second);
        const double gamma = fit_gamma(ds, beta, gamma_start, region, est.mu);
        params = {beta, gamma};

        PiRecord rec;
        rec.iteration = i;
        rec.beta = beta;
        rec.gamma = gamma;
        rec.estimates = est;
        rec.m_hat = region.m();
        rec.delta_g = region.delta_g();
        rec.sse = sse(ds, beta, gamma, est.mu);
        rec.mean_system_time = data.completed_jobs.empty() ? rec.mean_system_time : average_system_time(data);
        rec.rows = ds.size();
        state.push(rec, region);

        if (std::abs(beta - prev.beta) < pi.theta_beta && std::abs(gamma - prev.gamma) < pi.theta_gamma) {
            state.converged = true;
            break;
        }
    }
    return state;
}

// Trains against simulated episodes of `truth`; episode i uses episode_seed(sim.seed, i).
inline PiState policy_iteration(const NetworkSpec& truth, const SimConfig& sim, PiConfig pi) {
    SimConfig cfg = sim;
    cfg.horizon = pi.episode_length;
    validate(cfg, truth);
    if (!pi.estimate_rates) pi.initial = {truth.arrival_rate(), truth.service_rates()};
    return policy_iteration(
        [&](const GspPolicy& policy, int i) {
            SimConfig c = cfg;
            c.seed = episode_seed(sim.seed, i);
            return run_episode(truth, policy, c);
        },
        pi);
}

struct BernoulliOptimum {
    BernoulliWeights weights{{1.0, 0.0, 0.0}};
    double mean_system_time = 0.0;
    int evaluated = 0;
    int skipped = 0;
};

// Simplex grid search over routing probabilities. All candidates share the
// configured seed, so they are compared on common random numbers.
inline BernoulliOptimum optimize_bernoulli(const NetworkSpec& spec, const SimConfig& sim, double grid_step = 0.02) {
    if (!(grid_step > 0.0) || grid_step > 1.0) throw ConfigInvalid("grid step must lie in (0, 1]");
    const double cells = 1.0 / grid_step;
    const int n = static_cast<int>(std::lround(cells));
    if (std::abs(cells - n) > 1e-9 * cells) throw ConfigInvalid("grid step must divide 1");
    validate(sim, spec);

    BernoulliOptimum best;
    best.mean_system_time = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= n; ++i) {
        for (int j = 0; i + j <= n; ++j) {
            const int k = n - i - j;
            const BernoulliWeights w({static_cast<double>(i) / n, static_cast<double>(j) / n, static_cast<double>(k) / n});
            const auto rho = flow_balance_utilization(spec, w);
            if (*std::max_element(rho.begin(), rho.end()) >= 1.0) {
                ++best.skipped;
                continue;
            }
            const auto data = run_episode(spec, BernoulliPolicy(w), sim);
            ++best.evaluated;
            if (data.completed_jobs.empty()) continue;
            const double t = average_system_time(data);
            if (t < best.mean_system_time) {
                best.mean_system_time = t;
                best.weights = w;
            }
        }
    }
    if (best.evaluated == 0) throw NoFeasibleCandidate("every routing grid point overloads a server");
    return best;
}

}  // namespace gsp
