#pragma once

// Network simulation under any Policy.
//
// bernoulli_dt: fixed step dt; every busy server completes its scheduled job
// with probability mu_n * dt, visiting servers downstream-first (2, 5, 3, 4,
// 1) so no job crosses two servers in one step; an arrival with probability
// lambda * dt comes last and is routed on the state it finds.
//
// event_driven: exponential race between the arrival clock and the clocks of
// the scheduled classes; decisions are re-evaluated after every event.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "gsp/error.hpp"
#include "gsp/network.hpp"
#include "gsp/plq.hpp"
#include "gsp/policy.hpp"

namespace gsp {

enum class SimMode { bernoulli_dt, event_driven };

inline const char* mode_name(SimMode m) { return m == SimMode::bernoulli_dt ? "bernoulli_dt" : "event_driven"; }

inline SimMode parse_mode(const std::string& s) {
    if (s == "bernoulli_dt" || s == "bernoulli") return SimMode::bernoulli_dt;
    if (s == "event_driven" || s == "event") return SimMode::event_driven;
    throw ConfigInvalid("unknown simulation mode '" + s + "'");
}

struct SimConfig {
    SimMode mode = SimMode::bernoulli_dt;
    double dt = 0.1;        // sec
    double horizon = 1e5;   // sec
    std::int64_t max_epochs = 0;  // 0: no epoch limit
    std::uint64_t seed = 1;
    double warmup = 0.0;    // sec excluded from job and queue metrics
    TrafficState initial{};
};

inline void validate(const SimConfig& cfg, const NetworkSpec& spec) {
    if (!(cfg.horizon > 0.0) || !std::isfinite(cfg.horizon)) throw ConfigInvalid("horizon must be positive");
    if (cfg.max_epochs < 0) throw ConfigInvalid("max_epochs must be non-negative");
    if (!(cfg.warmup >= 0.0) || cfg.warmup >= cfg.horizon) throw ConfigInvalid("warmup must lie in [0, horizon)");
    if (cfg.mode == SimMode::bernoulli_dt) {
        if (!(cfg.dt > 0.0)) throw ConfigInvalid("dt must be positive");
        if (!(spec.arrival_rate() * cfg.dt < 1.0)) throw ConfigInvalid("arrival probability lambda*dt must be < 1");
        for (int n = 1; n <= kNumServers; ++n) {
            if (!(spec.service_rate(n) * cfg.dt < 1.0))
                throw ConfigInvalid("service probability mu_" + std::to_string(n) + "*dt must be < 1");
        }
    }
}

struct JobRecord {
    std::int64_t id = 0;
    PathId path = PathId::P12;
    double t_arrival = 0.0;
    std::optional<double> t_depart;
    double system_time = 0.0;
    TrafficState state_at_arrival;
    std::optional<double> cost_at_arrival;
};

struct EpisodeData {
    std::vector<JobRecord> completed_jobs;  // arrivals after warmup that departed
    std::vector<double> interarrival_samples;
    std::array<std::vector<double>, kNumServers> service_samples;
    double time_integral_queue = 0.0;  // job*sec after warmup
    double duration = 0.0;             // sec after warmup
    double end_time = 0.0;
    std::array<double, kNumServers> busy_time{};  // after warmup
    std::int64_t arrivals = 0;
    std::int64_t completions = 0;  // every departure, initial and warmup jobs included
    std::int64_t initial_jobs = 0;
    std::int64_t censored = 0;     // jobs in the network at the end
    std::int64_t epochs = 0;
    TrafficState final_state;
};

namespace detail {

template <Policy P>
class Engine {
public:
    Engine(const NetworkSpec& spec, const P& policy, const SimConfig& cfg)
        : spec_(spec), policy_(policy), cfg_(cfg), rng_(cfg.seed) {
        for (int c = 0; c < kNumClasses; ++c) {
            for (TrafficState::Count k = 0; k < cfg.initial[c]; ++k) {
                Job j;
                j.id = next_id_++;
                j.path = topology::kClassPath[c];
                j.hop = topology::kClassHop[c];
                j.initial = true;
                jobs_.push_back(j);
                enqueue(c, static_cast<std::int64_t>(jobs_.size() - 1), 0.0);
                ++data_.initial_jobs;
            }
        }
    }

    EpisodeData run() {
        if (cfg_.mode == SimMode::bernoulli_dt)
            run_bernoulli();
        else
            run_event_driven();
        data_.censored = x_.l1();
        data_.final_state = x_;
        data_.duration = std::max(0.0, data_.end_time - cfg_.warmup);
        return std::move(data_);
    }

private:
    struct Job {
        std::int64_t id = 0;
        PathId path = PathId::P12;
        int hop = 0;
        double t_arrival = 0.0;
        double service_acc = 0.0;
        bool initial = false;
        TrafficState state;
        std::optional<double> cost;
    };

    static constexpr std::array<int, kNumServers> kStepOrder{2, 5, 3, 4, 1};

    void enqueue(int cls, std::int64_t job, double t) {
        queue_[cls].push_back({job, t});
        x_.increment(cls);
        hol_.since[cls] = queue_[cls].front().joined;
    }

    std::int64_t dequeue(int cls) {
        const auto job = queue_[cls].front().job;
        queue_[cls].pop_front();
        x_.decrement(cls);
        hol_.since[cls] = queue_[cls].empty() ? std::numeric_limits<double>::infinity() : queue_[cls].front().joined;
        return job;
    }

    std::int64_t head(int cls) const { return queue_[cls].front().job; }

    void complete(int cls, double t) {
        const auto idx = dequeue(cls);
        Job& job = jobs_[idx];
        const int server = topology::kClassServer[cls];
        data_.service_samples[server - 1].push_back(job.service_acc);
        job.service_acc = 0.0;
        ++data_.epochs;
        const auto path = topology::hops(job.path);
        if (job.hop + 1 < path.length) {
            ++job.hop;
            enqueue(path[job.hop].cls, idx, t);
            return;
        }
        ++data_.completions;
        if (!job.initial && job.t_arrival >= cfg_.warmup) {
            JobRecord r;
            r.id = job.id;
            r.path = job.path;
            r.t_arrival = job.t_arrival;
            r.t_depart = t;
            r.system_time = t - job.t_arrival;
            r.state_at_arrival = job.state;
            r.cost_at_arrival = job.cost;
            data_.completed_jobs.push_back(std::move(r));
        }
    }

    void arrive(double t) {
        const auto decision = policy_.route(x_, rng_);
        Job j;
        j.id = next_id_++;
        j.path = decision.path;
        j.hop = 0;
        j.t_arrival = t;
        j.state = x_;
        j.cost = decision.cost;
        jobs_.push_back(std::move(j));
        data_.interarrival_samples.push_back(t - last_arrival_);
        last_arrival_ = t;
        ++data_.arrivals;
        ++data_.epochs;
        enqueue(topology::hops(decision.path)[0].cls, static_cast<std::int64_t>(jobs_.size() - 1), t);
    }

    // Length of [t0, t1] that lies after warmup.
    double measured(double t0, double t1) const { return std::max(0.0, t1 - std::max(t0, cfg_.warmup)); }

    bool epoch_limit_hit() const { return cfg_.max_epochs > 0 && data_.epochs >= cfg_.max_epochs; }

    void run_bernoulli() {
        const double dt = cfg_.dt;
        const double lambda_p = spec_.arrival_rate() * dt;
        const auto steps = static_cast<std::int64_t>(std::llround(cfg_.horizon / dt));
        std::uniform_real_distribution<double> u01(0.0, 1.0);
        double t_end = 0.0;
        for (std::int64_t k = 0; k < steps; ++k) {
            const double t_start = static_cast<double>(k) * dt;
            t_end = static_cast<double>(k + 1) * dt;
            const double w = measured(t_start, t_end);
            for (int n : kStepOrder) {
                const int c = policy_.serve_class(n, x_, hol_, rng_);
                if (c < 0) continue;
                jobs_[head(c)].service_acc += dt;
                data_.busy_time[n - 1] += w;
                if (u01(rng_) < spec_.service_rate(n) * dt) complete(c, t_end);
            }
            if (lambda_p > 0.0 && u01(rng_) < lambda_p) arrive(t_end);
            data_.time_integral_queue += static_cast<double>(x_.l1()) * w;
            if (epoch_limit_hit()) break;
        }
        data_.end_time = t_end;
    }

    void run_event_driven() {
        const double lambda = spec_.arrival_rate();
        std::uniform_real_distribution<double> u01(0.0, 1.0);
        double t = 0.0;
        std::array<int, kNumServers> served{};
        while (true) {
            double total = lambda;
            for (int n = 1; n <= kNumServers; ++n) {
                served[n - 1] = policy_.serve_class(n, x_, hol_, rng_);
                if (served[n - 1] >= 0) total += spec_.service_rate(n);
            }
            if (total <= 0.0) {
                t = cfg_.horizon;
                break;
            }
            std::exponential_distribution<double> clock(total);
            const double tau = clock(rng_);
            const double t_next = std::min(t + tau, cfg_.horizon);
            const double span = t_next - t;
            const double w = measured(t, t_next);
            data_.time_integral_queue += static_cast<double>(x_.l1()) * w;
            for (int n = 1; n <= kNumServers; ++n) {
                if (served[n - 1] < 0) continue;
                jobs_[head(served[n - 1])].service_acc += span;
                data_.busy_time[n - 1] += w;
            }
            t = t_next;
            if (t >= cfg_.horizon) break;

            double pick = u01(rng_) * total;
            if (pick < lambda) {
                arrive(t);
            } else {
                pick -= lambda;
                int chosen = -1;
                for (int n = 1; n <= kNumServers; ++n) {
                    if (served[n - 1] < 0) continue;
                    chosen = served[n - 1];
                    if (pick < spec_.service_rate(n)) break;
                    pick -= spec_.service_rate(n);
                }
                complete(chosen, t);
            }
            if (epoch_limit_hit()) break;
        }
        data_.end_time = t;
    }

    struct Entry {
        std::int64_t job;
        double joined;
    };

    const NetworkSpec& spec_;
    const P& policy_;
    SimConfig cfg_;
    Rng rng_;
    TrafficState x_;
    HeadOfLine hol_;
    std::array<std::deque<Entry>, kNumClasses> queue_;
    std::vector<Job> jobs_;
    std::int64_t next_id_ = 0;
    double last_arrival_ = 0.0;
    EpisodeData data_;
};

}  // namespace detail

// Decorrelated seed for the i-th of a family of runs (splitmix64 finalizer).
inline std::uint64_t episode_seed(std::uint64_t base, std::uint64_t i) {
    std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (i + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

template <Policy P>
EpisodeData run_episode(const NetworkSpec& spec, const P& policy, const SimConfig& cfg) {
    validate(cfg, spec);
    return detail::Engine<P>(spec, policy, cfg).run();
}

inline double average_system_time(const EpisodeData& data) {
    if (data.completed_jobs.empty()) throw NoCompletedJobs();
    double sum = 0.0;
    for (const auto& j : data.completed_jobs) sum += j.system_time;
    return sum / static_cast<double>(data.completed_jobs.size());
}

inline double time_average_queue(const EpisodeData& data) {
    return data.duration > 0.0 ? data.time_integral_queue / data.duration : 0.0;
}

inline std::array<double, kNumServers> utilization(const EpisodeData& data) {
    std::array<double, kNumServers> u{};
    if (data.duration <= 0.0) return u;
    for (int n = 0; n < kNumServers; ++n) u[n] = data.busy_time[n] / data.duration;
    return u;
}

struct RateEstimates {
    double lambda = 0.1;
    ServiceRates mu{0.5, 0.5, 0.5, 0.5, 0.5};
};

// Running totals of observed inter-arrival and service times.
struct RateHistory {
    double interarrival_sum = 0.0;
    std::int64_t interarrival_count = 0;
    std::array<double, kNumServers> service_sum{};
    std::array<std::int64_t, kNumServers> service_count{};

    void accumulate(const EpisodeData& data) {
        for (double s : data.interarrival_samples) interarrival_sum += s;
        interarrival_count += static_cast<std::int64_t>(data.interarrival_samples.size());
        for (int n = 0; n < kNumServers; ++n) {
            for (double s : data.service_samples[n]) service_sum[n] += s;
            service_count[n] += static_cast<std::int64_t>(data.service_samples[n].size());
        }
    }
};

// Reciprocal sample means; quantities without samples keep the prior.
inline RateEstimates estimate_rates(const RateHistory& h, const RateEstimates& prior = {}) {
    RateEstimates out = prior;
    if (h.interarrival_count > 0 && h.interarrival_sum > 0.0)
        out.lambda = static_cast<double>(h.interarrival_count) / h.interarrival_sum;
    for (int n = 0; n < kNumServers; ++n) {
        if (h.service_count[n] > 0 && h.service_sum[n] > 0.0)
            out.mu[n] = static_cast<double>(h.service_count[n]) / h.service_sum[n];
    }
    return out;
}

inline void write_jobs_csv(std::ostream& os, const EpisodeData& data) {
    os << "id,path,t_arrival,t_depart,W,Q_weighted_at_arrival\n";
    os.precision(10);
    for (const auto& j : data.completed_jobs) {
        os << j.id << ',' << path_name(j.path) << ',' << j.t_arrival << ',';
        if (j.t_depart) os << *j.t_depart;
        os << ',' << j.system_time << ',';
        if (j.cost_at_arrival) os << *j.cost_at_arrival;
        os << '\n';
    }
}

}  // namespace gsp
