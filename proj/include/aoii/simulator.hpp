#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "aoii/cycle_model.hpp"
#include "aoii/errors.hpp"
#include "aoii/generator.hpp"
#include "aoii/rng.hpp"

namespace aoii {

// ---------------------------------------------------------------------------
// Discrete-event Monte Carlo of the remote estimation loop: a CTMC source, a
// monitor holding the last delivered value, an exponential channel, and a
// sampling policy. The source preempts an in-flight packet the instant its
// state changes, so only the currently observed value is ever delivered; if
// the change lands on the monitor's value the processes re-sync without a
// delivery, otherwise a fresh transmission starts immediately. Statistics
// are collected per synchronization cycle (a regeneration point), so no
// warmup is required.
// ---------------------------------------------------------------------------

enum class PolicyKind { Thresholds, SingleThreshold, Poisson };

struct SimPolicy {
    PolicyKind kind = PolicyKind::Thresholds;
    Eigen::VectorXd tau;      ///< per-estimate thresholds (Thresholds)
    double tau_single = 0.0;  ///< shared threshold (SingleThreshold)
    double gamma = 0.0;       ///< sampling intensity (Poisson)

    static SimPolicy thresholds(Eigen::VectorXd t) {
        SimPolicy p;
        p.kind = PolicyKind::Thresholds;
        p.tau = std::move(t);
        return p;
    }
    static SimPolicy single_threshold(double t) {
        SimPolicy p;
        p.kind = PolicyKind::SingleThreshold;
        p.tau_single = t;
        return p;
    }
    static SimPolicy poisson(double g) {
        SimPolicy p;
        p.kind = PolicyKind::Poisson;
        p.gamma = g;
        return p;
    }
};

struct SimConfig {
    GeneratorMatrix generator;
    double mu = 1.0;
    SimPolicy policy;
    long cycles = 100000;       ///< synchronization cycles to run
    std::uint64_t seed = 1;
    long warmup_cycles = 0;     ///< cycles discarded before recording
    long trace_cycles = 0;      ///< cycles recorded into the event trace

    void validate() const {
        if (!(mu > 0.0)) throw Error("service rate mu must be positive");
        if (cycles < 1) throw Error("cycle count must be at least 1");
        if (policy.kind == PolicyKind::Poisson && policy.gamma < 0.0)
            throw Error("Poisson intensity must be >= 0");
        if (policy.kind == PolicyKind::Thresholds &&
            policy.tau.size() != generator.size())
            throw Error("threshold vector size mismatch");
        if (warmup_cycles < 0 || trace_cycles < 0) throw Error("negative cycle count");
    }
};

enum class EventKind {
    SourceJump,
    TxStart,
    TxPreempt,
    TxDeliver,
    SyncByDrift,
    SyncByDelivery,
};

inline const char* to_string(EventKind k) {
    switch (k) {
        case EventKind::SourceJump: return "source_jump";
        case EventKind::TxStart: return "tx_start";
        case EventKind::TxPreempt: return "tx_preempt";
        case EventKind::TxDeliver: return "tx_deliver";
        case EventKind::SyncByDrift: return "sync_drift";
        case EventKind::SyncByDelivery: return "sync_delivery";
    }
    return "unknown";
}

/// One trace record. Times are nondecreasing; events sharing an instant
/// (a jump that preempts, a preemption followed by a restart, a delivery
/// followed by its sync) appear in causal order. aoii_after is the AoII
/// level once the event is applied, with the reset attributed to the sync
/// record, so sync records carry 0 and a same-instant predecessor carries
/// the pre-reset level. A source jump out of sync carries 0 as well: the
/// mismatch age starts growing from that instant.
struct TraceEvent {
    double time = 0.0;
    EventKind kind = EventKind::SourceJump;
    int from_state = 0;  ///< 1-based; 0 when not applicable
    int to_state = 0;    ///< 1-based; transmitted/delivered value for tx events
    double aoii_after = 0.0;
};

struct EventTrace {
    std::vector<TraceEvent> events;
};

/// Exact area under the AoII path described by a trace (slope 1 while
/// mismatched, reset at sync events).
inline double aoii_area(const EventTrace& trace) {
    double area = 0.0;
    double prev_t = 0.0;
    double prev_aoii = 0.0;
    for (const TraceEvent& e : trace.events) {
        const double dt = e.time - prev_t;
        if (prev_aoii > 0.0 || e.aoii_after > prev_aoii) {
            // mismatched segment: aoii climbs from prev_aoii
            area += prev_aoii * dt + 0.5 * dt * dt;
        }
        prev_t = e.time;
        prev_aoii = e.aoii_after;
    }
    return area;
}

struct SimResult {
    double maoii_hat = 0.0;   ///< total AoII area / total time
    double rate_hat = 0.0;    ///< initiated transmissions / total time
    long cycles_run = 0;
    long transmissions = 0;
    long preemptions = 0;
    double stderr_maoii = 0.0;  ///< batch means, 50 batches
    double stderr_rate = 0.0;
    EventTrace trace;
};

namespace detail {

class JumpSampler {
  public:
    explicit JumpSampler(const GeneratorMatrix& g) : n_(g.size()), cum_(g.size()) {
        auto [sigma, p] = holding_and_jump(g);
        sigma_ = sigma;
        for (int i = 0; i < n_; ++i) {
            cum_[i].resize(n_);
            double acc = 0.0;
            for (int j = 0; j < n_; ++j) {
                acc += p(i, j);
                cum_[i][j] = acc;
            }
            cum_[i][n_ - 1] = 1.0;
        }
    }

    double holding_rate(int state0) const { return sigma_(state0); }

    int next_state(int state0, rng::Xoshiro256pp& r) const {
        const double u = r.uniform01();
        const auto& row = cum_[state0];
        for (int j = 0; j < n_; ++j)
            if (u < row[j]) return j;
        return n_ - 1;
    }

  private:
    int n_;
    Eigen::VectorXd sigma_;
    std::vector<std::vector<double>> cum_;
};

struct BatchAccumulator {
    explicit BatchAccumulator(long batches) : area(batches, 0.0), time(batches, 0.0),
                                              tx(batches, 0.0) {}
    std::vector<double> area, time, tx;

    static double ratio_stderr(const std::vector<double>& num,
                               const std::vector<double>& den, double overall) {
        const std::size_t b = num.size();
        if (b < 2) return 0.0;
        double ss = 0.0;
        std::size_t used = 0;
        for (std::size_t i = 0; i < b; ++i) {
            if (den[i] <= 0.0) continue;
            const double r = num[i] / den[i];
            ss += (r - overall) * (r - overall);
            ++used;
        }
        if (used < 2) return 0.0;
        return std::sqrt(ss / (static_cast<double>(used) * (used - 1)));
    }
};

} // namespace detail

inline SimResult simulate(const SimConfig& cfg) {
    cfg.validate();
    const int n = cfg.generator.size();
    const detail::JumpSampler sampler(cfg.generator);
    rng::Xoshiro256pp r(rng::derive_seed(cfg.seed, 0));

    const auto trigger_delay = [&](int est0, rng::Xoshiro256pp& rr) -> double {
        switch (cfg.policy.kind) {
            case PolicyKind::Thresholds: return cfg.policy.tau(est0);
            case PolicyKind::SingleThreshold: return cfg.policy.tau_single;
            case PolicyKind::Poisson:
                return cfg.policy.gamma > 0.0
                           ? rr.exponential(cfg.policy.gamma)
                           : std::numeric_limits<double>::infinity();
        }
        return 0.0;
    };

    SimResult out;
    const long batches = std::min<long>(50, cfg.cycles);
    detail::BatchAccumulator acc(batches);
    double total_time = 0.0, total_area = 0.0;
    double t_abs = 0.0;
    int est0 = 0;  // 0-based sync state; regeneration makes the start state immaterial

    const long total_cycles = cfg.warmup_cycles + cfg.cycles;
    for (long cycle = 0; cycle < total_cycles; ++cycle) {
        const bool recording = cycle >= cfg.warmup_cycles;
        const long rec_cycle = cycle - cfg.warmup_cycles;
        const bool tracing = recording && rec_cycle < cfg.trace_cycles;
        const auto emit = [&](double t, EventKind k, int from0, int to0, double aoii) {
            if (tracing)
                out.trace.events.push_back(
                    {t, k, from0 >= 0 ? from0 + 1 : 0, to0 >= 0 ? to0 + 1 : 0, aoii});
        };

        const double hold = r.exponential(sampler.holding_rate(est0));
        t_abs += hold;
        int x0 = sampler.next_state(est0, r);
        emit(t_abs, EventKind::SourceJump, est0, x0, 0.0);

        const double desync_start = t_abs;
        double dt = 0.0;  // time since desync
        const double trig = trigger_delay(est0, r);
        bool transmitting = false;
        double service = 0.0;
        long cycle_tx = 0;
        long cycle_preempt = 0;

        while (true) {
            if (!transmitting) {
                const double jump = r.exponential(sampler.holding_rate(x0));
                if (dt + jump < trig) {
                    dt += jump;
                    const int nx = sampler.next_state(x0, r);
                    if (nx == est0) {
                        emit(desync_start + dt, EventKind::SourceJump, x0, nx, dt);
                        emit(desync_start + dt, EventKind::SyncByDrift, -1, nx, 0.0);
                        break;
                    }
                    emit(desync_start + dt, EventKind::SourceJump, x0, nx, dt);
                    x0 = nx;
                } else {
                    dt = trig;
                    transmitting = true;
                    service = r.exponential(cfg.mu);
                    ++cycle_tx;
                    emit(desync_start + dt, EventKind::TxStart, -1, x0, dt);
                }
            } else {
                const double jump = r.exponential(sampler.holding_rate(x0));
                if (service <= jump) {
                    dt += service;
                    emit(desync_start + dt, EventKind::TxDeliver, -1, x0, dt);
                    emit(desync_start + dt, EventKind::SyncByDelivery, -1, x0, 0.0);
                    est0 = x0;
                    break;
                }
                dt += jump;
                const int nx = sampler.next_state(x0, r);
                emit(desync_start + dt, EventKind::SourceJump, x0, nx, dt);
                emit(desync_start + dt, EventKind::TxPreempt, -1, x0, dt);
                ++cycle_preempt;
                if (nx == est0) {
                    emit(desync_start + dt, EventKind::SyncByDrift, -1, nx, 0.0);
                    break;
                }
                // immediate restart with the freshly observed value
                x0 = nx;
                service = r.exponential(cfg.mu);
                ++cycle_tx;
                emit(desync_start + dt, EventKind::TxStart, -1, x0, dt);
            }
        }

        t_abs = desync_start + dt;
        if (recording) {
            const double cycle_time = hold + dt;
            const double cycle_area = 0.5 * dt * dt;
            total_time += cycle_time;
            total_area += cycle_area;
            out.transmissions += cycle_tx;
            out.preemptions += cycle_preempt;
            const long bi = std::min<long>(batches - 1, rec_cycle * batches / cfg.cycles);
            acc.area[bi] += cycle_area;
            acc.time[bi] += cycle_time;
            acc.tx[bi] += static_cast<double>(cycle_tx);
            ++out.cycles_run;
        }
    }

    out.maoii_hat = total_area / total_time;
    out.rate_hat = static_cast<double>(out.transmissions) / total_time;
    out.stderr_maoii = detail::BatchAccumulator::ratio_stderr(acc.area, acc.time, out.maoii_hat);
    out.stderr_rate = detail::BatchAccumulator::ratio_stderr(acc.tx, acc.time, out.rate_hat);
    return out;
}

// ---------------------------------------------------------------------------
// Deterministic replay: the same event logic driven by scripted source jumps
// and service durations instead of random draws. Unit-test harness for the
// event semantics and for reproducing drawn sample paths.
// ---------------------------------------------------------------------------

struct ScriptedEvents {
    int initial_source = 1;    ///< 1-based
    int initial_estimate = 1;  ///< 1-based
    std::vector<std::pair<double, int>> jumps;  ///< (absolute time, new state)
    std::vector<double> services;               ///< consumed per transmission start
};

inline EventTrace replay(const ScriptedEvents& script, const Eigen::VectorXd& tau) {
    for (std::size_t i = 0; i < script.jumps.size(); ++i) {
        if (script.jumps[i].first < 0.0 ||
            (i > 0 && script.jumps[i].first <= script.jumps[i - 1].first))
            throw NonMonotoneScript("jump times must be strictly increasing");
    }
    for (double s : script.services)
        if (s < 0.0) throw NonMonotoneScript("service durations must be >= 0");

    const double inf = std::numeric_limits<double>::infinity();
    EventTrace trace;
    int x = script.initial_source;
    int est = script.initial_estimate;
    bool in_sync = (x == est);
    double desync_start = 0.0;
    bool transmitting = false;
    double deliver_t = inf;
    std::size_t ji = 0, si = 0;

    const auto next_service = [&]() { return si < script.services.size() ? script.services[si++] : inf; };
    const auto aoii_at = [&](double t) { return in_sync ? 0.0 : t - desync_start; };

    while (true) {
        const double jump_t = ji < script.jumps.size() ? script.jumps[ji].first : inf;
        const double trig_t =
            (!in_sync && !transmitting) ? desync_start + tau(est - 1) : inf;
        const double t = std::min({jump_t, trig_t, deliver_t});
        if (t == inf) break;

        if (deliver_t <= t) {
            trace.events.push_back({deliver_t, EventKind::TxDeliver, 0, x, aoii_at(deliver_t)});
            est = x;
            in_sync = true;
            transmitting = false;
            const double dt = deliver_t;
            deliver_t = inf;
            trace.events.push_back({dt, EventKind::SyncByDelivery, 0, x, 0.0});
        } else if (trig_t <= t) {
            transmitting = true;
            deliver_t = trig_t + next_service();
            trace.events.push_back({trig_t, EventKind::TxStart, 0, x, aoii_at(trig_t)});
        } else {
            const int nx = script.jumps[ji++].second;
            if (nx < 1 || nx > tau.size() || nx == x)
                throw Error("scripted jump to invalid state " + std::to_string(nx));
            trace.events.push_back({jump_t, EventKind::SourceJump, x, nx,
                                    in_sync ? 0.0 : aoii_at(jump_t)});
            if (transmitting) {
                trace.events.push_back({jump_t, EventKind::TxPreempt, 0, x, aoii_at(jump_t)});
                transmitting = false;
                deliver_t = inf;
            }
            if (in_sync) {
                // leaving sync: mismatch age starts here
                in_sync = false;
                desync_start = jump_t;
                x = nx;
            } else if (nx == est) {
                x = nx;
                in_sync = true;
                trace.events.push_back({jump_t, EventKind::SyncByDrift, 0, nx, 0.0});
            } else {
                x = nx;
                if (desync_start + tau(est - 1) <= jump_t) {
                    // past the threshold: restart immediately with the new value
                    transmitting = true;
                    deliver_t = jump_t + next_service();
                    trace.events.push_back({jump_t, EventKind::TxStart, 0, x, aoii_at(jump_t)});
                }
            }
        }
    }
    return trace;
}

/// Smallest gamma whose analytic sampling rate meets the budget, found by
/// monotone bisection on the Poisson-sampling chain. The rate saturates (as
/// gamma grows the policy approaches the zero-threshold one), so when even
/// the saturated rate fits the budget the search cap is returned and the
/// budget holds with slack.
inline double calibrate_poisson(const GeneratorMatrix& g, double mu, double b,
                                double eps_lambda = 1e-2) {
    if (!(b > 0.0)) throw Error("budget must be positive");
    const double gamma_cap = 1e6 * g.sigma().maxCoeff();
    if (poisson_chain(g, mu, gamma_cap).rate <= b) return gamma_cap;

    double hi = 1.0;
    while (poisson_chain(g, mu, hi).rate < b) {
        hi *= 2.0;
        if (hi > gamma_cap) {
            hi = gamma_cap;
            break;
        }
    }
    double lo = 0.0;
    double rate = poisson_chain(g, mu, hi).rate;
    double gamma = hi;
    for (int i = 0; i < 200 && std::abs(rate - b) > eps_lambda; ++i) {
        gamma = 0.5 * (lo + hi);
        rate = poisson_chain(g, mu, gamma).rate;
        if (rate < b)
            lo = gamma;
        else
            hi = gamma;
    }
    if (std::abs(rate - b) > eps_lambda)
        throw CalibrationFailed("no gamma with |rate - b| <= " + std::to_string(eps_lambda));
    return gamma;
}

} // namespace aoii
