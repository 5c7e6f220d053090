#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iostream>
#include <limits>
#include <memory>
#include <optional>
#include <queue>
#include <string>
#include <string_view>
#include <vector>

#include "attacks.hpp"
#include "baselines.hpp"
#include "dictionaries.hpp"
#include "engine.hpp"
#include "errors.hpp"
#include "metrics.hpp"
#include "problems.hpp"
#include "rng.hpp"
#include "schedules.hpp"

namespace farsign {

// ---------------------------------------------------------------------------
// Workers

enum class ComputeKind { fixed, uniform, lognormal };

inline std::string_view to_string(ComputeKind k) {
    switch (k) {
    case ComputeKind::fixed: return "fixed";
    case ComputeKind::uniform: return "uniform";
    case ComputeKind::lognormal: return "lognormal";
    }
    return "?";
}

inline ComputeKind compute_kind_from_string(std::string_view s) {
    if (s == "fixed") return ComputeKind::fixed;
    if (s == "uniform") return ComputeKind::uniform;
    if (s == "lognormal") return ComputeKind::lognormal;
    throw InvalidArgument("unknown compute-time model '" + std::string(s) + "'");
}

// Per-request compute time. The lognormal is clamped to [t_min, t_max].
struct ComputeTime {
    ComputeKind kind = ComputeKind::fixed;
    double t = 1.0;
    double lo = 1.0;
    double hi = 2.0;
    double mu = 0.0;
    double sigma = 0.5;
    double t_min = 0.0;
    double t_max = std::numeric_limits<double>::infinity();

    static ComputeTime fixed(double t) { return {ComputeKind::fixed, t}; }
    static ComputeTime uniform(double lo, double hi) {
        ComputeTime c;
        c.kind = ComputeKind::uniform;
        c.lo = lo;
        c.hi = hi;
        return c;
    }
    static ComputeTime lognormal(double mu, double sigma, double t_min, double t_max) {
        ComputeTime c;
        c.kind = ComputeKind::lognormal;
        c.mu = mu;
        c.sigma = sigma;
        c.t_min = t_min;
        c.t_max = t_max;
        return c;
    }

    void validate() const {
        switch (kind) {
        case ComputeKind::fixed:
            if (!(t >= 0.0) || !std::isfinite(t)) throw InvalidArgument("compute time: fixed t must be finite and >= 0");
            break;
        case ComputeKind::uniform:
            if (!(lo >= 0.0 && hi >= lo) || !std::isfinite(hi)) throw InvalidArgument("compute time: need 0 <= lo <= hi < inf");
            break;
        case ComputeKind::lognormal:
            if (!(sigma >= 0.0) || !(t_min >= 0.0) || !(t_max >= t_min))
                throw InvalidArgument("compute time: lognormal needs sigma >= 0 and 0 <= t_min <= t_max");
            break;
        }
    }

    double sample(Rng& rng) const {
        switch (kind) {
        case ComputeKind::fixed: return t;
        case ComputeKind::uniform: return lo == hi ? lo : rng.uniform(lo, hi);
        case ComputeKind::lognormal: return std::clamp(std::exp(rng.normal(mu, sigma)), t_min, t_max);
        }
        return t;
    }

    double min_time() const {
        switch (kind) {
        case ComputeKind::fixed: return t;
        case ComputeKind::uniform: return lo;
        case ComputeKind::lognormal: return t_min;
        }
        return t;
    }

    double max_time() const {
        switch (kind) {
        case ComputeKind::fixed: return t;
        case ComputeKind::uniform: return hi;
        case ComputeKind::lognormal: return t_max;
        }
        return t;
    }

    // Used only for inverse-probability arrival weights.
    double mean_time() const {
        switch (kind) {
        case ComputeKind::fixed: return t;
        case ComputeKind::uniform: return 0.5 * (lo + hi);
        case ComputeKind::lognormal: return std::clamp(std::exp(mu + 0.5 * sigma * sigma), t_min, t_max);
        }
        return t;
    }
};

struct WorkerModel {
    std::size_t id = 0;
    bool honest = true;
    ComputeTime compute{};
};

inline std::vector<WorkerModel> make_workers(std::size_t n, const ComputeTime& compute,
                                             const std::vector<std::size_t>& adversaries = {}) {
    std::vector<WorkerModel> out(n);
    for (std::size_t w = 0; w < n; ++w) out[w] = {w, true, compute};
    for (std::size_t a : adversaries) {
        if (a >= n) throw InvalidArgument("adversary index " + std::to_string(a) + " out of range");
        out[a].honest = false;
    }
    return out;
}

// Bound on the number of events the server can apply while one request is
// outstanding. `request_overhead` is the deterministic part of every request
// (oracle cost); `min_server_cost` is the smallest processing time of any
// event and `all_server_costs_zero` says whether every event is free.
//
// Per other worker v: the one request v already has in flight (which may be
// backlogged and ready long before w dispatched), plus follow-ups, each ready
// at least t_min_v + c after the previous one finished processing, and all no
// later than w's own ready time. With free events there is no backlog, so v's
// in-flight request is ready no earlier than w's dispatch and ties cannot be
// lost at both ends, giving ceil(t_max / t_min).
inline std::uint64_t staleness_bound(const std::vector<WorkerModel>& workers, double request_overhead = 0.0,
                                     double min_server_cost = 0.0, bool all_server_costs_zero = true) {
    if (workers.size() <= 1) return 0;
    for (const auto& w : workers) {
        w.compute.validate();
        if (!std::isfinite(w.compute.max_time()))
            throw InvalidArgument("staleness_bound: worker " + std::to_string(w.id) + " has an untruncated compute time");
        if (!(w.compute.min_time() + request_overhead > 0.0))
            throw InvalidArgument("staleness_bound: worker " + std::to_string(w.id) +
                                  " can finish in zero time; truncate the compute time away from 0");
    }
    std::uint64_t worst = 0;
    for (const auto& w : workers) {
        const double t_max = w.compute.max_time() + request_overhead;
        std::uint64_t total = 0;
        for (const auto& v : workers) {
            if (v.id == w.id) continue;
            const double t_min = v.compute.min_time() + request_overhead;
            double k;
            if (all_server_costs_zero)
                k = std::ceil(t_max / t_min);
            else
                k = 1.0 + std::floor(t_max / (t_min + min_server_cost));
            total += static_cast<std::uint64_t>(std::max(1.0, k));
        }
        worst = std::max(worst, total);
    }
    return worst;
}

// ---------------------------------------------------------------------------
// Run configuration

enum class Algorithm { farsign, baseline };

inline std::string_view to_string(Algorithm a) { return a == Algorithm::farsign ? "farsign" : "baseline"; }

struct CostModel {
    double oracle = 1.0;
    std::optional<double> update;      // FAR-SIGN signed update; default K
    std::optional<double> aggregation; // baseline aggregation; default d/100 + B
};

struct RunPlan {
    Algorithm algorithm = Algorithm::farsign;
    std::uint64_t budget = 0; // oracle calls
    std::size_t directions_per_event = 1;
    std::uint64_t seed = 0;
    CostModel cost{};
    std::uint64_t eval_every = 100;
    std::uint64_t dense_until = 1000;
    // Test-set metric cadence in events (0: every recorded row).
    std::uint64_t test_every = 0;
    // Evaluate |grad f|_1 for the ergodic average every this many events,
    // weighting by alpha * stride.
    std::uint64_t ergodic_stride = 1;
    std::uint64_t max_events = 0; // 0: budget only
    bool inverse_probability = false;
    AverageStorage storage = AverageStorage::dense;
    std::uint64_t snapshot_every = 0;
    bool progress = false;
};

struct RunSetup {
    RunPlan plan;
    std::shared_ptr<const Objective> objective;
    OracleSpec oracle;
    AttackSpec attack;
    std::vector<WorkerModel> workers;
    Vec x0;
    // FAR-SIGN
    std::shared_ptr<const DirectionDictionary> dictionary;
    ScheduleSpec schedule;
    // Baseline
    BufferConfig buffer;
    double baseline_lambda = 1e-3;
};

struct RunResult {
    Trace trace;
    Vec x_final;
    std::uint64_t events = 0;
    std::uint64_t oracle_calls = 0;
    std::uint64_t rounds = 0; // baseline aggregation rounds
    std::uint64_t max_staleness = 0;
    std::optional<std::uint64_t> staleness_limit;
    double sim_time = 0.0;
    std::vector<Snapshot> snapshots;
};

namespace detail {

// K distinct indices from [0, m) (Floyd's algorithm).
inline std::vector<std::size_t> sample_directions(std::size_t m, std::size_t k, Rng& rng) {
    std::vector<std::size_t> out;
    out.reserve(k);
    for (std::size_t j = m - k; j < m; ++j) {
        const std::size_t t = rng.index(j + 1);
        if (std::find(out.begin(), out.end(), t) == out.end())
            out.push_back(t);
        else
            out.push_back(j);
    }
    return out;
}

inline bool attack_needs_honest_value(AttackKind k) { return k == AttackKind::none || k == AttackKind::sign_flip; }

struct Request {
    double ready = 0.0;
    std::size_t worker = 0;
    bool operator>(const Request& o) const { return ready != o.ready ? ready > o.ready : worker > o.worker; }
};

struct InFlight {
    Snapshot snap;
    std::vector<std::size_t> directions;
};

} // namespace detail

class Simulation {
public:
    explicit Simulation(RunSetup setup) : s_(std::move(setup)) { validate(); }

    RunResult run() {
        const auto& plan = s_.plan;
        const auto& obj = *s_.objective;
        const std::size_t n_workers = s_.workers.size();
        const bool farsign = plan.algorithm == Algorithm::farsign;
        const bool zeroth = s_.oracle.order == OracleOrder::zeroth;

        // RNG streams: arrivals, oracle noise, attack noise and minibatch
        // draws are keyed per worker.
        std::vector<Rng> arrival_rng, oracle_rng, attack_rng, data_rng;
        for (std::size_t w = 0; w < n_workers; ++w) {
            arrival_rng.emplace_back(plan.seed, Stream::arrivals, w);
            oracle_rng.emplace_back(plan.seed, Stream::oracle, w);
            attack_rng.emplace_back(plan.seed, Stream::attack, w);
            data_rng.emplace_back(plan.seed, Stream::data, w);
        }

        std::optional<ServerState> server;
        std::optional<BufferState> buffer;
        std::size_t m = 0;
        if (farsign) {
            server.emplace(s_.dictionary, s_.schedule, s_.x0, plan.storage);
            m = s_.dictionary->directions();
            if (plan.inverse_probability) server->set_arrival_probs(arrival_probabilities());
        } else {
            buffer.emplace(s_.buffer, n_workers, s_.x0);
        }
        HonestStats stats(farsign ? m : obj.dim());

        const std::size_t k_dirs = plan.directions_per_event;
        const std::uint64_t calls_per_request =
            farsign ? (zeroth ? 2 * k_dirs : 1) : (zeroth ? 2 : 1);
        const double request_overhead = plan.cost.oracle * static_cast<double>(calls_per_request);
        const double c_upd = plan.cost.update.value_or(static_cast<double>(k_dirs));
        const double c_agg = plan.cost.aggregation.value_or(static_cast<double>(obj.dim()) / 100.0 +
                                                            static_cast<double>(s_.buffer.slots));

        RunResult res;
        try {
            const double min_cost = farsign ? c_upd : 0.0;
            const bool all_zero = farsign ? c_upd == 0.0 : c_agg == 0.0;
            res.staleness_limit = staleness_bound(s_.workers, request_overhead, min_cost, all_zero);
        } catch (const InvalidArgument&) {
            res.staleness_limit.reset();
        }

        auto current_x = [&]() -> const Vec& { return farsign ? server->x() : buffer->x(); };
        std::uint64_t n = 0; // events applied
        double clock = 0.0;  // server free time
        std::uint64_t calls = 0;
        ErgodicAverage ergodic;
        double ergodic_value = 0.0;

        std::priority_queue<detail::Request, std::vector<detail::Request>, std::greater<>> queue;
        std::vector<detail::InFlight> in_flight(n_workers);
        auto dispatch = [&](std::size_t w, double at) {
            auto& slot = in_flight[w];
            slot.snap = {current_x(), n};
            if (farsign) slot.directions = detail::sample_directions(m, k_dirs, arrival_rng[w]);
            const double dt = s_.workers[w].compute.sample(arrival_rng[w]);
            queue.push({at + dt + request_overhead, w});
        };
        for (std::size_t w = 0; w < n_workers; ++w) dispatch(w, 0.0);

        std::vector<std::size_t> batch;
        auto draw_batch = [&](std::size_t w) -> IndexSpan {
            if (s_.oracle.batch_size == 0 || obj.sample_count() == 0) return {};
            batch.resize(s_.oracle.batch_size);
            for (auto& b : batch) b = data_rng[w].index(obj.sample_count());
            return batch;
        };

        auto record = [&](bool force) {
            const bool due = n < plan.dense_until || (plan.eval_every > 0 && n % plan.eval_every == 0);
            if (!due && !force) return;
            if (!res.trace.empty() && res.trace.back().n == n) return;
            TraceRow row;
            row.n = n;
            row.sim_time = clock;
            const Vec& x = current_x();
            row.f_val = obj.eval(x);
            const Vec g = obj.grad(x);
            row.grad_l1 = norm1(g);
            if (farsign) {
                double sum = 0.0, sum_sq = 0.0;
                std::size_t honest = 0;
                for (std::size_t w = 0; w < n_workers; ++w) {
                    if (!s_.workers[w].honest) continue;
                    const double e2 = server->tracking_error_sq(g, w);
                    sum += std::sqrt(e2);
                    sum_sq += e2;
                    ++honest;
                }
                if (honest > 0) {
                    row.track_err = sum / static_cast<double>(honest);
                    row.track_err_sq = sum_sq / static_cast<double>(honest);
                }
            }
            row.ergodic_avg = ergodic_value;
            row.oracle_calls = calls;
            const bool test_due = plan.test_every == 0 ? true : (n % plan.test_every == 0);
            if (test_due || force) row.test_metric = obj.test_metric(x);
            res.trace.push_back(row);
        };
        record(true);

        while (!queue.empty()) {
            if (plan.max_events > 0 && n >= plan.max_events) break;
            const auto req = queue.top();
            const std::size_t w = req.worker;
            const auto& worker = s_.workers[w];
            const bool adversarial = !worker.honest;
            const bool computes = !adversarial || detail::attack_needs_honest_value(s_.attack.kind);
            const std::uint64_t needed = computes ? calls_per_request : 0;
            if (calls + needed > plan.budget) break;
            queue.pop();

            auto& job = in_flight[w];
            const std::uint64_t staleness = n - job.snap.n;
            if (res.staleness_limit && staleness > *res.staleness_limit)
                throw Fault("staleness " + std::to_string(staleness) + " exceeds bound " +
                            std::to_string(*res.staleness_limit) + " at event " + std::to_string(n));
            res.max_staleness = std::max(res.max_staleness, staleness);

            // Ergodic statistic at the pre-update iterate x_n.
            if (n % plan.ergodic_stride == 0) {
                const double alpha = farsign ? schedule_at(s_.schedule, n).alpha : buffer->gamma();
                ergodic_value = ergodic.update(alpha * static_cast<double>(plan.ergodic_stride), norm1(obj.grad(current_x())));
            }

            double cost = 0.0;
            if (farsign) {
                FeedbackEvent ev;
                ev.worker = w;
                ev.directions = job.directions;
                ev.snapshot_n = job.snap.n;
                ev.staleness = staleness;
                ev.values.assign(k_dirs, 0.0);
                if (computes) {
                    const IndexSpan b = draw_batch(w);
                    const auto& a = s_.dictionary->matrix(w);
                    if (!zeroth) {
                        const Vec g = stochastic_gradient(obj, s_.oracle, job.snap.x, oracle_rng[w], b);
                        for (std::size_t k = 0; k < k_dirs; ++k) ev.values[k] = a.column_dot(job.directions[k], g);
                    } else {
                        const double lambda = schedule_at(s_.schedule, n).lambda;
                        if (a.is_identity()) {
                            ev.values = zeroth_order_coordinate_feedback(obj, s_.oracle, job.snap.x, job.directions, lambda,
                                                                         oracle_rng[w], b);
                        } else {
                            for (std::size_t k = 0; k < k_dirs; ++k)
                                ev.values[k] = zeroth_order_feedback(obj, s_.oracle, job.snap.x, a.column(job.directions[k]),
                                                                     lambda, oracle_rng[w], b);
                        }
                    }
                    calls += needed;
                }
                if (adversarial) {
                    for (std::size_t k = 0; k < k_dirs; ++k)
                        ev.values[k] = corrupt_scalar(s_.attack, ev.values[k], stats, attack_rng[w], job.directions[k]);
                } else {
                    for (std::size_t k = 0; k < k_dirs; ++k) stats.observe(job.directions[k], ev.values[k]);
                }
                const auto rec = server->apply_event(ev);
                if (rec.fault) throw Fault(rec.fault_reason);
                cost = c_upd;
            } else {
                Vec g(obj.dim(), 0.0);
                if (computes) {
                    const IndexSpan b = draw_batch(w);
                    g = zeroth ? cyber0_estimate(obj, s_.oracle, job.snap.x, s_.baseline_lambda, oracle_rng[w], b)
                               : stochastic_gradient(obj, s_.oracle, job.snap.x, oracle_rng[w], b);
                    calls += needed;
                }
                if (adversarial)
                    g = corrupt_vector(s_.attack, g, stats, attack_rng[w]);
                else
                    stats.observe(g);
                if (buffer->buffered_step(w, std::move(g))) {
                    cost = c_agg;
                    ++res.rounds;
                }
            }
            ++n;
            clock = std::max(clock, req.ready) + cost;
            if (plan.snapshot_every > 0 && n % plan.snapshot_every == 0) res.snapshots.push_back({current_x(), n});
            record(false);
            if (plan.progress && n % 10000 == 0)
                std::cerr << "[" << to_string(plan.algorithm) << " seed " << plan.seed << "] events " << n << " calls "
                          << calls << '\n';
            dispatch(w, clock);
        }
        record(true);

        res.x_final = current_x();
        res.events = n;
        res.oracle_calls = calls;
        res.sim_time = clock;
        return res;
    }

    const RunSetup& setup() const { return s_; }

private:
    void validate() const {
        const auto& plan = s_.plan;
        if (!s_.objective) throw InvalidArgument("run: no objective");
        if (plan.budget == 0) throw InvalidArgument("run: oracle budget must be > 0");
        if (s_.workers.empty()) throw InvalidArgument("run: no workers");
        if (s_.x0.size() != s_.objective->dim()) throw DimensionError("run: x0 dimension does not match the objective");
        if (plan.eval_every == 0 && plan.dense_until == 0) throw InvalidArgument("run: no metric cadence");
        if (plan.ergodic_stride == 0) throw InvalidArgument("run: ergodic_stride must be >= 1");
        s_.oracle.validate();
        s_.attack.validate();
        for (std::size_t w = 0; w < s_.workers.size(); ++w) {
            if (s_.workers[w].id != w) throw InvalidArgument("run: worker ids must be 0..N-1 in order");
            s_.workers[w].compute.validate();
        }
        if (plan.algorithm == Algorithm::farsign) {
            if (!s_.dictionary) throw InvalidArgument("run: FAR-SIGN needs a dictionary");
            if (s_.dictionary->workers() != s_.workers.size())
                throw InvalidArgument("run: dictionary has " + std::to_string(s_.dictionary->workers()) + " workers, plan has " +
                                      std::to_string(s_.workers.size()));
            if (s_.dictionary->dim() != s_.objective->dim()) throw DimensionError("run: dictionary dimension != objective");
            if (plan.directions_per_event < 1 || plan.directions_per_event > s_.dictionary->directions())
                throw InvalidArgument("run: directions_per_event K must lie in [1, m]");
            s_.schedule.validate();
            const bool zo = s_.oracle.order == OracleOrder::zeroth;
            if (zo != s_.schedule.zeroth_order())
                throw InvalidArgument("run: schedule mode does not match the oracle order");
            if (zo && (s_.schedule.mode == FeedbackMode::zeroth_coupled) != s_.oracle.coupled)
                throw InvalidArgument("run: coupled schedule requires a coupled oracle and vice versa");
        } else {
            if (!(s_.baseline_lambda > 0.0) && s_.oracle.order == OracleOrder::zeroth)
                throw InvalidArgument("run: baseline lambda must be > 0");
        }
    }

    // Share of arrivals for each (worker, direction): worker rate proportional
    // to 1 / mean compute time, directions uniform.
    Vec arrival_probabilities() const {
        const std::size_t n = s_.workers.size(), m = s_.dictionary->directions();
        Vec rate(n);
        double total = 0.0;
        for (std::size_t w = 0; w < n; ++w) {
            const double t = s_.workers[w].compute.mean_time() + s_.plan.cost.oracle;
            rate[w] = 1.0 / std::max(t, 1e-12);
            total += rate[w];
        }
        Vec probs(n * m);
        for (std::size_t w = 0; w < n; ++w)
            for (std::size_t i = 0; i < m; ++i) probs[w * m + i] = rate[w] / total / static_cast<double>(m);
        return probs;
    }

    RunSetup s_;
};

inline RunResult run(RunSetup setup) { return Simulation(std::move(setup)).run(); }

} // namespace farsign
