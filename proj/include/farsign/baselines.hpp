#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "errors.hpp"
#include "problems.hpp"
#include "rng.hpp"
#include "vector_ops.hpp"

namespace farsign {

enum class AggregationRule { krum, multi_krum, median, trimmed_mean, rfa, bulyan, mean };

inline std::string_view to_string(AggregationRule r) {
    switch (r) {
    case AggregationRule::krum: return "krum";
    case AggregationRule::multi_krum: return "multi_krum";
    case AggregationRule::median: return "median";
    case AggregationRule::trimmed_mean: return "trimmed_mean";
    case AggregationRule::rfa: return "rfa";
    case AggregationRule::bulyan: return "bulyan";
    case AggregationRule::mean: return "mean";
    }
    return "?";
}

inline AggregationRule aggregation_rule_from_string(std::string_view s) {
    if (s == "krum") return AggregationRule::krum;
    if (s == "multi_krum") return AggregationRule::multi_krum;
    if (s == "median") return AggregationRule::median;
    if (s == "trimmed_mean") return AggregationRule::trimmed_mean;
    if (s == "rfa") return AggregationRule::rfa;
    if (s == "bulyan") return AggregationRule::bulyan;
    if (s == "mean") return AggregationRule::mean;
    throw InvalidArgument("unknown aggregation rule '" + std::string(s) + "'");
}

struct AggregatorSpec {
    AggregationRule rule = AggregationRule::median;
    std::size_t f = 0;
    // multi_krum selection count; 0 means n - f.
    std::size_t multi_k = 0;
    std::size_t rfa_iters = 8;
    double rfa_nu = 1e-6;

    // Smallest input count the rule accepts.
    std::size_t min_inputs() const {
        switch (rule) {
        case AggregationRule::krum:
        case AggregationRule::multi_krum: return f + 3;
        case AggregationRule::bulyan: return 4 * f + 3;
        case AggregationRule::trimmed_mean: return 2 * f + 1;
        default: return 1;
        }
    }
};

namespace detail {

inline bool lex_less(const Vec& a, const Vec& b) { return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end()); }

// Krum scores: sum of squared distances to the n - f - 2 nearest other inputs.
inline std::vector<double> krum_scores(const std::vector<Vec>& g, std::size_t f) {
    const std::size_t n = g.size();
    const std::size_t k = n - f - 2;
    std::vector<double> dist(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) dist[i * n + j] = dist[j * n + i] = squared_distance(g[i], g[j]);
    std::vector<double> scores(n), row;
    for (std::size_t i = 0; i < n; ++i) {
        row.clear();
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) row.push_back(dist[i * n + j]);
        std::sort(row.begin(), row.end());
        double s = 0.0;
        for (std::size_t t = 0; t < k; ++t) s += row[t];
        scores[i] = s;
    }
    return scores;
}

// Indices ordered by (score, position); inputs are already sorted
// lexicographically, so position breaks ties by value.
inline std::vector<std::size_t> krum_ranking(const std::vector<Vec>& g, std::size_t f) {
    const auto scores = krum_scores(g, f);
    std::vector<std::size_t> order(g.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    return order;
}

inline Vec average_of(const std::vector<Vec>& g, std::span<const std::size_t> which) {
    Vec out(g.front().size(), 0.0);
    for (std::size_t i : which) axpy(1.0, g[i], out);
    for (auto& v : out) v /= static_cast<double>(which.size());
    return out;
}

inline Vec coordinatewise(const std::vector<Vec>& g, std::size_t trim, bool median) {
    const std::size_t n = g.size(), d = g.front().size();
    Vec out(d), col(n);
    for (std::size_t j = 0; j < d; ++j) {
        for (std::size_t i = 0; i < n; ++i) col[i] = g[i][j];
        std::sort(col.begin(), col.end());
        if (median) {
            out[j] = n % 2 ? col[n / 2] : 0.5 * (col[n / 2 - 1] + col[n / 2]);
        } else {
            double s = 0.0;
            for (std::size_t i = trim; i < n - trim; ++i) s += col[i];
            out[j] = s / static_cast<double>(n - 2 * trim);
        }
    }
    return out;
}

inline double sum_of_distances(const Vec& z, const std::vector<Vec>& g) {
    double s = 0.0;
    for (const auto& v : g) s += std::sqrt(squared_distance(z, v));
    return s;
}

// Smoothed Weiszfeld iterations started at the coordinatewise median; the
// best iterate seen (by sum of distances) is returned.
inline Vec smoothed_weiszfeld(const std::vector<Vec>& g, std::size_t iters, double nu) {
    Vec z = coordinatewise(g, 0, true);
    Vec best = z;
    double best_obj = sum_of_distances(z, g);
    for (std::size_t it = 0; it < iters; ++it) {
        Vec num(z.size(), 0.0);
        double den = 0.0;
        for (const auto& v : g) {
            const double w = 1.0 / std::max(nu, std::sqrt(squared_distance(z, v)));
            axpy(w, v, num);
            den += w;
        }
        for (std::size_t j = 0; j < z.size(); ++j) z[j] = num[j] / den;
        const double obj = sum_of_distances(z, g);
        if (obj < best_obj) {
            best_obj = obj;
            best = z;
        }
    }
    return best;
}

} // namespace detail

// Robust aggregate of the inputs. Inputs are sorted lexicographically first,
// so the result does not depend on their order.
inline Vec aggregate(const AggregatorSpec& spec, std::vector<Vec> grads) {
    if (grads.empty()) throw InvalidArgument("aggregate: empty input");
    const std::size_t d = grads.front().size();
    for (const auto& g : grads)
        if (g.size() != d) throw DimensionError("aggregate: inputs differ in dimension");
    const std::size_t n = grads.size();
    if (n < spec.min_inputs())
        throw InvalidArgument("aggregate: rule " + std::string(to_string(spec.rule)) + " with f=" + std::to_string(spec.f) +
                              " needs at least " + std::to_string(spec.min_inputs()) + " inputs, got " + std::to_string(n));
    std::sort(grads.begin(), grads.end(), detail::lex_less);

    switch (spec.rule) {
    case AggregationRule::mean: {
        std::vector<std::size_t> all(n);
        std::iota(all.begin(), all.end(), std::size_t{0});
        return detail::average_of(grads, all);
    }
    case AggregationRule::median: return detail::coordinatewise(grads, 0, true);
    case AggregationRule::trimmed_mean: return detail::coordinatewise(grads, spec.f, false);
    case AggregationRule::krum: return grads[detail::krum_ranking(grads, spec.f).front()];
    case AggregationRule::multi_krum: {
        const std::size_t k = spec.multi_k == 0 ? n - spec.f : spec.multi_k;
        if (k > n) throw InvalidArgument("aggregate: multi_k exceeds input count");
        const auto order = detail::krum_ranking(grads, spec.f);
        return detail::average_of(grads, std::span<const std::size_t>(order).first(k));
    }
    case AggregationRule::rfa:
        if (!(spec.rfa_nu > 0.0)) throw InvalidArgument("aggregate: rfa_nu must be > 0");
        return detail::smoothed_weiszfeld(grads, spec.rfa_iters, spec.rfa_nu);
    case AggregationRule::bulyan: {
        const std::size_t theta = n - 2 * spec.f;
        const auto order = detail::krum_ranking(grads, spec.f);
        std::vector<Vec> selected;
        selected.reserve(theta);
        for (std::size_t t = 0; t < theta; ++t) selected.push_back(grads[order[t]]);
        return detail::coordinatewise(selected, spec.f, false);
    }
    }
    throw InvalidArgument("aggregate: unknown rule");
}

// Random-direction zeroth-order gradient estimate d * delta * u with u uniform
// on the unit sphere and delta the two-point difference along u.
inline Vec cyber0_estimate(const Objective& obj, const OracleSpec& spec, std::span<const double> x_stale, double lambda,
                           Rng& rng, IndexSpan batch = {}) {
    if (!(lambda > 0.0)) throw InvalidArgument("cyber0_estimate: lambda must be > 0");
    const std::size_t d = obj.dim();
    Vec u(d);
    double nrm = 0.0;
    while (nrm == 0.0) {
        for (auto& v : u) v = rng.normal();
        nrm = norm2(u);
    }
    for (auto& v : u) v /= nrm;
    OracleSpec zo = spec;
    zo.order = OracleOrder::zeroth;
    const double delta = zeroth_order_feedback(obj, zo, x_stale, u, lambda, rng, batch);
    for (auto& v : u) v *= static_cast<double>(d) * delta;
    return u;
}

// ---------------------------------------------------------------------------
// Buffered aggregation server: worker w feeds slot w mod B; once every slot
// holds at least one vector, the slot means are aggregated and applied.

struct BufferConfig {
    std::size_t slots = 25;
    std::size_t adversaries = 0; // must satisfy slots >= 2 * adversaries + 1
    AggregatorSpec aggregator{};
    double gamma = 0.2;
    // Multiply gamma by decay_factor every decay_every rounds (0 disables).
    std::size_t decay_every = 0;
    double decay_factor = 0.99;
};

struct BufferRecord {
    std::uint64_t round = 0;
    double gamma = 0.0;
    double step_norm = 0.0;
    std::size_t consumed = 0; // vectors folded into this update
};

class BufferState {
public:
    BufferState(const BufferConfig& cfg, std::size_t n_workers, Vec x0)
        : cfg_(cfg), n_workers_(n_workers), x_(std::move(x0)), gamma_(cfg.gamma), slots_(cfg.slots) {
        if (cfg_.slots == 0) throw InvalidArgument("buffer: need at least one slot");
        if (cfg_.slots < 2 * cfg_.adversaries + 1)
            throw InvalidArgument("buffer: B = " + std::to_string(cfg_.slots) + " violates B >= 2f+1 for f = " +
                                  std::to_string(cfg_.adversaries));
        if (n_workers_ < cfg_.slots) throw InvalidArgument("buffer: fewer workers than slots; some slots never fill");
        if (cfg_.slots < cfg_.aggregator.min_inputs())
            throw InvalidArgument("buffer: " + std::to_string(cfg_.slots) + " slots are too few for rule " +
                                  std::string(to_string(cfg_.aggregator.rule)) + " with f=" + std::to_string(cfg_.aggregator.f));
        if (!(gamma_ > 0.0)) throw InvalidArgument("buffer: gamma must be > 0");
    }

    std::size_t slot_of(std::size_t worker) const {
        if (worker >= n_workers_) throw InvalidArgument("buffer: worker " + std::to_string(worker) + " has no slot");
        return worker % cfg_.slots;
    }

    std::optional<BufferRecord> buffered_step(std::size_t worker, Vec gradient) {
        if (gradient.size() != x_.size()) throw DimensionError("buffer: gradient dimension mismatch");
        slots_[slot_of(worker)].push_back(std::move(gradient));
        for (const auto& s : slots_)
            if (s.empty()) return std::nullopt;

        std::vector<Vec> means;
        means.reserve(slots_.size());
        std::size_t consumed = 0;
        for (auto& s : slots_) {
            Vec mean(x_.size(), 0.0);
            for (const auto& g : s) axpy(1.0, g, mean);
            for (auto& v : mean) v /= static_cast<double>(s.size());
            consumed += s.size();
            means.push_back(std::move(mean));
            s.clear();
        }
        const Vec agg = aggregate(cfg_.aggregator, std::move(means));
        axpy(-gamma_, agg, x_);
        if (!all_finite(x_)) throw Fault("buffer: non-finite iterate at round " + std::to_string(round_));
        BufferRecord rec{round_, gamma_, gamma_ * norm2(agg), consumed};
        ++round_;
        if (cfg_.decay_every > 0 && round_ % cfg_.decay_every == 0) gamma_ *= cfg_.decay_factor;
        return rec;
    }

    const Vec& x() const { return x_; }
    std::uint64_t round() const { return round_; }
    double gamma() const { return gamma_; }
    std::size_t pending(std::size_t slot) const { return slots_.at(slot).size(); }
    const BufferConfig& config() const { return cfg_; }

private:
    BufferConfig cfg_;
    std::size_t n_workers_;
    Vec x_;
    double gamma_;
    std::vector<std::vector<Vec>> slots_;
    std::uint64_t round_ = 0;
};

} // namespace farsign
