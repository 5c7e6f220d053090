#pragma once

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "errors.hpp"

#ifndef FARSIGN_GIT_DESCRIBE
#define FARSIGN_GIT_DESCRIBE "unknown"
#endif

namespace farsign {

struct TraceRow {
    std::uint64_t n = 0;
    double sim_time = 0.0;
    double f_val = 0.0;
    double grad_l1 = 0.0;
    double track_err = 0.0;    // mean over honest workers of |e^(w)|
    double track_err_sq = 0.0; // mean over honest workers of |e^(w)|^2 (JSONL only)
    double ergodic_avg = 0.0;
    std::uint64_t oracle_calls = 0;
    std::optional<double> test_metric;

    bool operator==(const TraceRow&) const = default;
};

using Trace = std::vector<TraceRow>;

// Running sum_k alpha_k g_k / sum_k alpha_k.
class ErgodicAverage {
public:
    double update(double alpha, double value) {
        if (!(alpha > 0.0)) throw InvalidArgument("ergodic_update: alpha must be > 0");
        num_ += alpha * value;
        den_ += alpha;
        return value_or_zero();
    }
    double value_or_zero() const { return den_ > 0.0 ? num_ / den_ : 0.0; }
    double numerator() const { return num_; }
    double denominator() const { return den_; }

private:
    double num_ = 0.0;
    double den_ = 0.0;
};

enum class Metric { f_val, grad_l1, track_err, track_err_sq, ergodic_avg, test_metric };

inline Metric metric_from_string(std::string_view s) {
    if (s == "f_val") return Metric::f_val;
    if (s == "grad_l1") return Metric::grad_l1;
    if (s == "track_err") return Metric::track_err;
    if (s == "track_err_sq") return Metric::track_err_sq;
    if (s == "ergodic_avg") return Metric::ergodic_avg;
    if (s == "test_metric") return Metric::test_metric;
    throw InvalidArgument("unknown metric '" + std::string(s) + "'");
}

inline std::optional<double> metric_value(const TraceRow& r, Metric m) {
    switch (m) {
    case Metric::f_val: return r.f_val;
    case Metric::grad_l1: return r.grad_l1;
    case Metric::track_err: return r.track_err;
    case Metric::track_err_sq: return r.track_err_sq;
    case Metric::ergodic_avg: return r.ergodic_avg;
    case Metric::test_metric: return r.test_metric;
    }
    return std::nullopt;
}

struct RateFit {
    std::uint64_t n_lo = 0;
    std::uint64_t n_hi = 0;
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
    double slope_stderr = 0.0;
    std::size_t rows = 0;
};

// Least squares of log(metric) on log(n) over rows with n in [n_lo, n_hi],
// n >= 1 and metric > 0.
inline RateFit fit_rate(const Trace& trace, Metric metric, std::uint64_t n_lo, std::uint64_t n_hi) {
    if (n_lo > n_hi) throw InvalidArgument("fit_rate: empty window");
    std::vector<double> xs, ys;
    bool any_row = false;
    for (const auto& r : trace) {
        if (r.n < n_lo || r.n > n_hi || r.n == 0) continue;
        const auto v = metric_value(r, metric);
        if (!v) continue;
        any_row = true;
        if (!(*v > 0.0) || !std::isfinite(*v)) continue;
        xs.push_back(std::log(static_cast<double>(r.n)));
        ys.push_back(std::log(*v));
    }
    if (any_row && xs.empty()) throw DataError("fit_rate: metric is zero on every row in the window");
    if (xs.size() < 10)
        throw DataError("fit_rate: need at least 10 usable rows in [" + std::to_string(n_lo) + ", " + std::to_string(n_hi) +
                        "], found " + std::to_string(xs.size()));
    const double k = static_cast<double>(xs.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= k;
    my /= k;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    if (sxx == 0.0) throw DataError("fit_rate: all rows share one n");
    RateFit fit;
    fit.n_lo = n_lo;
    fit.n_hi = n_hi;
    fit.rows = xs.size();
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    const double sse = std::max(0.0, syy - fit.slope * sxy);
    fit.r_squared = syy > 0.0 ? std::clamp(1.0 - sse / syy, 0.0, 1.0) : 1.0;
    fit.slope_stderr = xs.size() > 2 ? std::sqrt(sse / (k - 2.0) / sxx) : 0.0;
    return fit;
}

// Averages traces row-wise over the counters present in every trace.
inline Trace merge_traces(const std::vector<Trace>& traces) {
    if (traces.empty()) return {};
    std::map<std::uint64_t, std::pair<TraceRow, std::size_t>> acc;
    std::map<std::uint64_t, std::size_t> test_count;
    for (const auto& t : traces) {
        for (const auto& r : t) {
            auto& [sum, count] = acc[r.n];
            sum.n = r.n;
            sum.sim_time += r.sim_time;
            sum.f_val += r.f_val;
            sum.grad_l1 += r.grad_l1;
            sum.track_err += r.track_err;
            sum.track_err_sq += r.track_err_sq;
            sum.ergodic_avg += r.ergodic_avg;
            sum.oracle_calls += r.oracle_calls;
            if (r.test_metric) {
                sum.test_metric = sum.test_metric.value_or(0.0) + *r.test_metric;
                ++test_count[r.n];
            }
            ++count;
        }
    }
    Trace out;
    for (auto& [n, entry] : acc) {
        auto& [sum, count] = entry;
        if (count != traces.size()) continue;
        const double k = static_cast<double>(count);
        sum.sim_time /= k;
        sum.f_val /= k;
        sum.grad_l1 /= k;
        sum.track_err /= k;
        sum.track_err_sq /= k;
        sum.ergodic_avg /= k;
        sum.oracle_calls /= count;
        if (sum.test_metric) *sum.test_metric /= static_cast<double>(test_count[n]);
        out.push_back(sum);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Export. CSV carries the fixed column set; JSONL starts with a manifest object
// and then one object per row.

inline const char* csv_header() { return "n,sim_time,f_val,grad_l1,track_err,ergodic_avg,oracle_calls,test_metric"; }

namespace detail {
inline std::string fmt_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s, const std::string& where) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw DataError(where + ": not a number: '" + std::string(s) + "'");
    return v;
}
} // namespace detail

inline void write_csv(std::ostream& os, const Trace& trace) {
    os << csv_header() << '\n';
    for (const auto& r : trace) {
        os << r.n << ',' << detail::fmt_double(r.sim_time) << ',' << detail::fmt_double(r.f_val) << ','
           << detail::fmt_double(r.grad_l1) << ',' << detail::fmt_double(r.track_err) << ','
           << detail::fmt_double(r.ergodic_avg) << ',' << r.oracle_calls << ',';
        if (r.test_metric) os << detail::fmt_double(*r.test_metric);
        os << '\n';
    }
}

inline Trace read_csv(std::istream& is, const std::string& name = "csv") {
    std::string line;
    if (!std::getline(is, line) || line != csv_header()) throw DataError(name + ": missing or unexpected header");
    Trace out;
    std::size_t line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string_view> f;
        std::string_view rest(line);
        while (true) {
            const auto pos = rest.find(',');
            f.push_back(rest.substr(0, pos));
            if (pos == std::string_view::npos) break;
            rest.remove_prefix(pos + 1);
        }
        const std::string where = name + ":" + std::to_string(line_no);
        if (f.size() != 8) throw DataError(where + ": expected 8 fields");
        TraceRow r;
        r.n = static_cast<std::uint64_t>(detail::parse_double(f[0], where));
        r.sim_time = detail::parse_double(f[1], where);
        r.f_val = detail::parse_double(f[2], where);
        r.grad_l1 = detail::parse_double(f[3], where);
        r.track_err = detail::parse_double(f[4], where);
        r.ergodic_avg = detail::parse_double(f[5], where);
        r.oracle_calls = static_cast<std::uint64_t>(detail::parse_double(f[6], where));
        if (!f[7].empty()) r.test_metric = detail::parse_double(f[7], where);
        out.push_back(r);
    }
    return out;
}

inline nlohmann::json row_to_json(const TraceRow& r) {
    nlohmann::json j{{"n", r.n},
                     {"sim_time", r.sim_time},
                     {"f_val", r.f_val},
                     {"grad_l1", r.grad_l1},
                     {"track_err", r.track_err},
                     {"track_err_sq", r.track_err_sq},
                     {"ergodic_avg", r.ergodic_avg},
                     {"oracle_calls", r.oracle_calls}};
    j["test_metric"] = r.test_metric ? nlohmann::json(*r.test_metric) : nlohmann::json(nullptr);
    return j;
}

inline TraceRow row_from_json(const nlohmann::json& j) {
    TraceRow r;
    r.n = j.at("n").get<std::uint64_t>();
    r.sim_time = j.at("sim_time").get<double>();
    r.f_val = j.at("f_val").get<double>();
    r.grad_l1 = j.at("grad_l1").get<double>();
    r.track_err = j.at("track_err").get<double>();
    r.track_err_sq = j.value("track_err_sq", 0.0);
    r.ergodic_avg = j.at("ergodic_avg").get<double>();
    r.oracle_calls = j.at("oracle_calls").get<std::uint64_t>();
    if (j.contains("test_metric") && !j["test_metric"].is_null()) r.test_metric = j["test_metric"].get<double>();
    return r;
}

inline void write_jsonl(std::ostream& os, const Trace& trace, nlohmann::json manifest) {
    manifest["type"] = "manifest";
    if (!manifest.contains("git_describe")) manifest["git_describe"] = FARSIGN_GIT_DESCRIBE;
    os << manifest.dump() << '\n';
    for (const auto& r : trace) {
        auto j = row_to_json(r);
        j["type"] = "row";
        os << j.dump() << '\n';
    }
}

struct JsonlTrace {
    nlohmann::json manifest;
    Trace rows;
};

inline JsonlTrace read_jsonl(std::istream& is, const std::string& name = "jsonl") {
    JsonlTrace out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw DataError(name + ":" + std::to_string(line_no) + ": " + e.what());
        }
        const auto type = j.value("type", std::string("row"));
        if (type == "manifest")
            out.manifest = std::move(j);
        else
            out.rows.push_back(row_from_json(j));
    }
    return out;
}

inline void export_trace(const Trace& trace, const std::string& csv_path, const std::string& jsonl_path,
                         const nlohmann::json& manifest) {
    std::ofstream csv(csv_path, std::ios::binary);
    if (!csv) throw Error("cannot write '" + csv_path + "'");
    write_csv(csv, trace);
    std::ofstream jl(jsonl_path, std::ios::binary);
    if (!jl) throw Error("cannot write '" + jsonl_path + "'");
    write_jsonl(jl, trace, manifest);
    if (!csv || !jl) throw Error("write failed for '" + csv_path + "' or '" + jsonl_path + "'");
}

inline Trace load_trace(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open trace '" + path + "'");
    if (path.size() >= 6 && path.compare(path.size() - 6, 6, ".jsonl") == 0) return read_jsonl(in, path).rows;
    return read_csv(in, path);
}

} // namespace farsign
