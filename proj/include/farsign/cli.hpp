#pragma once

#include <glob.h>

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <iomanip>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "config.hpp"
#include "metrics.hpp"
#include "sim.hpp"

namespace farsign {

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int out_of_band = 1;
inline constexpr int config_error = 2;
inline constexpr int certification = 3;
inline constexpr int fault = 4;
} // namespace exit_code

inline constexpr const char* out_dir_env = "FARSIGN_OUT_DIR";

struct CliOptions {
    std::string config;
    std::optional<std::uint64_t> seed; // replaces the config's seed list
    std::size_t jobs = 1;
    bool strict = false;
    std::optional<std::string> out;
    bool progress = false;
};

struct RatesOptions {
    std::vector<std::string> traces; // paths or glob patterns
    std::string metric = "ergodic_avg";
    std::uint64_t n_lo = 1000;
    std::uint64_t n_hi = std::numeric_limits<std::uint64_t>::max();
    double target = -0.25;
    double tol = 0.05;
};

struct RobustnessOptions {
    std::string dictionary; // file path, or "identity:<d>:<N>" / "ganesh_example"
    std::size_t f = 0;
    std::string method = "auto";
    std::uint64_t samples = 100000;
    std::uint64_t seed = 0;
    std::uint64_t subset_cap = 1000000;
};

namespace detail {

inline std::string output_dir(const CliOptions& opt, const RunConfig& cfg) {
    if (opt.out) return *opt.out;
    if (cfg.output.dir) return *cfg.output.dir;
    if (const char* env = std::getenv(out_dir_env); env && *env) return env;
    return "out";
}

inline std::vector<std::uint64_t> seeds_of(const CliOptions& opt, const RunConfig& cfg) {
    if (opt.seed) return {*opt.seed};
    return cfg.sim.seeds;
}

inline std::vector<std::string> expand_globs(const std::vector<std::string>& patterns) {
    std::vector<std::string> out;
    for (const auto& p : patterns) {
        glob_t g{};
        const int rc = ::glob(p.c_str(), 0, nullptr, &g);
        if (rc == 0)
            for (std::size_t i = 0; i < g.gl_pathc; ++i) out.emplace_back(g.gl_pathv[i]);
        globfree(&g);
        if (rc == GLOB_NOMATCH && std::filesystem::exists(p)) out.push_back(p);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

// Runs `fn(i)` for i in [0, count) on up to `jobs` threads; the first
// exception is rethrown after all threads finish.
template <class Fn>
void parallel_for(std::size_t count, std::size_t jobs, Fn fn) {
    jobs = std::max<std::size_t>(1, std::min(jobs, count));
    if (jobs == 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first;
    std::mutex mu;
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < jobs; ++t) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(mu);
                    if (!first) first = std::current_exception();
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (first) std::rethrow_exception(first);
}

// Everything a run or compare needs, validated.
struct Prepared {
    RunConfig cfg;
    std::shared_ptr<const Objective> objective;
    std::shared_ptr<const DirectionDictionary> dictionary;
    ScheduleSpec schedule;
    json resolved;
    std::string out_dir;
    std::vector<std::uint64_t> seeds;
};

struct ExitRequest {
    int code;
};

inline Prepared prepare(const CliOptions& opt, const RunConfig& cfg, std::ostream& err, bool need_farsign) {
    Prepared p;
    p.cfg = cfg;
    p.seeds = seeds_of(opt, cfg);
    p.out_dir = output_dir(opt, cfg);
    try {
        p.objective = build_objective(cfg.problem);
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(std::string("config.problem: ") + e.what());
    }
    std::size_t m = 1;
    if (need_farsign) {
        try {
            p.dictionary = build_dictionary(cfg, p.objective->dim());
            p.schedule = resolve_schedule(cfg, p.dictionary->directions());
            p.schedule.validate();
        } catch (const ConfigError&) {
            throw;
        } catch (const Error& e) {
            throw ConfigError(std::string("config.dictionary/schedule: ") + e.what());
        }
        m = p.dictionary->directions();
        if (cfg.sim.k > m)
            throw ConfigError("config.sim.K: " + std::to_string(cfg.sim.k) + " exceeds the " + std::to_string(m) +
                              " directions per worker");
        const bool zo = cfg.oracle.order == "zeroth";
        if (zo != p.schedule.zeroth_order())
            throw ConfigError("config.schedule.mode: " + std::string(to_string(p.schedule.mode)) +
                              " does not match oracle order " + cfg.oracle.order);
        if (zo && cfg.oracle.coupled != (p.schedule.mode == FeedbackMode::zeroth_coupled))
            throw ConfigError("config.oracle.coupled: must be true exactly when the schedule mode is zeroth_coupled");

        const auto report = check_stepsize_assumptions(p.schedule);
        for (const auto& c : report.conditions)
            if (c.applicable && !c.passed)
                err << (opt.strict ? "error: " : "warning: ") << "stepsize condition " << to_string(c.condition)
                    << " violated by config.schedule\n";
        if (!report.ok && opt.strict) throw ExitRequest{exit_code::config_error};

        const std::size_t f = cfg.adversary.workers.size();
        MarginOptions mo;
        mo.samples = cfg.dictionary.samples;
        const auto method = resolve_margin_method(cfg.dictionary, *p.dictionary);
        const auto cert = certify(*p.dictionary, f, method, mo);
        if (!cert.passed()) {
            err << (opt.strict ? "error: " : "warning: ") << "robustness " << to_string(cert.verdict) << " for f=" << f
                << " (eta=" << cert.margin_eta << ", method " << to_string(cert.method) << ")\n";
            if (opt.strict) throw ExitRequest{exit_code::certification};
        }
    }
    p.resolved = to_json(cfg, m);
    return p;
}

struct SeedResult {
    std::uint64_t seed = 0;
    Algorithm algorithm = Algorithm::farsign;
    RunResult result;
    std::string csv_path;
    std::string jsonl_path;
};

inline std::vector<SeedResult> run_seeds(const Prepared& p, Algorithm alg, const CliOptions& opt) {
    std::filesystem::create_directories(p.out_dir);
    std::vector<SeedResult> out(p.seeds.size());
    const auto budget = alg == Algorithm::baseline && p.cfg.baseline && p.cfg.baseline->budget ? *p.cfg.baseline->budget
                                                                                                : p.cfg.sim.budget;
    parallel_for(p.seeds.size(), opt.jobs, [&](std::size_t i) {
        auto setup = make_setup(p.cfg, alg, p.seeds[i], p.objective, p.dictionary);
        setup.plan.budget = budget;
        setup.plan.progress = opt.progress;
        auto& r = out[i];
        r.seed = p.seeds[i];
        r.algorithm = alg;
        r.result = run(std::move(setup));
        const std::string stem = p.out_dir + "/" + p.cfg.output.prefix + "_" + std::string(to_string(alg)) + "_seed" +
                                 std::to_string(p.seeds[i]);
        r.csv_path = stem + ".csv";
        r.jsonl_path = stem + ".jsonl";
        json manifest{{"config", p.resolved},
                      {"seed", p.seeds[i]},
                      {"algorithm", std::string(to_string(alg))},
                      {"metric_cadence", {{"dense_until", p.cfg.sim.dense_until}, {"eval_every", p.cfg.sim.eval_every}}}};
        export_trace(r.result.trace, r.csv_path, r.jsonl_path, manifest);
    });
    return out;
}

inline void write_merged(const Prepared& p, Algorithm alg, const std::vector<SeedResult>& runs) {
    std::vector<Trace> traces;
    for (const auto& r : runs) traces.push_back(r.result.trace);
    const std::string path = p.out_dir + "/" + p.cfg.output.prefix + "_" + std::string(to_string(alg)) + "_merged.csv";
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot write '" + path + "'");
    write_csv(os, merge_traces(traces));
}

inline std::optional<double> time_to_target(const Trace& t, Metric metric, double threshold, bool above) {
    for (const auto& r : t) {
        const auto v = metric_value(r, metric);
        if (!v) continue;
        if (above ? *v >= threshold : *v <= threshold) return r.sim_time;
    }
    return std::nullopt;
}

inline std::string fmt(std::optional<double> v, int precision = 6) {
    if (!v) return "--";
    std::ostringstream os;
    os << std::setprecision(precision) << *v;
    return os.str();
}

inline std::optional<double> max_test_metric(const Trace& t) {
    std::optional<double> best;
    for (const auto& r : t)
        if (r.test_metric && (!best || *r.test_metric > *best)) best = r.test_metric;
    return best;
}

template <class Body>
int guarded(std::ostream& err, Body body) {
    try {
        return body();
    } catch (const ExitRequest& e) {
        return e.code;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return exit_code::config_error;
    } catch (const Fault& e) {
        err << "runtime fault: " << e.what() << '\n';
        return exit_code::fault;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << '\n';
        return exit_code::config_error;
    } catch (const InvalidArgument& e) {
        err << "invalid argument: " << e.what() << '\n';
        return exit_code::config_error;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return exit_code::fault;
    }
}

} // namespace detail

inline int cmd_run(const CliOptions& opt, std::ostream& out, std::ostream& err) {
    return detail::guarded(err, [&] {
        const auto cfg = load_config(opt.config);
        const auto p = detail::prepare(opt, cfg, err, true);
        const auto runs = detail::run_seeds(p, Algorithm::farsign, opt);
        detail::write_merged(p, Algorithm::farsign, runs);
        out << "seed,events,oracle_calls,sim_time,max_staleness,final_f,final_grad_l1,final_ergodic,final_test\n";
        for (const auto& r : runs) {
            const auto& last = r.result.trace.back();
            out << r.seed << ',' << r.result.events << ',' << r.result.oracle_calls << ',' << detail::fmt_double(r.result.sim_time)
                << ',' << r.result.max_staleness << ',' << detail::fmt_double(last.f_val) << ',' << detail::fmt_double(last.grad_l1) << ','
                << detail::fmt_double(last.ergodic_avg) << ',' << detail::fmt(last.test_metric) << '\n';
        }
        return exit_code::ok;
    });
}

inline int cmd_compare(const CliOptions& opt, std::ostream& out, std::ostream& err) {
    return detail::guarded(err, [&] {
        const auto cfg = load_config(opt.config);
        if (!cfg.baseline) throw ConfigError("config.baseline: compare needs a baseline block");
        if (cfg.baseline->budget && *cfg.baseline->budget != cfg.sim.budget)
            throw ConfigError("config.baseline.budget: " + std::to_string(*cfg.baseline->budget) +
                              " differs from sim.budget " + std::to_string(cfg.sim.budget) +
                              "; both algorithms must use the same oracle budget");
        const auto p = detail::prepare(opt, cfg, err, true);
        const Metric metric = metric_from_string(cfg.targets.metric);
        const bool above = cfg.targets.mode == "above";

        std::vector<std::vector<detail::SeedResult>> all;
        for (Algorithm alg : {Algorithm::farsign, Algorithm::baseline}) {
            all.push_back(detail::run_seeds(p, alg, opt));
            detail::write_merged(p, alg, all.back());
        }
        out << "seed,algorithm,oracle_calls,sim_time,final_" << cfg.targets.metric << ",max_test_metric";
        for (double t : cfg.targets.thresholds) out << ",time_to_" << t;
        out << '\n';
        for (std::size_t i = 0; i < p.seeds.size(); ++i) {
            for (const auto& runs : all) {
                const auto& r = runs[i];
                const auto& tr = r.result.trace;
                out << r.seed << ','
                    << (r.algorithm == Algorithm::farsign ? std::string("farsign")
                                                          : "buffered_" + std::string(to_string(cfg.baseline->aggregator.rule)))
                    << ',' << r.result.oracle_calls << ',' << detail::fmt_double(r.result.sim_time) << ','
                    << detail::fmt(metric_value(tr.back(), metric)) << ',' << detail::fmt(detail::max_test_metric(tr));
                for (double t : cfg.targets.thresholds) out << ',' << detail::fmt(detail::time_to_target(tr, metric, t, above));
                out << '\n';
            }
        }
        return exit_code::ok;
    });
}

inline int cmd_rates(const RatesOptions& opt, std::ostream& out, std::ostream& err) {
    return detail::guarded(err, [&] {
        const auto paths = detail::expand_globs(opt.traces);
        if (paths.empty()) throw DataError("no trace files match");
        std::vector<Trace> traces;
        for (const auto& path : paths) traces.push_back(load_trace(path));
        const Trace merged = merge_traces(traces);
        if (merged.empty() || opt.n_lo > merged.back().n || opt.n_hi < merged.front().n)
            throw DataError("window [" + std::to_string(opt.n_lo) + ", " + std::to_string(opt.n_hi) +
                            "] lies outside the trace range");
        const auto fit = fit_rate(merged, metric_from_string(opt.metric), opt.n_lo, opt.n_hi);
        const bool ok = std::abs(fit.slope - opt.target) <= opt.tol;
        out << std::setprecision(6) << "traces " << paths.size() << ", rows " << fit.rows << ", window [" << fit.n_lo << ", "
            << fit.n_hi << "]\n"
            << "slope " << fit.slope << " +- " << fit.slope_stderr << " (r^2 " << fit.r_squared << "), target " << opt.target
            << " +- " << opt.tol << ": " << (ok ? "within band" : "OUTSIDE band") << '\n';
        return ok ? exit_code::ok : exit_code::out_of_band;
    });
}

inline DirectionDictionary dictionary_from_argument(const std::string& arg) {
    if (arg == "ganesh_example") return ganesh_example_dictionary();
    if (arg.rfind("identity:", 0) == 0) {
        const auto rest = arg.substr(9);
        const auto colon = rest.find(':');
        if (colon == std::string::npos) throw ConfigError("--dict identity:<d>:<N> expected, got '" + arg + "'");
        try {
            return identity_dictionary(std::stoul(rest.substr(0, colon)), std::stoul(rest.substr(colon + 1)));
        } catch (const std::logic_error&) {
            throw ConfigError("--dict identity:<d>:<N> expected, got '" + arg + "'");
        }
    }
    return load_dictionary(arg);
}

inline int cmd_check_robustness(const RobustnessOptions& opt, std::ostream& out, std::ostream& err) {
    return detail::guarded(err, [&] {
        DirectionDictionary dict = [&] {
            try {
                return dictionary_from_argument(opt.dictionary);
            } catch (const ConfigError&) {
                throw;
            } catch (const Error& e) {
                throw ConfigError(e.what());
            }
        }();
        DictionaryConfig dc;
        dc.method = opt.method;
        if (opt.method != "auto") (void)margin_method_from_string(opt.method);
        MarginOptions mo;
        mo.samples = opt.samples;
        mo.seed = opt.seed;
        mo.subset_cap = opt.subset_cap;
        const auto cert = certify(dict, opt.f, resolve_margin_method(dc, dict), mo);
        out << "workers " << dict.workers() << ", dim " << dict.dim() << ", directions " << dict.directions() << ", a_bar "
            << dict.a_bar() << '\n';
        out << "f " << cert.f_adv << "\nmethod " << to_string(cert.method) << "\nverdict " << to_string(cert.verdict)
            << "\neta " << std::setprecision(10) << cert.margin_eta << "\nworst_subset";
        for (auto w : cert.worst_subset) out << ' ' << w;
        out << "\nsamples_or_cells " << cert.samples_or_cells << "\nstacked_rank " << cert.stacked_rank << '\n';
        if (!cert.worst_direction.empty()) {
            out << "worst_direction";
            for (double v : cert.worst_direction) out << ' ' << v;
            out << '\n';
        }
        return cert.passed() ? exit_code::ok : exit_code::certification;
    });
}

namespace detail {

// Sets a dotted key ("attack.kind") in a JSON document.
inline void set_dotted(json& doc, const std::string& key, const json& value) {
    json* node = &doc;
    std::size_t start = 0;
    while (true) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty()) throw ConfigError("config.sweep.key: malformed key '" + key + "'");
        if (dot == std::string::npos) {
            (*node)[part] = value;
            return;
        }
        node = &(*node)[part];
        if (!node->is_object() && !node->is_null())
            throw ConfigError("config.sweep.key: '" + key + "' passes through a non-object");
        start = dot + 1;
    }
}

inline std::string sanitize(const json& v) {
    std::string s = v.is_string() ? v.get<std::string>() : v.dump();
    for (auto& ch : s)
        if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '-' && ch != '.') ch = '_';
    return s;
}

} // namespace detail

inline int cmd_sweep(const CliOptions& opt, std::ostream& out, std::ostream& err) {
    return detail::guarded(err, [&] {
        std::ifstream in(opt.config);
        if (!in) throw ConfigError("cannot open config '" + opt.config + "'");
        json root;
        try {
            root = json::parse(in);
        } catch (const json::parse_error& e) {
            throw ConfigError(opt.config + ": " + e.what());
        }
        const auto base = parse_config(root);
        if (!base.sweep) throw ConfigError("config.sweep: sweep needs a sweep block");
        const std::string base_dir = detail::output_dir(opt, base);
        out << "value,seed,events,oracle_calls,sim_time,final_f,final_grad_l1,final_ergodic,final_test\n";
        std::size_t index = 0;
        for (const auto& value : base.sweep->values) {
            json doc = root;
            doc.erase("sweep");
            detail::set_dotted(doc, base.sweep->key, value);
            auto cfg = parse_config(doc);
            cfg.output.prefix = base.output.prefix + "_" + std::to_string(index++) + "_" + detail::sanitize(value);
            CliOptions o = opt;
            o.out = base_dir;
            const auto p = detail::prepare(o, cfg, err, true);
            const auto runs = detail::run_seeds(p, Algorithm::farsign, o);
            detail::write_merged(p, Algorithm::farsign, runs);
            for (const auto& r : runs) {
                const auto& last = r.result.trace.back();
                out << detail::sanitize(value) << ',' << r.seed << ',' << r.result.events << ',' << r.result.oracle_calls
                    << ',' << detail::fmt_double(r.result.sim_time) << ',' << detail::fmt_double(last.f_val) << ','
                    << detail::fmt_double(last.grad_l1) << ',' << detail::fmt_double(last.ergodic_avg) << ','
                    << detail::fmt(last.test_metric) << '\n';
            }
        }
        return exit_code::ok;
    });
}

} // namespace farsign
