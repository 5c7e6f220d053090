#pragma once

#include <cstdint>
#include <fstream>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "baselines.hpp"
#include "datasets.hpp"
#include "dictionaries.hpp"
#include "errors.hpp"
#include "mlp.hpp"
#include "problems.hpp"
#include "schedules.hpp"
#include "sim.hpp"

namespace farsign {

using json = nlohmann::json;

inline constexpr int config_version = 1;

struct DataConfig {
    std::string source = "synthetic"; // synthetic | mnist
    // synthetic
    std::size_t samples = 2000;
    std::size_t features = 20;
    std::size_t classes = 2;
    double separation = 2.0;
    std::size_t test_samples = 1000;
    std::uint64_t seed = 0;
    // mnist
    std::string train_images, train_labels, test_images, test_labels;
    std::size_t limit = 0; // keep the first `limit` training rows (0 = all)
};

struct ProblemConfig {
    std::string kind = "quadratic"; // quadratic | separable_nonconvex | logistic_l2 | mlp
    std::size_t dim = 10;
    Vec diag;   // quadratic: diagonal of Q (default 1)
    Vec q;      // quadratic: full row-major Q, overrides diag
    Vec c;      // quadratic: linear term (default 0)
    double rho = 1.0;
    double mu = 1e-3;
    std::vector<std::size_t> layers{784, 100, 10};
    std::size_t eval_samples = 0;
    std::optional<DataConfig> data;
};

struct DictionaryConfig {
    std::string kind = "identity"; // identity | file | ganesh_example
    std::string path;
    std::string method = "auto"; // auto | analytic_identity | exact_2d | monte_carlo
    std::uint64_t samples = 100000;
};

struct ScheduleConfig {
    std::optional<std::string> preset;
    PresetParams params;
    ScheduleSpec explicit_spec; // used when no preset is named
};

struct OracleConfig {
    std::string order = "first";
    double sigma = 0.0;
    double zeta_std = 0.0;
    bool coupled = false;
    std::size_t batch_size = 0;
    std::optional<double> lambda; // lambda scale for zeroth-order runs
};

struct AdversaryConfig {
    std::vector<std::size_t> workers;
};

struct SimConfig {
    std::size_t workers = 5;
    std::size_t k = 1;
    std::uint64_t budget = 10000;
    std::vector<std::uint64_t> seeds{0};
    ComputeTime compute{};
    CostModel cost{};
    std::uint64_t eval_every = 100;
    std::uint64_t dense_until = 1000;
    std::uint64_t test_every = 0;
    std::uint64_t ergodic_stride = 1;
    std::uint64_t max_events = 0;
    bool inverse_probability = false;
    std::string storage = "dense";
    Vec x0{1.0}; // one value broadcast, or a full vector
    // Optional N(0, x0_std^2) perturbation of x0, e.g. to break the symmetry
    // of an all-zero network; drawn from its own seed, shared by every run.
    double x0_std = 0.0;
    std::uint64_t x0_seed = 0;
};

struct BaselineConfig {
    AggregatorSpec aggregator{};
    std::size_t slots = 25;
    double gamma = 0.2;
    std::size_t decay_every = 0;
    double decay_factor = 0.99;
    double lambda = 1e-3;
    std::optional<std::uint64_t> budget;
};

struct OutputConfig {
    std::optional<std::string> dir; // --out, then FARSIGN_OUT_DIR, then "out"
    std::string prefix = "run";
    std::uint64_t snapshot_every = 0;
};

struct TargetConfig {
    std::string metric = "grad_l1";
    std::vector<double> thresholds;
    std::string mode = "below"; // below | above
};

struct SweepConfig {
    std::string key;
    json values = json::array();
};

struct RunConfig {
    int version = config_version;
    ProblemConfig problem;
    DictionaryConfig dictionary;
    ScheduleConfig schedule;
    OracleConfig oracle;
    AdversaryConfig adversary;
    AttackSpec attack;
    SimConfig sim;
    std::optional<BaselineConfig> baseline;
    OutputConfig output;
    TargetConfig targets;
    std::optional<SweepConfig> sweep;
};

namespace detail {

class Reader {
public:
    Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
    }

    void allow(std::initializer_list<const char*> keys) {
        std::set<std::string> ok(keys.begin(), keys.end());
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!ok.count(it.key())) throw ConfigError(path_ + "." + it.key() + ": unknown key");
    }

    bool has(const char* key) const { return j_.contains(key); }
    const json& raw(const char* key) const { return j_.at(key); }
    std::string where(const char* key) const { return path_ + "." + key; }

    template <class T>
    void get(const char* key, T& out) const {
        if (!j_.contains(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception&) {
            throw ConfigError(where(key) + ": wrong type");
        }
    }

    template <class T>
    void get(const char* key, std::optional<T>& out) const {
        if (!j_.contains(key)) return;
        T v{};
        get(key, v);
        out = v;
    }

    void get_unsigned(const char* key, std::uint64_t& out) const {
        if (!j_.contains(key)) return;
        const auto& v = j_.at(key);
        if (v.is_number_unsigned()) {
            out = v.get<std::uint64_t>();
        } else if (v.is_number_integer() && v.get<std::int64_t>() >= 0) {
            out = static_cast<std::uint64_t>(v.get<std::int64_t>());
        } else if (v.is_number_float() && v.get<double>() >= 0.0 && v.get<double>() == std::floor(v.get<double>()) &&
                   v.get<double>() < 1.8e19) {
            out = static_cast<std::uint64_t>(v.get<double>());
        } else {
            throw ConfigError(where(key) + ": expected a nonnegative integer");
        }
    }

    void get_size(const char* key, std::size_t& out) const {
        std::uint64_t v = out;
        get_unsigned(key, v);
        out = static_cast<std::size_t>(v);
    }

    Reader sub(const char* key) const { return Reader(j_.at(key), where(key)); }

private:
    const json& j_;
    std::string path_;
};

inline void require_in(const std::string& where, const std::string& value, std::initializer_list<const char*> options) {
    for (const char* o : options)
        if (value == o) return;
    std::string msg = where + ": '" + value + "' is not one of";
    for (const char* o : options) msg += std::string(" ") + o;
    throw ConfigError(msg);
}

inline ComputeTime parse_compute(const Reader& r) {
    Reader c = r;
    c.allow({"kind", "t", "lo", "hi", "mu", "sigma", "t_min", "t_max"});
    ComputeTime ct;
    std::string kind = "fixed";
    c.get("kind", kind);
    require_in(c.where("kind"), kind, {"fixed", "uniform", "lognormal"});
    ct.kind = compute_kind_from_string(kind);
    c.get("t", ct.t);
    c.get("lo", ct.lo);
    c.get("hi", ct.hi);
    c.get("mu", ct.mu);
    c.get("sigma", ct.sigma);
    c.get("t_min", ct.t_min);
    c.get("t_max", ct.t_max);
    if (ct.kind == ComputeKind::lognormal && !c.has("t_max"))
        throw ConfigError(c.where("t_max") + ": lognormal compute time must be truncated");
    try {
        ct.validate();
    } catch (const InvalidArgument& e) {
        throw ConfigError(std::string("sim.compute_time: ") + e.what());
    }
    return ct;
}

inline json compute_to_json(const ComputeTime& c) {
    json j{{"kind", std::string(to_string(c.kind))}};
    switch (c.kind) {
    case ComputeKind::fixed: j["t"] = c.t; break;
    case ComputeKind::uniform:
        j["lo"] = c.lo;
        j["hi"] = c.hi;
        break;
    case ComputeKind::lognormal:
        j["mu"] = c.mu;
        j["sigma"] = c.sigma;
        j["t_min"] = c.t_min;
        j["t_max"] = c.t_max;
        break;
    }
    return j;
}

inline json schedule_spec_to_json(const ScheduleSpec& s) {
    return {{"mode", std::string(to_string(s.mode))}, {"alpha_scale", s.alpha_scale}, {"alpha_exp", s.alpha_exp},
            {"beta_scale", s.beta_scale},             {"beta_exp", s.beta_exp},       {"lambda_scale", s.lambda_scale},
            {"lambda_exp", s.lambda_exp}};
}

} // namespace detail

inline RunConfig parse_config(const json& root) {
    using detail::Reader;
    using detail::require_in;
    RunConfig cfg;
    Reader top(root, "config");
    top.allow({"version", "problem", "dictionary", "schedule", "oracle", "adversary", "attack", "sim", "baseline", "output",
               "targets", "sweep", "comment"});
    if (!top.has("version")) throw ConfigError("config.version: missing");
    top.get("version", cfg.version);
    if (cfg.version != config_version)
        throw ConfigError("config.version: unsupported version " + std::to_string(cfg.version) + " (expected " +
                          std::to_string(config_version) + ")");

    if (top.has("problem")) {
        Reader p = top.sub("problem");
        p.allow({"kind", "dim", "diag", "q", "c", "rho", "mu", "layers", "eval_samples", "data"});
        auto& pc = cfg.problem;
        p.get("kind", pc.kind);
        require_in(p.where("kind"), pc.kind, {"quadratic", "separable_nonconvex", "logistic_l2", "mlp"});
        p.get_size("dim", pc.dim);
        p.get("diag", pc.diag);
        p.get("q", pc.q);
        p.get("c", pc.c);
        p.get("rho", pc.rho);
        p.get("mu", pc.mu);
        p.get("layers", pc.layers);
        p.get_size("eval_samples", pc.eval_samples);
        if (p.has("data")) {
            Reader d = p.sub("data");
            d.allow({"source", "samples", "features", "classes", "separation", "test_samples", "seed", "train_images",
                     "train_labels", "test_images", "test_labels", "limit"});
            DataConfig dc;
            d.get("source", dc.source);
            require_in(d.where("source"), dc.source, {"synthetic", "mnist"});
            d.get_size("samples", dc.samples);
            d.get_size("features", dc.features);
            d.get_size("classes", dc.classes);
            d.get("separation", dc.separation);
            d.get_size("test_samples", dc.test_samples);
            d.get_unsigned("seed", dc.seed);
            d.get("train_images", dc.train_images);
            d.get("train_labels", dc.train_labels);
            d.get("test_images", dc.test_images);
            d.get("test_labels", dc.test_labels);
            d.get_size("limit", dc.limit);
            if (dc.source == "mnist" && (dc.train_images.empty() || dc.train_labels.empty()))
                throw ConfigError(d.where("train_images") + ": mnist source needs train_images and train_labels");
            pc.data = dc;
        }
        if ((pc.kind == "logistic_l2" || pc.kind == "mlp") && !pc.data)
            throw ConfigError(p.where("data") + ": required for kind " + pc.kind);
    }

    if (top.has("dictionary")) {
        Reader d = top.sub("dictionary");
        d.allow({"kind", "path", "method", "samples"});
        auto& dc = cfg.dictionary;
        d.get("kind", dc.kind);
        require_in(d.where("kind"), dc.kind, {"identity", "file", "ganesh_example"});
        d.get("path", dc.path);
        d.get("method", dc.method);
        require_in(d.where("method"), dc.method, {"auto", "analytic_identity", "exact_2d", "monte_carlo"});
        d.get_unsigned("samples", dc.samples);
        if (dc.kind == "file" && dc.path.empty()) throw ConfigError(d.where("path") + ": required for kind file");
    }

    if (top.has("schedule")) {
        Reader s = top.sub("schedule");
        s.allow({"preset", "eps", "eps1", "eps2", "scale", "mode", "alpha_scale", "alpha_exp", "beta_scale", "beta_exp",
                 "lambda_scale", "lambda_exp"});
        auto& sc = cfg.schedule;
        std::string mode = "first_order";
        s.get("mode", mode);
        require_in(s.where("mode"), mode, {"first_order", "zeroth_decoupled", "zeroth_coupled"});
        if (s.has("preset")) {
            std::string name;
            s.get("preset", name);
            bool known = false;
            for (const auto& n : preset_names()) known = known || n == name;
            if (!known) throw ConfigError(s.where("preset") + ": unknown preset '" + name + "'");
            for (const char* k : {"alpha_scale", "alpha_exp", "beta_scale", "beta_exp", "lambda_scale", "lambda_exp"})
                if (s.has(k)) throw ConfigError(s.where(k) + ": not allowed together with a preset (use scale)");
            sc.preset = name;
            s.get("eps", sc.params.eps);
            s.get("eps1", sc.params.eps1);
            s.get("eps2", sc.params.eps2);
            s.get("scale", sc.params.scale);
            sc.params.mode = feedback_mode_from_string(mode);
        } else {
            for (const char* k : {"eps", "eps1", "eps2", "scale"})
                if (s.has(k)) throw ConfigError(s.where(k) + ": only valid with a preset");
            auto& e = sc.explicit_spec;
            e.mode = feedback_mode_from_string(mode);
            for (const char* k : {"alpha_scale", "alpha_exp", "beta_scale", "beta_exp"})
                if (!s.has(k)) throw ConfigError(s.where(k) + ": missing (no preset given)");
            s.get("alpha_scale", e.alpha_scale);
            s.get("alpha_exp", e.alpha_exp);
            s.get("beta_scale", e.beta_scale);
            s.get("beta_exp", e.beta_exp);
            s.get("lambda_scale", e.lambda_scale);
            s.get("lambda_exp", e.lambda_exp);
        }
    }

    if (top.has("oracle")) {
        Reader o = top.sub("oracle");
        o.allow({"order", "sigma", "zeta_std", "coupled", "batch_size", "lambda"});
        auto& oc = cfg.oracle;
        o.get("order", oc.order);
        require_in(o.where("order"), oc.order, {"first", "zeroth"});
        o.get("sigma", oc.sigma);
        o.get("zeta_std", oc.zeta_std);
        o.get("coupled", oc.coupled);
        o.get_size("batch_size", oc.batch_size);
        o.get("lambda", oc.lambda);
    }

    if (top.has("adversary")) {
        Reader a = top.sub("adversary");
        a.allow({"count", "workers"});
        if (a.has("count") && a.has("workers")) throw ConfigError("config.adversary: give either count or workers");
        if (a.has("count")) {
            std::size_t count = 0;
            a.get_size("count", count);
            cfg.adversary.workers.clear();
            for (std::size_t i = 0; i < count; ++i) cfg.adversary.workers.push_back(i);
        }
        a.get("workers", cfg.adversary.workers);
    }

    if (top.has("attack")) {
        Reader a = top.sub("attack");
        a.allow({"kind", "kappa", "c", "sigma_a", "z"});
        std::string kind = "none";
        a.get("kind", kind);
        require_in(a.where("kind"), kind, {"none", "sign_flip", "constant", "gaussian", "alie"});
        cfg.attack.kind = attack_kind_from_string(kind);
        a.get("kappa", cfg.attack.kappa);
        a.get("c", cfg.attack.c);
        a.get("sigma_a", cfg.attack.sigma_a);
        a.get("z", cfg.attack.z);
    }

    if (top.has("sim")) {
        Reader s = top.sub("sim");
        s.allow({"workers", "K", "budget", "seeds", "compute_time", "cost", "eval_every", "dense_until", "test_every",
                 "ergodic_stride", "max_events", "inverse_probability", "storage", "x0", "x0_std", "x0_seed"});
        auto& sc = cfg.sim;
        s.get_size("workers", sc.workers);
        s.get_size("K", sc.k);
        s.get_unsigned("budget", sc.budget);
        if (s.has("seeds")) {
            const auto& v = s.raw("seeds");
            if (!v.is_array() || v.empty()) throw ConfigError(s.where("seeds") + ": expected a nonempty array");
            sc.seeds.clear();
            for (const auto& e : v) {
                if (!e.is_number_unsigned()) throw ConfigError(s.where("seeds") + ": seeds must be nonnegative integers");
                sc.seeds.push_back(e.get<std::uint64_t>());
            }
        }
        if (s.has("compute_time")) sc.compute = detail::parse_compute(s.sub("compute_time"));
        if (s.has("cost")) {
            Reader c = s.sub("cost");
            c.allow({"oracle", "update", "aggregation"});
            c.get("oracle", sc.cost.oracle);
            c.get("update", sc.cost.update);
            c.get("aggregation", sc.cost.aggregation);
            if (!(sc.cost.oracle >= 0.0) || (sc.cost.update && !(*sc.cost.update >= 0.0)) ||
                (sc.cost.aggregation && !(*sc.cost.aggregation >= 0.0)))
                throw ConfigError(s.where("cost") + ": costs must be >= 0");
        }
        s.get_unsigned("eval_every", sc.eval_every);
        s.get_unsigned("dense_until", sc.dense_until);
        s.get_unsigned("test_every", sc.test_every);
        s.get_unsigned("ergodic_stride", sc.ergodic_stride);
        s.get_unsigned("max_events", sc.max_events);
        s.get("inverse_probability", sc.inverse_probability);
        s.get("storage", sc.storage);
        require_in(s.where("storage"), sc.storage, {"dense", "sparse"});
        if (s.has("x0")) {
            const auto& v = s.raw("x0");
            if (v.is_number())
                sc.x0 = {v.get<double>()};
            else
                s.get("x0", sc.x0);
        }
        s.get("x0_std", sc.x0_std);
        s.get_unsigned("x0_seed", sc.x0_seed);
        if (!(sc.x0_std >= 0.0) || !std::isfinite(sc.x0_std)) throw ConfigError(s.where("x0_std") + ": must be >= 0");
        if (sc.budget == 0) throw ConfigError(s.where("budget") + ": must be > 0");
        if (sc.workers == 0) throw ConfigError(s.where("workers") + ": must be >= 1");
        if (sc.k == 0) throw ConfigError(s.where("K") + ": must be >= 1");
        if (sc.ergodic_stride == 0) throw ConfigError(s.where("ergodic_stride") + ": must be >= 1");
    }

    if (top.has("baseline")) {
        Reader b = top.sub("baseline");
        b.allow({"rule", "f", "slots", "gamma", "decay_every", "decay_factor", "multi_k", "rfa_iters", "rfa_nu", "lambda",
                 "budget"});
        BaselineConfig bc;
        std::string rule = "median";
        b.get("rule", rule);
        require_in(b.where("rule"), rule, {"mean", "krum", "multi_krum", "median", "trimmed_mean", "bulyan", "rfa"});
        bc.aggregator.rule = aggregation_rule_from_string(rule);
        b.get_size("f", bc.aggregator.f);
        b.get_size("slots", bc.slots);
        b.get("gamma", bc.gamma);
        b.get_size("decay_every", bc.decay_every);
        b.get("decay_factor", bc.decay_factor);
        b.get_size("multi_k", bc.aggregator.multi_k);
        b.get_size("rfa_iters", bc.aggregator.rfa_iters);
        b.get("rfa_nu", bc.aggregator.rfa_nu);
        b.get("lambda", bc.lambda);
        if (b.has("budget")) {
            std::uint64_t v = 0;
            b.get_unsigned("budget", v);
            bc.budget = v;
        }
        if (!(bc.gamma > 0.0)) throw ConfigError(b.where("gamma") + ": must be > 0");
        if (!(bc.lambda > 0.0)) throw ConfigError(b.where("lambda") + ": must be > 0");
        cfg.baseline = bc;
    }

    if (top.has("output")) {
        Reader o = top.sub("output");
        o.allow({"dir", "prefix", "snapshot_every"});
        o.get("dir", cfg.output.dir);
        o.get("prefix", cfg.output.prefix);
        o.get_unsigned("snapshot_every", cfg.output.snapshot_every);
    }

    if (top.has("targets")) {
        Reader t = top.sub("targets");
        t.allow({"metric", "thresholds", "mode"});
        t.get("metric", cfg.targets.metric);
        require_in(t.where("metric"), cfg.targets.metric, {"f_val", "grad_l1", "track_err", "ergodic_avg", "test_metric"});
        t.get("thresholds", cfg.targets.thresholds);
        t.get("mode", cfg.targets.mode);
        require_in(t.where("mode"), cfg.targets.mode, {"below", "above"});
    }

    if (top.has("sweep")) {
        Reader s = top.sub("sweep");
        s.allow({"key", "values"});
        SweepConfig sw;
        s.get("key", sw.key);
        if (sw.key.empty()) throw ConfigError(s.where("key") + ": missing");
        if (!s.has("values") || !s.raw("values").is_array() || s.raw("values").empty())
            throw ConfigError(s.where("values") + ": expected a nonempty array");
        sw.values = s.raw("values");
        cfg.sweep = sw;
    }

    // Cross-block checks.
    for (std::size_t a : cfg.adversary.workers)
        if (a >= cfg.sim.workers)
            throw ConfigError("config.adversary.workers: worker " + std::to_string(a) + " is outside 0.." +
                              std::to_string(cfg.sim.workers - 1));
    if (cfg.adversary.workers.size() >= cfg.sim.workers && cfg.sim.workers > 0)
        throw ConfigError("config.adversary: adversary count must be < sim.workers");
    if (cfg.oracle.order == "zeroth" && !cfg.oracle.lambda)
        throw ConfigError("config.oracle.lambda: zeroth-order runs must specify lambda");
    if (cfg.oracle.coupled && cfg.oracle.order != "zeroth")
        throw ConfigError("config.oracle.coupled: requires order zeroth");
    return cfg;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    json root;
    try {
        root = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return parse_config(root);
}

// ---------------------------------------------------------------------------
// Resolution

inline ScheduleSpec resolve_schedule(const RunConfig& cfg, std::size_t m) {
    ScheduleSpec s;
    if (cfg.schedule.preset) {
        PresetParams p = cfg.schedule.params;
        p.size = {m, cfg.sim.workers};
        p.lambda = cfg.oracle.lambda.value_or(1.0);
        s = preset_by_name(*cfg.schedule.preset, p);
    } else {
        s = cfg.schedule.explicit_spec;
        if (s.zeroth_order() && !cfg.schedule.explicit_spec.lambda_scale) s.lambda_scale = cfg.oracle.lambda.value_or(0.0);
    }
    return s;
}

inline OracleSpec resolve_oracle(const RunConfig& cfg) {
    OracleSpec o;
    o.order = cfg.oracle.order == "zeroth" ? OracleOrder::zeroth : OracleOrder::first;
    o.sigma = cfg.oracle.sigma;
    o.zeta_std = cfg.oracle.zeta_std;
    o.coupled = cfg.oracle.coupled;
    o.batch_size = cfg.oracle.batch_size;
    return o;
}

inline std::pair<std::shared_ptr<const Dataset>, std::shared_ptr<const Dataset>> load_data(const DataConfig& dc) {
    if (dc.source == "synthetic") {
        SyntheticSpec sp;
        sp.samples = dc.samples;
        sp.features = dc.features;
        sp.classes = dc.classes;
        sp.separation = dc.separation;
        sp.seed = dc.seed;
        auto [train, test] = make_synthetic_classification(sp, dc.test_samples);
        return {std::make_shared<const Dataset>(std::move(train)), std::make_shared<const Dataset>(std::move(test))};
    }
    Dataset train = load_mnist_idx(dc.train_images, dc.train_labels, Split::train);
    if (dc.limit > 0 && dc.limit < train.n_samples) train = train.head(dc.limit);
    std::shared_ptr<const Dataset> test;
    if (!dc.test_images.empty()) test = std::make_shared<const Dataset>(load_mnist_idx(dc.test_images, dc.test_labels, Split::test));
    return {std::make_shared<const Dataset>(std::move(train)), test};
}

inline std::shared_ptr<const Objective> build_objective(const ProblemConfig& pc) {
    if (pc.kind == "quadratic") {
        if (!pc.q.empty()) {
            Vec c = pc.c.empty() ? Vec(pc.dim, 0.0) : pc.c;
            return std::make_shared<Quadratic>(pc.dim, pc.q, std::move(c));
        }
        Vec diag = pc.diag.empty() ? Vec(pc.dim, 1.0) : pc.diag;
        if (diag.size() != pc.dim) throw ConfigError("config.problem.diag: length must equal dim");
        return std::make_shared<Quadratic>(Quadratic::diagonal(diag, pc.c));
    }
    if (pc.kind == "separable_nonconvex") return std::make_shared<SeparableNonconvex>(pc.dim, pc.rho);
    auto [train, test] = load_data(*pc.data);
    if (pc.kind == "logistic_l2") return std::make_shared<LogisticL2>(train, pc.mu, test);
    return std::make_shared<MlpObjective>(pc.layers, train, pc.mu, test, pc.eval_samples);
}

inline std::shared_ptr<const DirectionDictionary> build_dictionary(const RunConfig& cfg, std::size_t dim) {
    const auto& dc = cfg.dictionary;
    std::shared_ptr<const DirectionDictionary> d;
    if (dc.kind == "identity")
        d = std::make_shared<const DirectionDictionary>(identity_dictionary(dim, cfg.sim.workers));
    else if (dc.kind == "ganesh_example")
        d = std::make_shared<const DirectionDictionary>(ganesh_example_dictionary());
    else
        d = std::make_shared<const DirectionDictionary>(load_dictionary(dc.path));
    if (d->workers() != cfg.sim.workers)
        throw ConfigError("config.dictionary: has " + std::to_string(d->workers()) + " workers but sim.workers is " +
                          std::to_string(cfg.sim.workers));
    if (d->dim() != dim)
        throw ConfigError("config.dictionary: dimension " + std::to_string(d->dim()) + " does not match the problem (" +
                          std::to_string(dim) + ")");
    return d;
}

inline MarginMethod resolve_margin_method(const DictionaryConfig& dc, const DirectionDictionary& d) {
    if (dc.method != "auto") return margin_method_from_string(dc.method);
    if (d.all_identity()) return MarginMethod::analytic_identity;
    if (d.dim() == 2) return MarginMethod::exact_2d;
    return MarginMethod::monte_carlo;
}

inline Vec resolve_x0(const SimConfig& sc, std::size_t dim) {
    Vec x;
    if (sc.x0.size() == 1)
        x.assign(dim, sc.x0[0]);
    else if (sc.x0.size() == dim)
        x = sc.x0;
    else
        throw ConfigError("config.sim.x0: length " + std::to_string(sc.x0.size()) + " does not match dimension " +
                          std::to_string(dim));
    if (sc.x0_std > 0.0) {
        Rng rng(sc.x0_seed);
        for (auto& v : x) v += rng.normal(0.0, sc.x0_std);
    }
    return x;
}

// One run's setup. `objective` and `dictionary` are shared across seeds.
inline RunSetup make_setup(const RunConfig& cfg, Algorithm alg, std::uint64_t seed, std::shared_ptr<const Objective> obj,
                           std::shared_ptr<const DirectionDictionary> dict) {
    RunSetup s;
    s.plan.algorithm = alg;
    s.plan.budget = cfg.sim.budget;
    s.plan.directions_per_event = cfg.sim.k;
    s.plan.seed = seed;
    s.plan.cost = cfg.sim.cost;
    s.plan.eval_every = cfg.sim.eval_every;
    s.plan.dense_until = cfg.sim.dense_until;
    s.plan.test_every = cfg.sim.test_every;
    s.plan.ergodic_stride = cfg.sim.ergodic_stride;
    s.plan.max_events = cfg.sim.max_events;
    s.plan.inverse_probability = cfg.sim.inverse_probability;
    s.plan.storage = cfg.sim.storage == "sparse" ? AverageStorage::sparse : AverageStorage::dense;
    s.plan.snapshot_every = cfg.output.snapshot_every;
    s.objective = obj;
    s.oracle = resolve_oracle(cfg);
    s.attack = cfg.attack;
    s.workers = make_workers(cfg.sim.workers, cfg.sim.compute, cfg.adversary.workers);
    s.x0 = resolve_x0(cfg.sim, obj->dim());
    if (alg == Algorithm::farsign) {
        s.dictionary = std::move(dict);
        s.schedule = resolve_schedule(cfg, s.dictionary->directions());
    } else {
        if (!cfg.baseline) throw ConfigError("config.baseline: missing");
        const auto& b = *cfg.baseline;
        s.buffer.slots = b.slots;
        s.buffer.adversaries = b.aggregator.f;
        s.buffer.aggregator = b.aggregator;
        s.buffer.gamma = b.gamma;
        s.buffer.decay_every = b.decay_every;
        s.buffer.decay_factor = b.decay_factor;
        s.baseline_lambda = b.lambda;
    }
    return s;
}

// Fully resolved config: presets expanded, defaults written out. Parsing it
// back gives the same runs.
inline json to_json(const RunConfig& cfg, std::size_t m_directions) {
    json j;
    j["version"] = cfg.version;
    const auto& p = cfg.problem;
    json pj{{"kind", p.kind}, {"dim", p.dim}};
    if (p.kind == "quadratic") {
        if (!p.q.empty())
            pj["q"] = p.q;
        else
            pj["diag"] = p.diag.empty() ? Vec(p.dim, 1.0) : p.diag;
        if (!p.c.empty()) pj["c"] = p.c;
    }
    if (p.kind == "separable_nonconvex") pj["rho"] = p.rho;
    if (p.kind == "logistic_l2" || p.kind == "mlp") pj["mu"] = p.mu;
    if (p.kind == "mlp") {
        pj["layers"] = p.layers;
        pj["eval_samples"] = p.eval_samples;
    }
    if (p.data) {
        const auto& d = *p.data;
        json dj{{"source", d.source}};
        if (d.source == "synthetic") {
            dj.update({{"samples", d.samples}, {"features", d.features}, {"classes", d.classes}, {"separation", d.separation},
                       {"test_samples", d.test_samples}, {"seed", d.seed}});
        } else {
            dj.update({{"train_images", d.train_images}, {"train_labels", d.train_labels}, {"limit", d.limit}});
            if (!d.test_images.empty()) dj.update({{"test_images", d.test_images}, {"test_labels", d.test_labels}});
        }
        pj["data"] = dj;
    }
    j["problem"] = pj;

    json dj{{"kind", cfg.dictionary.kind}, {"method", cfg.dictionary.method}, {"samples", cfg.dictionary.samples}};
    if (cfg.dictionary.kind == "file") dj["path"] = cfg.dictionary.path;
    j["dictionary"] = dj;
    j["schedule"] = detail::schedule_spec_to_json(resolve_schedule(cfg, m_directions));

    json oj{{"order", cfg.oracle.order},       {"sigma", cfg.oracle.sigma},
            {"zeta_std", cfg.oracle.zeta_std}, {"coupled", cfg.oracle.coupled},
            {"batch_size", cfg.oracle.batch_size}};
    if (cfg.oracle.lambda) oj["lambda"] = *cfg.oracle.lambda;
    j["oracle"] = oj;
    j["adversary"] = {{"workers", cfg.adversary.workers}};
    j["attack"] = {{"kind", std::string(to_string(cfg.attack.kind))},
                   {"kappa", cfg.attack.kappa},
                   {"c", cfg.attack.c},
                   {"sigma_a", cfg.attack.sigma_a},
                   {"z", cfg.attack.z}};

    const auto& s = cfg.sim;
    json cost{{"oracle", s.cost.oracle}};
    if (s.cost.update) cost["update"] = *s.cost.update;
    if (s.cost.aggregation) cost["aggregation"] = *s.cost.aggregation;
    j["sim"] = {{"workers", s.workers},
                {"K", s.k},
                {"budget", s.budget},
                {"seeds", s.seeds},
                {"compute_time", detail::compute_to_json(s.compute)},
                {"cost", cost},
                {"eval_every", s.eval_every},
                {"dense_until", s.dense_until},
                {"test_every", s.test_every},
                {"ergodic_stride", s.ergodic_stride},
                {"max_events", s.max_events},
                {"inverse_probability", s.inverse_probability},
                {"storage", s.storage},
                {"x0", s.x0},
                {"x0_std", s.x0_std},
                {"x0_seed", s.x0_seed}};
    if (cfg.baseline) {
        const auto& b = *cfg.baseline;
        json bj{{"rule", std::string(to_string(b.aggregator.rule))},
                {"f", b.aggregator.f},
                {"slots", b.slots},
                {"gamma", b.gamma},
                {"decay_every", b.decay_every},
                {"decay_factor", b.decay_factor},
                {"multi_k", b.aggregator.multi_k},
                {"rfa_iters", b.aggregator.rfa_iters},
                {"rfa_nu", b.aggregator.rfa_nu},
                {"lambda", b.lambda}};
        if (b.budget) bj["budget"] = *b.budget;
        j["baseline"] = bj;
    }
    j["output"] = {{"prefix", cfg.output.prefix}, {"snapshot_every", cfg.output.snapshot_every}};
    if (cfg.output.dir) j["output"]["dir"] = *cfg.output.dir;
    j["targets"] = {{"metric", cfg.targets.metric}, {"thresholds", cfg.targets.thresholds}, {"mode", cfg.targets.mode}};
    if (cfg.sweep) j["sweep"] = {{"key", cfg.sweep->key}, {"values", cfg.sweep->values}};
    return j;
}

} // namespace farsign
