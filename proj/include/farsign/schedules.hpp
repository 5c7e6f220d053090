#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "errors.hpp"

namespace farsign {

enum class FeedbackMode { first_order, zeroth_decoupled, zeroth_coupled };

inline std::string_view to_string(FeedbackMode m) {
    switch (m) {
    case FeedbackMode::first_order: return "first_order";
    case FeedbackMode::zeroth_decoupled: return "zeroth_decoupled";
    case FeedbackMode::zeroth_coupled: return "zeroth_coupled";
    }
    return "?";
}

inline FeedbackMode feedback_mode_from_string(std::string_view s) {
    if (s == "first_order") return FeedbackMode::first_order;
    if (s == "zeroth_decoupled") return FeedbackMode::zeroth_decoupled;
    if (s == "zeroth_coupled") return FeedbackMode::zeroth_coupled;
    throw InvalidArgument("unknown feedback mode '" + std::string(s) + "'");
}

// Polynomial family alpha_n = alpha_scale (n+1)^-a, beta_n = beta_scale (n+1)^-b,
// lambda_n = lambda_scale (n+1)^-p.
struct ScheduleSpec {
    double alpha_scale = 1.0;
    double alpha_exp = 0.91;
    double beta_scale = 1.0;
    double beta_exp = 0.8;
    double lambda_scale = 0.0;
    double lambda_exp = 0.0;
    FeedbackMode mode = FeedbackMode::first_order;

    bool zeroth_order() const { return mode != FeedbackMode::first_order; }

    void validate() const {
        if (!(alpha_scale > 0.0)) throw InvalidArgument("schedule: alpha_scale must be > 0");
        if (!(beta_scale > 0.0)) throw InvalidArgument("schedule: beta_scale must be > 0");
        if (!(alpha_exp > 0.0 && alpha_exp <= 1.0)) throw InvalidArgument("schedule: alpha exponent a must lie in (0,1]");
        if (!(beta_exp > 0.0 && beta_exp <= 1.0)) throw InvalidArgument("schedule: beta exponent b must lie in (0,1]");
        if (!(lambda_exp >= 0.0)) throw InvalidArgument("schedule: lambda exponent p must be >= 0");
        if (!(lambda_scale >= 0.0)) throw InvalidArgument("schedule: lambda_scale must be >= 0");
        if (zeroth_order() && !(lambda_scale > 0.0))
            throw InvalidArgument("schedule: zeroth-order modes require lambda_scale > 0");
    }
};

struct StepSizes {
    double alpha;
    double beta;
    double lambda;
};

inline StepSizes schedule_at(const ScheduleSpec& spec, std::uint64_t n) {
    const double t = static_cast<double>(n) + 1.0;
    const double alpha = spec.alpha_scale * std::pow(t, -spec.alpha_exp);
    const double beta = spec.beta_scale * std::pow(t, -spec.beta_exp);
    const double lambda = spec.zeroth_order() ? spec.lambda_scale * std::pow(t, -spec.lambda_exp) : 0.0;
    return {alpha, beta, lambda};
}

// ---------------------------------------------------------------------------
// Presets. m and N default to 1, in which case the 1/(mN) prefactor is 1.

struct ProblemSize {
    std::size_t m = 1;
    std::size_t n_workers = 1;
    double prefactor() const { return 1.0 / (static_cast<double>(m) * static_cast<double>(n_workers)); }
};

inline ScheduleSpec preset_fo_thm6(ProblemSize size = {}, double eps = 0.05) {
    if (!(eps > 0.0 && eps < 0.25)) throw InvalidArgument("fo_thm6: epsilon must lie in (0, 1/4)");
    ScheduleSpec s;
    s.alpha_scale = size.prefactor();
    s.alpha_exp = 0.75 + eps;
    s.beta_scale = size.prefactor();
    s.beta_exp = 0.5;
    s.mode = FeedbackMode::first_order;
    return s;
}

inline ScheduleSpec preset_zo_decoupled(ProblemSize size = {}, double eps = 0.05, double lambda = 1.0) {
    if (!(eps > 0.0 && eps < 1.0 / 6.0)) throw InvalidArgument("zo_decoupled_thm8: epsilon must lie in (0, 1/6)");
    if (!(lambda > 0.0)) throw InvalidArgument("zo_decoupled_thm8: lambda must be > 0");
    ScheduleSpec s;
    s.alpha_scale = size.prefactor();
    s.alpha_exp = 5.0 / 6.0 + eps;
    s.beta_scale = size.prefactor();
    s.beta_exp = 2.0 / 3.0;
    s.lambda_scale = lambda;
    s.lambda_exp = 1.0 / 6.0;
    s.mode = FeedbackMode::zeroth_decoupled;
    return s;
}

inline ScheduleSpec preset_zo_coupled(ProblemSize size = {}, double eps1 = 0.1, double eps2 = 0.05,
                                      double lambda = 1.0) {
    if (!(eps2 > 0.0 && eps2 < eps1 && eps1 < 0.5))
        throw InvalidArgument("zo_coupled_thm8: need 0 < epsilon2 < epsilon1 < 1/2");
    if (!(lambda > 0.0)) throw InvalidArgument("zo_coupled_thm8: lambda must be > 0");
    ScheduleSpec s;
    s.alpha_scale = size.prefactor();
    s.alpha_exp = 0.5 + eps1;
    s.beta_scale = size.prefactor();
    s.beta_exp = eps2;
    s.lambda_scale = lambda;
    s.lambda_exp = 0.5;
    s.mode = FeedbackMode::zeroth_coupled;
    return s;
}

// (a, b, p) = (0.91, 0.8, 0.25) with unit scales.
inline ScheduleSpec preset_remark_example(FeedbackMode mode = FeedbackMode::zeroth_decoupled) {
    ScheduleSpec s;
    s.alpha_scale = 1.0;
    s.alpha_exp = 0.91;
    s.beta_scale = 1.0;
    s.beta_exp = 0.8;
    s.lambda_scale = mode == FeedbackMode::first_order ? 0.0 : 1.0;
    s.lambda_exp = 0.25;
    s.mode = mode;
    return s;
}

struct PresetParams {
    ProblemSize size;
    double eps = 0.05;
    double eps1 = 0.1;
    double eps2 = 0.05;
    double lambda = 1.0;
    // Only consulted by remark_example.
    FeedbackMode mode = FeedbackMode::first_order;
    // Overrides the alpha and beta prefactors (default 1/(mN) for the
    // theorem presets); exponents are untouched.
    std::optional<double> scale;
};

inline const std::vector<std::string>& preset_names() {
    static const std::vector<std::string> names{"fo_thm6", "zo_decoupled_thm8", "zo_coupled_thm8", "remark_example"};
    return names;
}

inline ScheduleSpec preset_by_name(std::string_view name, const PresetParams& p = {}) {
    ScheduleSpec s;
    if (name == "fo_thm6")
        s = preset_fo_thm6(p.size, p.eps);
    else if (name == "zo_decoupled_thm8")
        s = preset_zo_decoupled(p.size, p.eps, p.lambda);
    else if (name == "zo_coupled_thm8")
        s = preset_zo_coupled(p.size, p.eps1, p.eps2, p.lambda);
    else if (name == "remark_example") {
        s = preset_remark_example(p.mode);
        if (s.zeroth_order()) s.lambda_scale = p.lambda;
    } else
        throw InvalidArgument("unknown schedule preset '" + std::string(name) + "'");
    if (p.scale) {
        if (!(*p.scale > 0.0)) throw InvalidArgument("preset scale must be > 0");
        s.alpha_scale = s.beta_scale = *p.scale;
    }
    return s;
}

// ---------------------------------------------------------------------------
// Stepsize assumptions, evaluated on exponents. For p-series, sum n^-s
// diverges iff s <= 1, so the finiteness conditions need a strict inequality
// and a tie counts against them.

enum class StepCondition {
    alpha_sum_diverges,
    beta_sum_diverges,
    squares_summable,
    timescale_separation,
    alpha_sq_over_beta_summable,
    beta_sq_over_lambda_sq_summable,
    beta_lambda_summable,
};

inline std::string_view to_string(StepCondition c) {
    switch (c) {
    case StepCondition::alpha_sum_diverges: return "sum alpha_n = inf";
    case StepCondition::beta_sum_diverges: return "sum beta_n = inf";
    case StepCondition::squares_summable: return "sum (alpha_n^2 + beta_n^2) < inf";
    case StepCondition::timescale_separation: return "alpha_n / beta_n -> 0";
    case StepCondition::alpha_sq_over_beta_summable: return "sum alpha_n^2 / beta_n < inf";
    case StepCondition::beta_sq_over_lambda_sq_summable: return "sum beta_n^2 / lambda_n^2 < inf";
    case StepCondition::beta_lambda_summable: return "sum beta_n lambda_n < inf";
    }
    return "?";
}

struct ConditionResult {
    StepCondition condition;
    bool applicable;
    bool passed;
};

struct AssumptionReport {
    std::vector<ConditionResult> conditions;
    bool ok = true;
    std::vector<StepCondition> violated;

    bool passed(StepCondition c) const {
        for (const auto& r : conditions)
            if (r.condition == c) return r.passed;
        return false;
    }
};

namespace detail {
// Exponents are compared with a small slack so that e.g. 2(2/3) - 2(1/6)
// lands on the boundary regardless of rounding.
inline constexpr double exponent_tol = 1e-12;
inline bool exceeds_one(double s) { return s > 1.0 + exponent_tol; }
inline bool at_most_one(double s) { return s <= 1.0 + exponent_tol; }
} // namespace detail

inline AssumptionReport check_stepsize_assumptions(const ScheduleSpec& spec) {
    const double a = spec.alpha_exp;
    const double b = spec.beta_exp;
    const double p = spec.lambda_exp;
    const bool zo = spec.zeroth_order();

    AssumptionReport r;
    auto add = [&](StepCondition c, bool applicable, bool pass) {
        r.conditions.push_back({c, applicable, applicable ? pass : true});
        if (applicable && !pass) {
            r.ok = false;
            r.violated.push_back(c);
        }
    };
    add(StepCondition::alpha_sum_diverges, true, detail::at_most_one(a));
    add(StepCondition::beta_sum_diverges, true, detail::at_most_one(b));
    add(StepCondition::squares_summable, true, detail::exceeds_one(2 * a) && detail::exceeds_one(2 * b));
    add(StepCondition::timescale_separation, true, a > b + detail::exponent_tol);
    add(StepCondition::alpha_sq_over_beta_summable, true, detail::exceeds_one(2 * a - b));
    add(StepCondition::beta_sq_over_lambda_sq_summable, zo, detail::exceeds_one(2 * b - 2 * p));
    add(StepCondition::beta_lambda_summable, zo, detail::exceeds_one(b + p));
    return r;
}

} // namespace farsign
