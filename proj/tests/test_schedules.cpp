#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include "farsign/schedules.hpp"

using namespace farsign;

TEST(ScheduleAt, FirstOrderPresetAtZeroIsPrefactor) {
    const auto s = preset_fo_thm6({1, 4}, 0.05);
    const auto st = schedule_at(s, 0);
    EXPECT_DOUBLE_EQ(st.alpha, 0.25);
    EXPECT_DOUBLE_EQ(st.beta, 0.25);
    EXPECT_EQ(st.lambda, 0.0);
}

TEST(ScheduleAt, ThreeQuarterPowerOfSixteen) {
    ScheduleSpec s;
    s.alpha_exp = 0.75;
    s.beta_exp = 0.5;
    EXPECT_NEAR(schedule_at(s, 15).alpha, 0.125, 1e-15);
    EXPECT_NEAR(schedule_at(s, 15).beta, 0.25, 1e-15);
}

TEST(ScheduleAt, DecoupledPresetUnitScales) {
    const auto s = preset_zo_decoupled({1, 1}, 0.05, 1.0);
    const auto st = schedule_at(s, 0);
    EXPECT_DOUBLE_EQ(st.alpha, 1.0);
    EXPECT_DOUBLE_EQ(st.beta, 1.0);
    EXPECT_DOUBLE_EQ(st.lambda, 1.0);
    EXPECT_NEAR(s.alpha_exp, 5.0 / 6.0 + 0.05, 1e-15);
    EXPECT_NEAR(s.beta_exp, 2.0 / 3.0, 1e-15);
    EXPECT_NEAR(s.lambda_exp, 1.0 / 6.0, 1e-15);
}

TEST(ScheduleAt, MonotoneAndPure) {
    for (const auto& name : preset_names()) {
        PresetParams p;
        p.size = {3, 7};
        p.mode = FeedbackMode::zeroth_decoupled;
        const auto s = preset_by_name(name, p);
        StepSizes prev = schedule_at(s, 0);
        for (std::uint64_t n = 1; n < 5000; n += 37) {
            const auto cur = schedule_at(s, n);
            EXPECT_LE(cur.alpha, prev.alpha);
            EXPECT_LE(cur.beta, prev.beta);
            EXPECT_LE(cur.lambda, prev.lambda);
            const auto again = schedule_at(s, n);
            EXPECT_EQ(std::memcmp(&cur, &again, sizeof cur), 0);
            prev = cur;
        }
    }
}

TEST(ScheduleSpec, ValidateRejectsBadScalesAndExponents) {
    ScheduleSpec s;
    s.alpha_scale = 0.0;
    EXPECT_THROW(s.validate(), InvalidArgument);
    s = {};
    s.beta_exp = 1.5;
    EXPECT_THROW(s.validate(), InvalidArgument);
    s = {};
    s.mode = FeedbackMode::zeroth_decoupled;
    s.lambda_scale = 0.0;
    EXPECT_THROW(s.validate(), InvalidArgument);
    s.lambda_scale = 1.0;
    EXPECT_NO_THROW(s.validate());
}

TEST(Presets, ScaleOverrideKeepsExponents) {
    PresetParams p;
    p.size = {10, 5};
    p.scale = 1.0;
    const auto s = preset_by_name("fo_thm6", p);
    EXPECT_EQ(s.alpha_scale, 1.0);
    EXPECT_EQ(s.beta_scale, 1.0);
    EXPECT_NEAR(s.alpha_exp, 0.8, 1e-15);
    const auto paper = preset_by_name("fo_thm6", PresetParams{{10, 5}});
    EXPECT_DOUBLE_EQ(paper.alpha_scale, 1.0 / 50.0);
    EXPECT_THROW(preset_by_name("no_such_preset"), InvalidArgument);
}

TEST(Assumptions, RemarkExamplePassesAll) {
    const auto r = check_stepsize_assumptions(preset_remark_example(FeedbackMode::zeroth_decoupled));
    EXPECT_TRUE(r.ok);
    EXPECT_TRUE(r.violated.empty());
    EXPECT_EQ(r.conditions.size(), 7u);
}

TEST(Assumptions, SlowAlphaFailsSeparation) {
    ScheduleSpec s;
    s.alpha_exp = 0.6;
    s.beta_exp = 0.7;
    const auto r = check_stepsize_assumptions(s);
    EXPECT_FALSE(r.ok);
    EXPECT_FALSE(r.passed(StepCondition::timescale_separation));
}

TEST(Assumptions, CoupledPresetFailsBetaSquares) {
    const auto r = check_stepsize_assumptions(preset_zo_coupled({1, 1}, 0.2, 0.1));
    EXPECT_FALSE(r.ok);
    EXPECT_FALSE(r.passed(StepCondition::squares_summable));
}

TEST(Assumptions, LambdaConditionsOnlyInZerothOrder) {
    ScheduleSpec s = preset_remark_example(FeedbackMode::first_order);
    s.lambda_exp = 5.0; // would break sum beta^2/lambda^2 if it applied
    const auto r = check_stepsize_assumptions(s);
    EXPECT_TRUE(r.ok);
    for (const auto& c : r.conditions)
        if (c.condition == StepCondition::beta_sq_over_lambda_sq_summable || c.condition == StepCondition::beta_lambda_summable)
            EXPECT_FALSE(c.applicable);
}

TEST(Assumptions, BoundaryCountsAsViolationForFiniteness) {
    ScheduleSpec s;
    s.alpha_exp = 1.0; // sum alpha diverges at the boundary: pass
    s.beta_exp = 0.5;  // 2b = 1: sum beta^2 diverges: fail
    const auto r = check_stepsize_assumptions(s);
    EXPECT_TRUE(r.passed(StepCondition::alpha_sum_diverges));
    EXPECT_FALSE(r.passed(StepCondition::squares_summable));
}

// The theorem presets are tested against the exponent algebra rather than a
// fixed verdict table: 2b = 1 for the first-order preset; 2b - 2p = 1 and
// b + p = 5/6 for the decoupled preset; 2b < 1 for the coupled preset.
TEST(Assumptions, PresetVerdictsFollowExponents) {
    const auto fo = check_stepsize_assumptions(preset_fo_thm6());
    EXPECT_FALSE(fo.passed(StepCondition::squares_summable));
    EXPECT_TRUE(fo.passed(StepCondition::timescale_separation));
    EXPECT_TRUE(fo.passed(StepCondition::alpha_sq_over_beta_summable));

    const auto dec = check_stepsize_assumptions(preset_zo_decoupled());
    EXPECT_TRUE(dec.passed(StepCondition::squares_summable));
    EXPECT_FALSE(dec.passed(StepCondition::beta_sq_over_lambda_sq_summable));
    EXPECT_FALSE(dec.passed(StepCondition::beta_lambda_summable));

    const auto cp = check_stepsize_assumptions(preset_zo_coupled());
    EXPECT_FALSE(cp.passed(StepCondition::squares_summable));

    EXPECT_TRUE(check_stepsize_assumptions(preset_remark_example()).ok);
}

TEST(FeedbackModeNames, RoundTrip) {
    for (auto m : {FeedbackMode::first_order, FeedbackMode::zeroth_decoupled, FeedbackMode::zeroth_coupled})
        EXPECT_EQ(feedback_mode_from_string(to_string(m)), m);
    EXPECT_THROW(feedback_mode_from_string("second_order"), InvalidArgument);
}
