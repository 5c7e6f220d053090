#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "farsign/metrics.hpp"

using namespace farsign;

namespace {

Trace power_law(double c, double p, std::uint64_t n_max, std::uint64_t step = 1) {
    Trace t;
    for (std::uint64_t n = 1; n <= n_max; n += step) {
        TraceRow r;
        r.n = n;
        r.grad_l1 = c * std::pow(static_cast<double>(n), p);
        t.push_back(r);
    }
    return t;
}

} // namespace

TEST(Ergodic, ConstantAndTwoStepExamples) {
    ErgodicAverage a;
    for (double w : {0.3, 2.0, 1e-4, 7.0}) a.update(w, 4.5);
    EXPECT_DOUBLE_EQ(a.value_or_zero(), 4.5);
    ErgodicAverage b;
    b.update(1.0, 0.0);
    EXPECT_DOUBLE_EQ(b.update(1.0, 2.0), 1.0);
    EXPECT_THROW(b.update(0.0, 1.0), InvalidArgument);
    EXPECT_EQ(ErgodicAverage().value_or_zero(), 0.0);
}

TEST(Ergodic, MatchesDirectSummation) {
    ErgodicAverage a;
    for (int k = 1; k <= 10000; ++k) a.update(1.0 / k, 1.0 / std::sqrt(k));
    // Direct summation in long double, independent of the incremental form.
    long double num = 0, den = 0;
    for (int k = 1; k <= 10000; ++k) {
        num += (1.0L / k) * (1.0L / std::sqrt(static_cast<long double>(k)));
        den += 1.0L / k;
    }
    EXPECT_NEAR(a.value_or_zero(), static_cast<double>(num / den), 1e-10);
}

TEST(Ergodic, StaysWithinRangeOfInputs) {
    ErgodicAverage a;
    double lo = 1e300, hi = -1e300;
    for (int k = 1; k < 500; ++k) {
        const double g = 2.0 + std::sin(0.37 * k);
        lo = std::min(lo, g);
        hi = std::max(hi, g);
        const double v = a.update(std::pow(k, -0.7), g);
        EXPECT_GE(v, lo - 1e-12);
        EXPECT_LE(v, hi + 1e-12);
    }
}

TEST(FitRate, ExactPowerLaw) {
    const auto fit = fit_rate(power_law(3.0, -0.5, 1000), Metric::grad_l1, 1, 1000);
    EXPECT_NEAR(fit.slope, -0.5, 1e-6);
    EXPECT_GE(fit.r_squared, 0.999999);
    EXPECT_NEAR(fit.intercept, std::log(3.0), 1e-6);
    EXPECT_EQ(fit.rows, 1000u);
}

TEST(FitRate, ConstantHasZeroSlope) {
    const auto fit = fit_rate(power_law(2.0, 0.0, 100), Metric::grad_l1, 1, 100);
    EXPECT_NEAR(fit.slope, 0.0, 1e-6);
}

// Frozen from an independent least-squares fit over n = 1..10^4: slope -1.0000.
TEST(FitRate, PerturbedPowerLaw) {
    Trace t;
    for (std::uint64_t n = 1; n <= 10000; ++n) {
        TraceRow r;
        r.n = n;
        r.grad_l1 = (1.0 / static_cast<double>(n)) * (1.0 + 0.1 * std::sin(static_cast<double>(n)));
        t.push_back(r);
    }
    const auto fit = fit_rate(t, Metric::grad_l1, 1, 10000);
    EXPECT_GE(fit.slope, -1.05);
    EXPECT_LE(fit.slope, -0.95);
}

TEST(FitRate, ScaleInvariantSlope) {
    const auto a = fit_rate(power_law(1.0, -0.3, 500), Metric::grad_l1, 10, 500);
    const auto b = fit_rate(power_law(17.0, -0.3, 500), Metric::grad_l1, 10, 500);
    EXPECT_NEAR(a.slope, b.slope, 1e-12);
    EXPECT_NEAR(b.intercept - a.intercept, std::log(17.0), 1e-9);
}

TEST(FitRate, Errors) {
    EXPECT_THROW(fit_rate(power_law(1.0, -1.0, 9), Metric::grad_l1, 1, 9), DataError);
    EXPECT_THROW(fit_rate(power_law(0.0, 0.0, 100), Metric::grad_l1, 1, 100), DataError);
    EXPECT_THROW(fit_rate(power_law(1.0, -1.0, 100), Metric::grad_l1, 500, 1000), DataError);
    EXPECT_THROW(fit_rate(power_law(1.0, -1.0, 100), Metric::grad_l1, 50, 10), InvalidArgument);
    EXPECT_THROW(fit_rate(power_law(1.0, -1.0, 100), Metric::test_metric, 1, 100), DataError);
    EXPECT_THROW(metric_from_string("loss"), InvalidArgument);
}

TEST(Merge, AveragesCommonRows) {
    Trace a{{1, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 10, 0.5}, {2, 2.0, 0, 0, 0, 0, 0, 20, std::nullopt}};
    Trace b{{1, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 30, std::nullopt}};
    const auto m = merge_traces({a, b});
    ASSERT_EQ(m.size(), 1u);
    EXPECT_DOUBLE_EQ(m[0].sim_time, 2.0);
    EXPECT_DOUBLE_EQ(m[0].ergodic_avg, 7.0);
    EXPECT_EQ(m[0].oracle_calls, 20u);
    EXPECT_DOUBLE_EQ(*m[0].test_metric, 0.5);
    EXPECT_TRUE(merge_traces({}).empty());
}

TEST(Export, EmptyTraceIsHeaderOnly) {
    std::ostringstream os;
    write_csv(os, {});
    EXPECT_EQ(os.str(), std::string(csv_header()) + "\n");
}

TEST(Export, OneRowIsTwoLines) {
    std::ostringstream os;
    write_csv(os, {TraceRow{}});
    const auto s = os.str();
    EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 2);
}

TEST(Export, CsvRoundTrip) {
    Trace t{{0, 0.0, 1.0 / 3.0, 2.5e-17, 0.1, 0.0, 0.2, 0, std::nullopt},
            {100, 123.456, -7.0, 1e300, 3.0, 0.0, 1.0 / 7.0, 400, 0.9375}};
    std::stringstream ss;
    write_csv(ss, t);
    const auto back = read_csv(ss);
    ASSERT_EQ(back.size(), t.size());
    // track_err_sq is JSONL-only.
    EXPECT_EQ(back, t);
}

TEST(Export, JsonlRoundTripWithManifest) {
    Trace t{{5, 1.0, 2.0, 3.0, 4.0, 16.0, 5.0, 6, 0.25}, {6, 1.5, 2.5, 3.5, 4.5, 20.25, 5.5, 7, std::nullopt}};
    std::stringstream ss;
    write_jsonl(ss, t, {{"seed", 3}});
    const auto back = read_jsonl(ss);
    EXPECT_EQ(back.rows, t);
    EXPECT_EQ(back.manifest["seed"], 3);
    EXPECT_EQ(back.manifest["type"], "manifest");
    EXPECT_TRUE(back.manifest.contains("git_describe"));
}

TEST(Export, ReaderErrors) {
    std::istringstream bad_header("a,b\n");
    EXPECT_THROW(read_csv(bad_header), DataError);
    std::istringstream bad_row(std::string(csv_header()) + "\n1,2,3\n");
    EXPECT_THROW(read_csv(bad_row), DataError);
    std::istringstream bad_num(std::string(csv_header()) + "\n1,x,0,0,0,0,0,\n");
    EXPECT_THROW(read_csv(bad_num), DataError);
    std::istringstream bad_json("{not json\n");
    EXPECT_THROW(read_jsonl(bad_json), DataError);
    EXPECT_THROW(load_trace("/nonexistent/trace.csv"), DataError);
}
