#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <memory>

#include "farsign/engine.hpp"

using namespace farsign;

namespace {

// alpha_n = alpha / (n+1), beta_n = beta / (n+1).
ScheduleSpec harmonic_steps(double alpha, double beta) {
    ScheduleSpec s;
    s.alpha_scale = alpha;
    s.beta_scale = beta;
    s.alpha_exp = 1.0;
    s.beta_exp = 1.0;
    return s;
}

std::shared_ptr<const DirectionDictionary> share(DirectionDictionary d) {
    return std::make_shared<const DirectionDictionary>(std::move(d));
}

// Dense reference of one update written directly from the recursion.
struct Reference {
    std::vector<std::vector<Vec>> cols; // [worker][direction] column
    Vec x;
    std::vector<Vec> y;
    std::uint64_t n = 0;

    void apply(const ScheduleSpec& spec, std::size_t w, const std::vector<std::size_t>& dirs, const Vec& vals) {
        const auto st = schedule_at(spec, n);
        for (std::size_t i : dirs) {
            const double s = y[w][i] > 0 ? -1.0 : (y[w][i] < 0 ? 1.0 : 0.0);
            for (std::size_t j = 0; j < x.size(); ++j) x[j] += st.alpha * s * cols[w][i][j];
        }
        for (std::size_t k = 0; k < dirs.size(); ++k) y[w][dirs[k]] += st.beta * (vals[k] - y[w][dirs[k]]);
        ++n;
    }
};

} // namespace

TEST(Engine, FirstStepUsesPreUpdateAveragesSoSignIsZero) {
    ServerState s(share(identity_dictionary(2, 1)), harmonic_steps(0.5, 0.25), {1.0, 1.0});
    const auto rec = s.apply_event({0, {0}, {4.0}});
    EXPECT_EQ(rec.n, 0u);
    EXPECT_EQ(rec.signs[0], 0.0);
    EXPECT_EQ(s.x(), (Vec{1.0, 1.0}));
    EXPECT_DOUBLE_EQ(s.y(0, 0), 1.0);
    EXPECT_EQ(s.y(0, 1), 0.0);
    EXPECT_EQ(s.n(), 1u);

    const auto rec2 = s.apply_event({0, {0}, {4.0}});
    EXPECT_EQ(rec2.signs[0], -1.0);
    EXPECT_DOUBLE_EQ(s.x()[0], 0.75);
    EXPECT_DOUBLE_EQ(rec2.displacement, 0.25);
    EXPECT_DOUBLE_EQ(s.y(0, 0), 1.375);
}

TEST(Engine, OnlyReportedDirectionsMove) {
    ServerState s(share(identity_dictionary(3, 2)), harmonic_steps(0.1, 0.5), {0.0, 0.0, 0.0});
    s.set_y(1, 2, -3.0);
    s.set_y(1, 0, 2.0);
    s.apply_event({1, {2}, {1.0}});
    EXPECT_DOUBLE_EQ(s.x()[2], 0.1);
    EXPECT_EQ(s.x()[0], 0.0);
    EXPECT_EQ(s.y(1, 0), 2.0);
    EXPECT_DOUBLE_EQ(s.y(1, 2), -1.0);
}

TEST(Engine, MatchesDenseReferenceOverManyEvents) {
    const auto d = share(DirectionDictionary({DirectionMatrix::from_columns({{1.0, 0.5, -1.0}, {0.0, 2.0, 1.0}}),
                                              DirectionMatrix::from_columns({{1.0, 0.0, 0.0}, {0.0, 0.0, 1.0}}),
                                              DirectionMatrix::from_columns({{-1.0, -1.0, 0.3}, {0.2, 0.0, 0.0}})}));
    ScheduleSpec spec;
    spec.alpha_scale = 0.3;
    spec.alpha_exp = 0.9;
    spec.beta_scale = 0.8;
    spec.beta_exp = 0.6;
    ServerState s(d, spec, {0.5, -0.5, 1.0});
    Reference ref;
    for (std::size_t w = 0; w < 3; ++w) ref.cols.push_back({d->matrix(w).column(0), d->matrix(w).column(1)});
    ref.x = {0.5, -0.5, 1.0};
    ref.y.assign(3, Vec(2, 0.0));
    Rng rng(5);
    for (int e = 0; e < 500; ++e) {
        const std::size_t w = rng.index(3);
        std::vector<std::size_t> dirs = rng.coin() ? std::vector<std::size_t>{0, 1} : std::vector<std::size_t>{rng.index(2)};
        Vec vals;
        for (std::size_t k = 0; k < dirs.size(); ++k) vals.push_back(rng.normal() + 0.3 * ref.x[k]);
        s.apply_event({w, dirs, vals});
        ref.apply(spec, w, dirs, vals);
    }
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(s.x()[j], ref.x[j], 1e-12);
    for (std::size_t w = 0; w < 3; ++w)
        for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(s.y(w, i), ref.y[w][i], 1e-12);
}

TEST(Engine, ArrivalWeightsScaleSteps) {
    ServerState s(share(identity_dictionary(2, 2)), harmonic_steps(1.0, 1.0), {0.0, 0.0});
    // N*m = 4; pi = 1/8 gives weight 2, pi = 1/2 gives weight 1/2.
    s.set_arrival_probs({0.125, 0.5, 0.5, 0.5});
    s.set_y(0, 0, 1.0);
    s.set_y(0, 1, -1.0);
    s.apply_event({0, {0, 1}, {0.0, 0.0}});
    EXPECT_DOUBLE_EQ(s.x()[0], -2.0);
    EXPECT_DOUBLE_EQ(s.x()[1], 0.5);
    EXPECT_THROW(s.set_arrival_probs({0.0, 0.5, 0.5, 0.5}), InvalidArgument);
    EXPECT_THROW(s.set_arrival_probs({0.5}), DimensionError);
}

TEST(Engine, NonFiniteFeedbackIsReportedNotApplied) {
    ServerState s(share(identity_dictionary(2, 1)), harmonic_steps(1.0, 1.0), {1.0, 2.0});
    const auto rec = s.apply_event({0, {1}, {std::numeric_limits<double>::quiet_NaN()}});
    EXPECT_TRUE(rec.fault);
    EXPECT_FALSE(rec.fault_reason.empty());
    EXPECT_EQ(s.n(), 0u);
    EXPECT_EQ(s.x(), (Vec{1.0, 2.0}));
    EXPECT_EQ(s.y(0, 1), 0.0);
}

TEST(Engine, RejectsMalformedEvents) {
    ServerState s(share(identity_dictionary(2, 2)), harmonic_steps(1.0, 1.0), {0.0, 0.0});
    EXPECT_THROW(s.apply_event({2, {0}, {1.0}}), InvalidArgument);
    EXPECT_THROW(s.apply_event({0, {}, {}}), InvalidArgument);
    EXPECT_THROW(s.apply_event({0, {0}, {1.0, 2.0}}), InvalidArgument);
    EXPECT_THROW(s.apply_event({0, {5}, {1.0}}), InvalidArgument);
    EXPECT_THROW(s.apply_event({0, {1, 1}, {1.0, 1.0}}), InvalidArgument);
    EXPECT_THROW(ServerState(share(identity_dictionary(2, 2)), harmonic_steps(1.0, 1.0), {0.0}), DimensionError);
    EXPECT_THROW(ServerState(nullptr, harmonic_steps(1.0, 1.0), {0.0}), InvalidArgument);
    EXPECT_THROW(ServerState(share(identity_dictionary(1, 1)), harmonic_steps(1.0, 1.0), {INFINITY}), InvalidArgument);
}

TEST(Engine, OverflowRaisesFault) {
    ServerState s(share(identity_dictionary(1, 1)), harmonic_steps(1e308, 1.0), {1e308});
    s.set_y(0, 0, -1.0);
    EXPECT_THROW(s.apply_event({0, {0}, {0.0}}), Fault);
}

TEST(Engine, SparseAndDenseStorageAgree) {
    const auto d = share(identity_dictionary(50, 3));
    ServerState dense(d, harmonic_steps(0.01, 0.3), Vec(50, 1.0), AverageStorage::dense);
    ServerState sparse(d, harmonic_steps(0.01, 0.3), Vec(50, 1.0), AverageStorage::sparse);
    Rng rng(2);
    for (int e = 0; e < 2000; ++e) {
        const FeedbackEvent ev{rng.index(3), {rng.index(50)}, {rng.normal(0.5, 1.0)}};
        dense.apply_event(ev);
        sparse.apply_event(ev);
    }
    EXPECT_EQ(dense.x(), sparse.x());
    for (std::size_t w = 0; w < 3; ++w) EXPECT_EQ(dense.y_worker(w), sparse.y_worker(w));
}

TEST(Engine, TrackingErrorAgainstExactGradient) {
    const auto q = Quadratic::diagonal({1.0, 2.0});
    ServerState s(share(identity_dictionary(2, 1)), harmonic_steps(0.1, 0.1), {1.0, 1.0});
    s.set_y(0, 0, 1.0);
    s.set_y(0, 1, 0.0);
    // grad = (1, 2): error (0, -2).
    EXPECT_DOUBLE_EQ(s.tracking_error(q, 0), 2.0);
    EXPECT_THROW(s.tracking_error(q, 1), InvalidArgument);
}

TEST(Engine, SnapshotCopiesState) {
    ServerState s(share(identity_dictionary(1, 1)), harmonic_steps(1.0, 1.0), {3.0});
    const auto snap = s.snapshot();
    s.set_y(0, 0, 1.0);
    s.apply_event({0, {0}, {0.0}});
    EXPECT_EQ(snap.x, Vec{3.0});
    EXPECT_EQ(snap.n, 0u);
    EXPECT_EQ(s.x(), Vec{2.0});
}
