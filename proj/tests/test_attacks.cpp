#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "farsign/attacks.hpp"

using namespace farsign;

TEST(Attacks, DeterministicKinds) {
    const auto stats = HonestStats::fixed({2.0}, {0.5});
    Rng rng(1);
    AttackSpec a;
    EXPECT_EQ(corrupt_scalar(a, 3.0, stats, rng), 3.0);
    a.kind = AttackKind::sign_flip;
    a.kappa = 2.0;
    EXPECT_EQ(corrupt_scalar(a, 3.0, stats, rng), -6.0);
    a.kind = AttackKind::constant;
    a.c = -7.5;
    EXPECT_EQ(corrupt_scalar(a, 3.0, stats, rng), -7.5);
    a.kind = AttackKind::alie;
    a.z = 1.5;
    EXPECT_DOUBLE_EQ(corrupt_scalar(a, 3.0, stats, rng), 2.0 - 0.75);
}

TEST(Attacks, GaussianIsIndependentOfHonestValue) {
    AttackSpec a;
    a.kind = AttackKind::gaussian;
    a.sigma_a = 3.0;
    const HonestStats stats;
    Rng r1(8), r2(8);
    const int n = 100000;
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double v = corrupt_scalar(a, 100.0, stats, r1);
        EXPECT_EQ(v, corrupt_scalar(a, -100.0, stats, r2));
        s += v;
        s2 += v * v;
    }
    EXPECT_NEAR(s / n, 0.0, 5.0 * 3.0 / std::sqrt(n));
    EXPECT_NEAR(s2 / n, 9.0, 0.05 * 9.0);
}

TEST(Attacks, NonFiniteOutputIsSanitised) {
    AttackSpec a;
    a.kind = AttackKind::sign_flip;
    Rng rng(1);
    EXPECT_EQ(corrupt_scalar(a, std::numeric_limits<double>::infinity(), HonestStats(), rng), 0.0);
}

TEST(Attacks, VectorUsesPerCoordinateStatistics) {
    AttackSpec a;
    a.kind = AttackKind::alie;
    a.z = 2.0;
    const auto stats = HonestStats::fixed({1.0, -1.0}, {1.0, 0.0});
    Rng rng(1);
    EXPECT_EQ(corrupt_vector(a, Vec{9.0, 9.0}, stats, rng), (Vec{-1.0, -1.0}));
    EXPECT_THROW(corrupt_vector(a, Vec{9.0}, stats, rng), DimensionError);
}

TEST(HonestStats, FirstObservationSetsMeanThenExponentialUpdate) {
    HonestStats s(2, 0.5);
    s.observe(0, 4.0);
    EXPECT_EQ(s.mean(0), 4.0);
    EXPECT_EQ(s.std(0), 0.0);
    s.observe(0, 8.0);
    // mean += 0.5 * 4; var = 0.5 * (0 + 0.5 * 16)
    EXPECT_DOUBLE_EQ(s.mean(0), 6.0);
    EXPECT_DOUBLE_EQ(s.std(0), 2.0);
    EXPECT_EQ(s.mean(1), 0.0);
    s.observe(1, std::numeric_limits<double>::quiet_NaN());
    EXPECT_EQ(s.mean(1), 0.0);
    EXPECT_THROW(s.observe(Vec{1.0}), DimensionError);
}

TEST(HonestStats, ConvergesToStationaryMoments) {
    HonestStats s(1, 0.999);
    Rng rng(3);
    for (int i = 0; i < 200000; ++i) s.observe(0, rng.normal(1.0, 2.0));
    EXPECT_NEAR(s.mean(), 1.0, 0.3);
    EXPECT_NEAR(s.std(), 2.0, 0.2);
}

TEST(AttackSpec, ValidateAndNames) {
    AttackSpec a;
    a.sigma_a = 0.0;
    EXPECT_THROW(a.validate(), InvalidArgument);
    a = {};
    a.kappa = NAN;
    EXPECT_THROW(a.validate(), InvalidArgument);
    for (auto k : {AttackKind::none, AttackKind::sign_flip, AttackKind::constant, AttackKind::gaussian, AttackKind::alie})
        EXPECT_EQ(attack_kind_from_string(to_string(k)), k);
    EXPECT_THROW(attack_kind_from_string("label_flip"), InvalidArgument);
}
