#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "farsign/dictionaries.hpp"

using namespace farsign;

namespace {

// Independent oracle: dense scan of the l1 square by angle.
double scan_margin(const DirectionDictionary& d, const WorkerSet& s, int steps = 400000) {
    double best = 1e300;
    for (int k = 0; k < steps; ++k) {
        const double th = M_PI * k / steps;
        const double c = std::cos(th), sn = std::sin(th);
        const double l1 = std::fabs(c) + std::fabs(sn);
        const Vec x{c / l1, sn / l1};
        double margin = 0.0;
        for (std::size_t w = 0; w < d.workers(); ++w) {
            const double v = d.matrix(w).transpose_l1(x);
            margin += std::find(s.begin(), s.end(), w) != s.end() ? -v : v;
        }
        best = std::min(best, margin);
    }
    return best;
}

} // namespace

TEST(IdentityDictionary, Shapes) {
    const auto d = identity_dictionary(2, 3);
    EXPECT_EQ(d.workers(), 3u);
    EXPECT_EQ(d.dim(), 2u);
    EXPECT_EQ(d.directions(), 2u);
    EXPECT_DOUBLE_EQ(d.a_bar(), 1.0);
    EXPECT_TRUE(d.all_identity());
    EXPECT_EQ(d.matrix(1).at(1, 1), 1.0);
    EXPECT_EQ(d.matrix(1).at(0, 1), 0.0);

    const auto one = identity_dictionary(1, 1);
    EXPECT_EQ(one.matrix(0).at(0, 0), 1.0);

    const auto big = identity_dictionary(79510, 51);
    EXPECT_EQ(big.directions(), 79510u);
    EXPECT_DOUBLE_EQ(big.a_bar(), 1.0);
    EXPECT_THROW(identity_dictionary(0, 3), InvalidArgument);
}

TEST(ExampleDictionary, ColumnsNormsRank) {
    const auto d = ganesh_example_dictionary();
    EXPECT_EQ(d.workers(), 4u);
    EXPECT_EQ(d.dim(), 2u);
    EXPECT_EQ(d.directions(), 1u);
    const double cols[4][2] = {{2, 0}, {0, 2}, {1, 2}, {-2, 1}};
    for (std::size_t w = 0; w < 4; ++w)
        for (std::size_t r = 0; r < 2; ++r) EXPECT_EQ(d.matrix(w).at(r, 0), cols[w][r]);
    EXPECT_NEAR(d.a_bar(), std::sqrt(5.0), 1e-12);
    EXPECT_EQ(d.stacked_rank(), 2u);
    EXPECT_FALSE(d.stacked_full_column_rank());
}

TEST(Dictionary, RejectsZeroColumnsAndRaggedShapes) {
    EXPECT_THROW(DirectionDictionary({DirectionMatrix::from_columns({{0.0, 0.0}})}), InvalidArgument);
    EXPECT_THROW(DirectionDictionary({DirectionMatrix::from_columns({{1.0, 0.0}}), DirectionMatrix::from_columns({{1.0, 0.0, 0.0}})}),
                 DimensionError);
    EXPECT_THROW(DirectionDictionary(std::vector<DirectionMatrix>{}), InvalidArgument);
}

TEST(Dictionary, ABarMatchesRecomputedColumnNorms) {
    const auto d = DirectionDictionary({DirectionMatrix::from_columns({{3.0, 4.0, 0.0}, {0.1, 0.2, 0.3}}),
                                        DirectionMatrix::from_columns({{1.0, 1.0, 1.0}, {0.0, 0.0, 6.5}})});
    double best = 0.0;
    for (const auto& a : d.matrices())
        for (std::size_t c = 0; c < a.cols(); ++c) {
            double s = 0.0;
            for (std::size_t r = 0; r < a.rows(); ++r) s += a.at(r, c) * a.at(r, c);
            best = std::max(best, std::sqrt(s));
        }
    EXPECT_NEAR(d.a_bar(), best, 1e-12);
}

TEST(Dictionary, TextRoundTrip) {
    const auto d = DirectionDictionary({DirectionMatrix::from_columns({{0.1, -2.5}, {1.0 / 3.0, 7.0}}),
                                        DirectionMatrix::identity(2),
                                        DirectionMatrix::from_columns({{1e-9, 2.0}, {3.0, -4.0}})});
    std::stringstream ss;
    write_dictionary(ss, d);
    const auto back = read_dictionary(ss);
    ASSERT_EQ(back.workers(), 3u);
    EXPECT_TRUE(back.matrix(1).is_identity());
    for (std::size_t w = 0; w < 3; ++w)
        for (std::size_t r = 0; r < 2; ++r)
            for (std::size_t c = 0; c < 2; ++c) EXPECT_EQ(back.matrix(w).at(r, c), d.matrix(w).at(r, c));
}

TEST(Dictionary, ReaderErrors) {
    std::istringstream ragged("1 2\n3\n");
    EXPECT_THROW(read_dictionary(ragged), DataError);
    std::istringstream junk("1 x\n");
    EXPECT_THROW(read_dictionary(junk), DataError);
    std::istringstream empty("# nothing\n\n");
    EXPECT_THROW(read_dictionary(empty), DataError);
    EXPECT_THROW(load_dictionary("/nonexistent/dict.txt"), DataError);
}

TEST(SubsetMargin, IdentityClosedForm) {
    const auto d5 = identity_dictionary(3, 5);
    EXPECT_EQ(subset_margin(d5, {0, 1}, MarginMethod::analytic_identity), 1.0);
    const auto d4 = identity_dictionary(3, 4);
    EXPECT_EQ(subset_margin(d4, {2, 3}, MarginMethod::analytic_identity), 0.0);
    EXPECT_THROW(subset_margin(d4, {7}, MarginMethod::analytic_identity), InvalidArgument);
    EXPECT_THROW(subset_margin(ganesh_example_dictionary(), {0}, MarginMethod::analytic_identity), InvalidArgument);
}

// Frozen values from a 2e6-point angular scan of the example: margins of the
// singletons are 1, 1, 1/3, 1/3 and the empty set gives 11/3.
TEST(SubsetMargin, ExampleExactMatchesFrozenOracle) {
    const auto d = ganesh_example_dictionary();
    const double expect[4] = {1.0, 1.0, 1.0 / 3.0, 1.0 / 3.0};
    for (std::size_t w = 0; w < 4; ++w) {
        const double exact = subset_margin(d, {w}, MarginMethod::exact_2d);
        EXPECT_NEAR(exact, expect[w], 1e-12) << "worker " << w;
        EXPECT_GT(exact, 0.0);
        EXPECT_NEAR(exact, scan_margin(d, {w}), 1e-3);
    }
    EXPECT_NEAR(subset_margin(d, {}, MarginMethod::exact_2d), 11.0 / 3.0, 1e-12);
}

TEST(SubsetMargin, MonteCarloIsUpperBoundAndClose) {
    const auto d = ganesh_example_dictionary();
    MarginOptions opt;
    opt.samples = 100000;
    opt.seed = 3;
    for (std::size_t w = 0; w < 4; ++w) {
        const double exact = subset_margin(d, {w}, MarginMethod::exact_2d);
        const double mc = subset_margin(d, {w}, MarginMethod::monte_carlo, opt);
        EXPECT_GE(mc, exact - 1e-12);
        EXPECT_LE(mc - exact, 1e-2);
    }
}

TEST(SubsetMargin, Exact2dNeedsPlane) {
    EXPECT_THROW(subset_margin(identity_dictionary(3, 2), {}, MarginMethod::exact_2d), DimensionError);
}

TEST(SubsetMargin, MonotoneInSubsetAndScales) {
    const auto d = ganesh_example_dictionary();
    const auto scaled = d.scaled(2.5);
    const std::vector<WorkerSet> chain{{}, {1}, {1, 3}, {0, 1, 3}};
    double prev = 1e300;
    for (const auto& s : chain) {
        const double m = subset_margin(d, s, MarginMethod::exact_2d);
        EXPECT_LE(m, prev + 1e-12);
        EXPECT_NEAR(subset_margin(scaled, s, MarginMethod::exact_2d), 2.5 * m, 1e-12);
        prev = m;
    }
}

TEST(Certify, IdentityFiftyOneTwelve) {
    const auto c = certify(identity_dictionary(4, 51), 12, MarginMethod::analytic_identity);
    EXPECT_EQ(c.verdict, Verdict::certified_pass);
    EXPECT_EQ(c.margin_eta, 27.0);
    EXPECT_EQ(c.worst_subset.size(), 12u);
}

TEST(Certify, IdentityPassIffMinority) {
    for (std::size_t n = 1; n <= 9; ++n)
        for (std::size_t f = 0; f <= n; ++f) {
            const auto c = certify(identity_dictionary(2, n), f, MarginMethod::analytic_identity);
            EXPECT_EQ(c.passed(), 2 * f < n) << "N=" << n << " f=" << f;
            EXPECT_TRUE(c.certified());
        }
}

TEST(Certify, ExactRequestOnIdentityUsesClosedForm) {
    const auto c = certify(identity_dictionary(2, 4), 2, MarginMethod::exact_2d);
    EXPECT_EQ(c.method, MarginMethod::analytic_identity);
    EXPECT_EQ(c.verdict, Verdict::certified_fail);
}

TEST(Certify, ExampleOneAdversaryPasses) {
    const auto c = certify(ganesh_example_dictionary(), 1, MarginMethod::exact_2d);
    EXPECT_EQ(c.verdict, Verdict::certified_pass);
    EXPECT_NEAR(c.margin_eta, 1.0 / 3.0, 1e-12);
    EXPECT_EQ(c.worst_subset, (WorkerSet{2}));
}

TEST(Certify, ExampleTwoAdversariesFailWithWitness) {
    const auto d = ganesh_example_dictionary();
    const auto c = certify(d, 2, MarginMethod::exact_2d);
    EXPECT_EQ(c.verdict, Verdict::certified_fail);
    EXPECT_NEAR(c.margin_eta, -3.0, 1e-12);
    EXPECT_EQ(c.worst_subset, (WorkerSet{0, 3}));
    ASSERT_EQ(c.worst_direction.size(), 2u);
    // The witness direction violates the strict inequality.
    double margin = 0.0;
    for (std::size_t w = 0; w < 4; ++w) {
        const double v = d.matrix(w).transpose_l1(c.worst_direction);
        margin += (w == 0 || w == 3) ? -v : v;
    }
    EXPECT_LE(margin, 0.0);

    MarginOptions opt;
    const auto mc = certify(d, 2, MarginMethod::monte_carlo, opt);
    EXPECT_EQ(mc.verdict, Verdict::sampled_fail);
    EXPECT_NEAR(mc.margin_eta, c.margin_eta, 1e-2);
    const auto mc1 = certify(d, 1, MarginMethod::monte_carlo, opt);
    EXPECT_EQ(mc1.verdict, Verdict::sampled_pass);
    EXPECT_NEAR(mc1.margin_eta, 1.0 / 3.0, 1e-2);
}

TEST(Certify, SubsetCapRaisesBudgetExceeded) {
    std::vector<DirectionMatrix> mats;
    for (int w = 0; w < 40; ++w) mats.push_back(DirectionMatrix::from_columns({{1.0 + w, 1.0}}));
    const DirectionDictionary d(std::move(mats));
    MarginOptions opt;
    EXPECT_THROW(certify(d, 10, MarginMethod::exact_2d, opt), BudgetExceeded);
    EXPECT_THROW(certify(d, 41, MarginMethod::exact_2d, opt), InvalidArgument);
}

TEST(MarginMethodNames, RoundTrip) {
    for (auto m : {MarginMethod::analytic_identity, MarginMethod::exact_2d, MarginMethod::monte_carlo})
        EXPECT_EQ(margin_method_from_string(to_string(m)), m);
    EXPECT_THROW(margin_method_from_string("exact"), InvalidArgument);
}
