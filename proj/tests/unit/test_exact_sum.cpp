#include <gtest/gtest.h>

#include <mpfr.h>

#include <algorithm>
#include <random>
#include <vector>

#include "calars/exact_sum.hpp"

using calars::ExactAccumulator;

namespace {

// Correctly rounded sum via MPFR.
double mpfr_reference(const std::vector<double>& xs)
{
    std::vector<mpfr_t> vals(xs.size());
    std::vector<mpfr_ptr> ptrs(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mpfr_init2(vals[i], 53);
        mpfr_set_d(vals[i], xs[i], MPFR_RNDN);
        ptrs[i] = vals[i];
    }
    mpfr_t sum;
    mpfr_init2(sum, 53);
    mpfr_sum(sum, ptrs.data(), xs.size(), MPFR_RNDN);
    const double out = mpfr_get_d(sum, MPFR_RNDN);
    mpfr_clear(sum);
    for (auto& v : vals) mpfr_clear(v);
    return out;
}

double exact(const std::vector<double>& xs)
{
    ExactAccumulator acc;
    for (double x : xs) acc.add(x);
    return acc.value();
}

}  // namespace

TEST(ExactSum, EmptyIsZero)
{
    ExactAccumulator acc;
    EXPECT_TRUE(acc.empty());
    EXPECT_EQ(acc.value(), 0.0);
}

TEST(ExactSum, CancellationThatPlainSummationLoses)
{
    const std::vector<double> xs{1e100, 1.0, -1e100, 1e-30};
    EXPECT_EQ(exact(xs), 1.0 + 1e-30);
    EXPECT_EQ(exact(xs), mpfr_reference(xs));
}

TEST(ExactSum, SignedZeroAndTinyValues)
{
    EXPECT_EQ(exact({4.9e-324, 4.9e-324}), 2 * 4.9e-324);
    EXPECT_EQ(exact({-3.0, 3.0}), 0.0);
    EXPECT_EQ(exact({-2.5}), -2.5);
}

TEST(ExactSum, NonFinitePropagates)
{
    EXPECT_TRUE(std::isnan(exact({1.0, std::nan("")})));
    EXPECT_EQ(exact({1.0, INFINITY}), INFINITY);
    EXPECT_TRUE(std::isnan(exact({INFINITY, -INFINITY})));
}

TEST(ExactSum, MatchesMpfrOnRandomMixedMagnitudes)
{
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<int> ex(-60, 60);
    std::normal_distribution<double> nd;
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<double> xs(1 + trial % 97);
        for (auto& x : xs) x = std::ldexp(nd(rng), ex(rng));
        ASSERT_EQ(exact(xs), mpfr_reference(xs)) << "trial " << trial;
    }
}

TEST(ExactSum, MatchesMpfrNearRoundingTies)
{
    // 1 + 2^-53 is a tie; the sticky low part decides the rounding.
    const std::vector<double> a{1.0, std::ldexp(1.0, -53)};
    const std::vector<double> b{1.0, std::ldexp(1.0, -53), std::ldexp(1.0, -200)};
    const std::vector<double> c{1.0, std::ldexp(1.0, -53), -std::ldexp(1.0, -200)};
    EXPECT_EQ(exact(a), mpfr_reference(a));
    EXPECT_EQ(exact(b), mpfr_reference(b));
    EXPECT_EQ(exact(c), mpfr_reference(c));
}

TEST(ExactSum, PartitionAndMergeOrderDoNotMatter)
{
    std::mt19937_64 rng(11);
    std::normal_distribution<double> nd;
    std::vector<double> xs(1000);
    for (auto& x : xs) x = nd(rng) * std::exp(nd(rng) * 5);
    const double whole = exact(xs);
    for (int parts : {2, 3, 7, 16}) {
        std::vector<ExactAccumulator> accs(static_cast<std::size_t>(parts));
        for (std::size_t i = 0; i < xs.size(); ++i) accs[i % static_cast<std::size_t>(parts)].add(xs[i]);
        ExactAccumulator fwd, rev;
        for (const auto& a : accs) fwd.merge(a);
        for (auto it = accs.rbegin(); it != accs.rend(); ++it) rev.merge(*it);
        EXPECT_EQ(fwd.value(), whole);
        EXPECT_EQ(rev.value(), whole);
    }
    std::shuffle(xs.begin(), xs.end(), rng);
    EXPECT_EQ(exact(xs), whole);
}
