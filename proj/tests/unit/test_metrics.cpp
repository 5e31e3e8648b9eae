#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <sstream>

#include "calars/metrics.hpp"
#include "support.hpp"

using namespace calars;
using calars::testkit::fitted;
using calars::testkit::random_instance;
using calars::testkit::to_eigen;

TEST(Precision, Examples)
{
    std::vector<Index> a(75), b(75);
    std::iota(a.begin(), a.end(), 0);
    EXPECT_EQ(precision(a, a), 1.0);
    std::iota(b.begin(), b.end(), 100);
    EXPECT_EQ(precision(a, b), 0.0);
    std::iota(b.begin(), b.end(), 15);  // 60 shared
    EXPECT_DOUBLE_EQ(precision(a, b), 0.8);
    EXPECT_THROW(precision(std::vector<Index>{}, a), ConfigError);
}

TEST(Precision, OrderDoesNotMatter)
{
    std::vector<Index> a{4, 8, 1, 9}, b{1, 2, 3, 4};
    const double p = precision(a, b);
    std::reverse(a.begin(), a.end());
    std::rotate(b.begin(), b.begin() + 1, b.end());
    EXPECT_EQ(precision(a, b), p);
    EXPECT_EQ(p, 0.5);
}

TEST(Precision, Prefix)
{
    const std::vector<Index> s{1, 2, 3, 4}, t{2, 1, 5, 3};
    EXPECT_EQ(prefix_precision(s, t), (std::vector<double>{0.0, 1.0, 2.0 / 3.0, 0.75}));
}

TEST(ResidualCurve, OrthonormalAndEmpty)
{
    const auto a = make_normalized_dense(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    const auto curve = residual_curve(lars_fit(a, std::vector<double>{3, 2, 1}, 3));
    ASSERT_EQ(curve.size(), 3u);
    EXPECT_EQ(curve[0].n_selected, 2u);
    EXPECT_EQ(curve[1].n_selected, 3u);
    EXPECT_EQ(curve[2].n_selected, 3u);
    EXPECT_NEAR(curve[0].residual, 3.0, 1e-12);
    EXPECT_NEAR(curve[1].residual, std::sqrt(3.0), 1e-12);
    EXPECT_NEAR(curve[2].residual, 0.0, 1e-12);
    EXPECT_TRUE(residual_curve(SolutionPath{}).empty());
}

TEST(ResidualCurve, MatchesRecomputedResiduals)
{
    const auto inst = random_instance(40, 60, 2);
    for (int b : {1, 4}) {
        const auto fit = blars_fit(inst.a, inst.b, BlarsConfig{b, 20, 2});
        const auto curve = residual_curve(fit.path);
        EXPECT_EQ(curve.size(), fit.path.records.size());
        for (std::size_t k = 0; k < curve.size(); ++k) {
            const Eigen::VectorXd r = to_eigen(std::span<const double>(inst.b)) - fitted(inst, fit.path.records[k].coeffs);
            EXPECT_NEAR(curve[k].residual, r.norm(), 1e-8);
            if (k) EXPECT_LE(curve[k].residual, curve[k - 1].residual + 1e-12);
        }
        if (b == 4) EXPECT_LT(curve.size(), residual_curve(lars_fit(inst.a, inst.b, 20)).size());
    }
}

TEST(CompareRun, GridAndEquivalences)
{
    const auto inst = random_instance(40, 50, 6);
    CompareGrid grid;
    grid.algos = {Algorithm::blars, Algorithm::tblars};
    grid.bs = {1, 2};
    grid.Ps = {1, 2, 4};
    grid.seeds = {std::nullopt, 1, 2};
    grid.t = 12;
    const auto result = compare_run(inst.a, inst.b, grid);
    EXPECT_EQ(result.runs.size(), 2u * 3u + 2u * 3u * 3u);

    std::map<int, double> blars_precision;
    for (const auto& run : result.runs) {
        EXPECT_GE(run.quality.precision, 0.0);
        EXPECT_LE(run.quality.precision, 1.0);
        if (run.algo == Algorithm::blars) {
            if (run.b == 1) EXPECT_EQ(run.quality.precision, 1.0);
            if (!blars_precision.count(run.b)) blars_precision[run.b] = run.quality.precision;
            EXPECT_EQ(run.quality.precision, blars_precision[run.b]) << run.key();
        }
        if (run.algo == Algorithm::tblars && run.b == 1 && run.P == 1) EXPECT_EQ(run.quality.precision, 1.0);
    }

    std::ostringstream csv;
    write_residual_curves_csv(result, csv);
    EXPECT_EQ(csv.str().substr(0, csv.str().find('\n')), "algo,b,P,n_selected,residual,seed");
    const auto j = precision_json(result);
    EXPECT_TRUE(j.contains("blars/b=2/P=4/seed=none"));
    EXPECT_TRUE(j.contains("tblars/b=1/P=2/seed=2"));
}

TEST(CompareRun, AlgorithmNames)
{
    EXPECT_EQ(parse_algorithm("tblars"), Algorithm::tblars);
    EXPECT_THROW(parse_algorithm("lasso"), ConfigError);
}
