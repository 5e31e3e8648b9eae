#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "calars/dataset.hpp"
#include "calars/error.hpp"
#include "calars/linalg.hpp"
#include "calars/path.hpp"

namespace calars {

/// Smallest positive γ at which inactive column j ties the active level:
/// c(1 − γh) = |c_j − γa_j|. Non-positive and non-finite candidates are
/// discarded; +∞ means the column never catches up.
inline double min_positive_step(double c_level, double h, double c_j, double a_j)
{
    double best = std::numeric_limits<double>::infinity();
    const auto consider = [&best](double num, double den) {
        const double g = num / den;
        if (std::isfinite(g) && g > 0.0) best = std::min(best, g);
    };
    consider(c_level - c_j, c_level * h - a_j);
    consider(c_level + c_j, c_level * h + a_j);
    return best;
}

/// Membership tolerance for "equal to the correlation level".
inline double tol_eq(double c_level) { return 1e-10 * (1.0 + c_level); }

struct LarsState {
    std::vector<double> y;
    std::vector<double> r;
    std::vector<double> c;
    double c_level = 0.0;
    std::vector<Index> active;
    std::vector<char> in_active;
    LowerTriangular factor;
    std::vector<double> x;  // coefficients, aligned with `active`
    int k = 0;
};

/// Moves the correlations along a step γ of a direction u with a = Aᵀu:
/// active entries scale by (1 − γh), inactive ones lose γ·a_j.
inline LarsState update_correlations(LarsState state, double gamma, std::span<const double> a, double h)
{
    const double shrink = 1.0 - gamma * h;
    for (std::size_t j = 0; j < state.c.size(); ++j) {
        if (state.in_active[j])
            state.c[j] *= shrink;
        else
            state.c[j] -= gamma * a[j];
    }
    state.c_level *= shrink;
    return state;
}

namespace detail {

inline void check_target(const DataMatrix& a, std::span<const double> b, int t)
{
    if (static_cast<Index>(b.size()) != a.rows()) throw ConfigError("response length does not match row count");
    if (t < 1 || t > std::min(a.rows(), a.cols()))
        throw ConfigError("t=" + std::to_string(t) + " is outside [1, min(m, n)=" +
                          std::to_string(std::min(a.rows(), a.cols())) + "]");
}

inline std::vector<double> cross_gram(const DataMatrix& a, std::span<const Index> active, Index j)
{
    const auto cj = a.column(j);
    std::vector<double> cross(active.size());
    for (std::size_t i = 0; i < active.size(); ++i) cross[i] = dot(a.column(active[i]), cj);
    return cross;
}

inline double norm2(std::span<const double> v)
{
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

}  // namespace detail

struct NoObserver {
    void operator()(const LarsState&, const PathRecord*) const noexcept {}
};

/// Sequential least angle regression until t columns are active.
///
/// The initial active set is every column whose |c| ties the maximum. Each
/// iteration moves y along the equiangular direction of the signed active
/// columns by the smallest step at which an inactive column ties, then
/// admits that column (lowest index on ties). Once every column is active a
/// final step of 1/h lands on the least-squares fit. `observer(state,
/// record)` is called after initialization (record == nullptr) and after
/// every iteration.
template <class Observer = NoObserver>
SolutionPath lars_fit(const DataMatrix& a, std::span<const double> b, int t, Observer&& observer = {})
{
    detail::check_target(a, b, t);
    const Index m = a.rows();
    const Index n = a.cols();

    LarsState st;
    st.y.assign(static_cast<std::size_t>(m), 0.0);
    st.r.assign(b.begin(), b.end());
    st.c.resize(static_cast<std::size_t>(n));
    st.in_active.assign(static_cast<std::size_t>(n), 0);
    for (Index j = 0; j < n; ++j) st.c[static_cast<std::size_t>(j)] = a.column(j).dot(st.r);
    for (double cj : st.c) st.c_level = std::max(st.c_level, std::abs(cj));

    SolutionPath path;
    if (!(st.c_level > 0.0)) return path;

    const double tol = tol_eq(st.c_level);
    for (Index j = 0; j < n && static_cast<int>(st.active.size()) < t; ++j) {
        if (std::abs(st.c[static_cast<std::size_t>(j)]) < st.c_level - tol) continue;
        st.factor = cholesky_append_one(std::move(st.factor), detail::cross_gram(a, st.active, j),
                                        dot(a.column(j), a.column(j)));
        st.active.push_back(j);
        st.in_active[static_cast<std::size_t>(j)] = 1;
        st.x.push_back(0.0);
    }
    path.initial = st.active;
    observer(std::as_const(st), static_cast<const PathRecord*>(nullptr));

    bool landed = false;
    std::vector<double> s, ac(static_cast<std::size_t>(n));
    for (;;) {
        const auto size = static_cast<Index>(st.active.size());
        if (size == n ? landed : size >= t) break;

        s.resize(st.active.size());
        for (std::size_t i = 0; i < s.size(); ++i)
            s[i] = sign(st.c[static_cast<std::size_t>(st.active[i])]) * st.c_level;
        const auto dir = direction_from(a.matrix, st.active, st.factor, s);
        for (Index j = 0; j < n; ++j) ac[static_cast<std::size_t>(j)] = a.column(j).dot(dir.u);

        double gamma = std::numeric_limits<double>::infinity();
        Index next = -1;
        for (Index j = 0; j < n; ++j) {
            if (st.in_active[static_cast<std::size_t>(j)]) continue;
            const double g =
                min_positive_step(st.c_level, dir.h, st.c[static_cast<std::size_t>(j)], ac[static_cast<std::size_t>(j)]);
            if (g < gamma) {
                gamma = g;
                next = j;
            }
        }
        const double full = 1.0 / dir.h;
        if (next < 0 || gamma >= full) {
            // Nothing left to catch up before the least-squares point.
            if (next < 0) landed = true;
            gamma = std::min(gamma, full);
        }

        PathRecord rec;
        rec.iteration = st.k;
        rec.gamma = gamma;
        rec.c_level = st.c_level;
        rec.h = dir.h;

        for (std::size_t i = 0; i < st.y.size(); ++i) {
            st.y[i] += gamma * dir.u[i];
            st.r[i] = b[i] - st.y[i];
        }
        for (std::size_t i = 0; i < st.x.size(); ++i) st.x[i] += gamma * dir.w[i];
        st = update_correlations(std::move(st), gamma, ac, dir.h);

        if (next >= 0) {
            st.factor = cholesky_append_one(std::move(st.factor), detail::cross_gram(a, st.active, next),
                                            dot(a.column(next), a.column(next)));
            st.active.push_back(next);
            st.in_active[static_cast<std::size_t>(next)] = 1;
            st.x.push_back(0.0);
            rec.added.push_back(next);
        }
        for (std::size_t i = 0; i < st.active.size(); ++i) rec.coeffs.emplace_back(st.active[i], st.x[i]);
        rec.residual_norm = detail::norm2(st.r);
        ++st.k;
        path.records.push_back(std::move(rec));
        observer(std::as_const(st), &path.records.back());
        if (next < 0) break;
    }
    return path;
}

}  // namespace calars
