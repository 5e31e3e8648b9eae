#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "calars/error.hpp"
#include "calars/matrix.hpp"

namespace calars {

/// Lower-triangular factor stored packed by rows: row i holds entries (i, 0..i).
class LowerTriangular {
public:
    LowerTriangular() = default;

    static LowerTriangular identity(std::size_t order)
    {
        LowerTriangular l;
        for (std::size_t i = 0; i < order; ++i) {
            std::vector<double> row(i + 1, 0.0);
            row[i] = 1.0;
            l.push_row(row);
        }
        return l;
    }

    /// Builds from a dense row-major lower triangle; entries above the diagonal are ignored.
    static LowerTriangular from_dense(std::size_t order, std::span<const double> row_major)
    {
        LowerTriangular l;
        for (std::size_t i = 0; i < order; ++i) l.push_row(row_major.subspan(i * order, i + 1));
        return l;
    }

    std::size_t order() const noexcept { return order_; }
    bool empty() const noexcept { return order_ == 0; }

    double operator()(std::size_t i, std::size_t j) const { return j > i ? 0.0 : packed_[i * (i + 1) / 2 + j]; }

    std::span<const double> row(std::size_t i) const
    {
        return std::span<const double>(packed_).subspan(i * (i + 1) / 2, i + 1);
    }

    void push_row(std::span<const double> row)
    {
        if (row.size() != order_ + 1) throw NumericalError("factor row has wrong length");
        packed_.insert(packed_.end(), row.begin(), row.end());
        ++order_;
    }

    /// Solves L x = b in place.
    void forward_solve(std::span<double> b) const
    {
        check_rhs(b.size());
        for (std::size_t i = 0; i < order_; ++i) {
            const auto r = row(i);
            double s = b[i];
            for (std::size_t k = 0; k < i; ++k) s -= r[k] * b[k];
            b[i] = s / r[i];
        }
    }

    /// Solves Lᵀ x = b in place.
    void backward_solve(std::span<double> b) const
    {
        check_rhs(b.size());
        for (std::size_t i = order_; i-- > 0;) {
            const auto r = row(i);
            b[i] /= r[i];
            for (std::size_t k = 0; k < i; ++k) b[k] -= r[k] * b[i];
        }
    }

    /// Throws unless every diagonal entry is strictly positive.
    void check_nonsingular() const
    {
        for (std::size_t i = 0; i < order_; ++i)
            if (!((*this)(i, i) > 0.0))
                throw NumericalError("singular factor: diagonal entry " + std::to_string(i) + " is not positive");
    }

    std::vector<double> to_dense() const
    {
        std::vector<double> out(order_ * order_, 0.0);
        for (std::size_t i = 0; i < order_; ++i)
            for (std::size_t j = 0; j <= i; ++j) out[i * order_ + j] = (*this)(i, j);
        return out;
    }

    friend bool operator==(const LowerTriangular&, const LowerTriangular&) = default;

private:
    void check_rhs(std::size_t n) const
    {
        if (n != order_) throw NumericalError("right-hand side length does not match factor order");
    }

    std::size_t order_ = 0;
    std::vector<double> packed_;
};

/// q with L Lᵀ q = s.
inline std::vector<double> solve_spd_via_factor(const LowerTriangular& l, std::span<const double> s)
{
    l.check_nonsingular();
    std::vector<double> q(s.begin(), s.end());
    l.forward_solve(q);
    l.backward_solve(q);
    return q;
}

/// Rank-deficiency threshold for a new diagonal entry with squared norm `diag_new`.
inline double chol_epsilon(double diag_new) { return 1e-10 * diag_new; }

/// Borders L with one column: ℓ = L⁻¹ cross, ω = sqrt(diag_new − ℓᵀℓ).
/// `cross` holds the Gram entries between the active columns and the new one.
inline LowerTriangular cholesky_append_one(LowerTriangular l, std::span<const double> cross, double diag_new)
{
    std::vector<double> row(cross.begin(), cross.end());
    row.push_back(0.0);
    l.forward_solve(std::span<double>(row).first(l.order()));
    double ss = 0.0;
    for (std::size_t k = 0; k < l.order(); ++k) ss += row[k] * row[k];
    const double schur = diag_new - ss;
    if (!(schur > chol_epsilon(diag_new)))
        throw NumericalError("rank deficiency: new column is numerically dependent on the active set (residual " +
                             std::to_string(schur) + ")");
    row.back() = std::sqrt(schur);
    l.push_row(row);
    return l;
}

/// Borders L with a block of b columns.
///
/// `cross` is the |I|×b block A_Iᵀ A_B in column-major order and `gram_new`
/// is the b×b block A_Bᵀ A_B (row- or column-major, it is symmetric). With
/// H = L⁻¹ cross and Ω the lower Cholesky factor of gram_new − HᵀH, the
/// result is [[L, 0], [Hᵀ, Ω]].
inline LowerTriangular cholesky_append_block(LowerTriangular l, std::span<const double> cross,
                                             std::span<const double> gram_new, std::size_t b)
{
    const std::size_t k = l.order();
    if (cross.size() != k * b || gram_new.size() != b * b)
        throw NumericalError("cholesky_append_block: block shapes do not match");

    std::vector<double> h(cross.begin(), cross.end());  // column j = L⁻¹ cross(:, j)
    for (std::size_t j = 0; j < b; ++j) l.forward_solve(std::span<double>(h).subspan(j * k, k));

    // Schur complement S = gram_new − HᵀH, then S = Ω Ωᵀ row by row.
    std::vector<double> omega(b * b, 0.0);
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double s = gram_new[i * b + j];
            for (std::size_t p = 0; p < k; ++p) s -= h[i * k + p] * h[j * k + p];
            for (std::size_t p = 0; p < j; ++p) s -= omega[i * b + p] * omega[j * b + p];
            if (i == j) {
                if (!(s > chol_epsilon(gram_new[i * b + i])))
                    throw NumericalError("rank deficiency: block column " + std::to_string(i) +
                                         " is numerically dependent (Schur residual " + std::to_string(s) + ")");
                omega[i * b + i] = std::sqrt(s);
            } else {
                omega[i * b + j] = s / omega[j * b + j];
            }
        }
    }

    std::vector<double> row;
    for (std::size_t i = 0; i < b; ++i) {
        row.assign(h.begin() + static_cast<std::ptrdiff_t>(i * k), h.begin() + static_cast<std::ptrdiff_t>((i + 1) * k));
        row.insert(row.end(), omega.begin() + static_cast<std::ptrdiff_t>(i * b),
                   omega.begin() + static_cast<std::ptrdiff_t>(i * b + i + 1));
        l.push_row(row);
    }
    return l;
}

/// Scalars of the direction through the active columns driven by `s`:
/// q = (L Lᵀ)⁻¹ s, h = (sᵀq)^(-1/2), w = q·h.
struct DirectionWeights {
    std::vector<double> q;
    std::vector<double> w;
    double h = 0.0;
};

inline DirectionWeights direction_weights(const LowerTriangular& l, std::span<const double> s)
{
    DirectionWeights d;
    d.q = solve_spd_via_factor(l, s);
    double sq = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) sq += s[i] * d.q[i];
    if (!(sq > 0.0) || !std::isfinite(sq))
        throw NumericalError("numerical breakdown: sᵀ(LLᵀ)⁻¹s = " + std::to_string(sq) + " is not positive");
    d.h = 1.0 / std::sqrt(sq);
    d.w.resize(d.q.size());
    for (std::size_t i = 0; i < d.q.size(); ++i) d.w[i] = d.q[i] * d.h;
    return d;
}

/// Unit vector u = A_I w with A_Iᵀ u = s·h.
struct DirectionBundle {
    std::vector<double> w;
    std::vector<double> u;
    double h = 0.0;
};

/// `column(i)` must return the ColumnView of active column i (position in the active set).
template <class ColumnFn>
DirectionBundle direction_from(ColumnFn&& column, Index rows, const LowerTriangular& l, std::span<const double> s)
{
    auto weights = direction_weights(l, s);
    DirectionBundle d;
    d.h = weights.h;
    d.u.assign(static_cast<std::size_t>(rows), 0.0);
    for (std::size_t i = 0; i < weights.w.size(); ++i) column(i).axpy(weights.w[i], d.u);
    d.w = std::move(weights.w);
    return d;
}

inline DirectionBundle direction_from(const ColumnMatrix& a, std::span<const Index> active, const LowerTriangular& l,
                                      std::span<const double> s)
{
    return direction_from([&](std::size_t i) { return a.column(active[i]); }, a.rows(), l, s);
}

struct Selection {
    double threshold = 0.0;
    std::vector<Index> indices;  // best first
};

/// The b entries that come first under `before` (a strict order), best first.
/// b larger than the candidate count is reduced to the candidate count.
template <class Before>
std::vector<Index> select_first_b(std::vector<Index> candidates, std::size_t b, Before before)
{
    b = std::min(b, candidates.size());
    if (b == 0) return {};
    std::nth_element(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(b - 1), candidates.end(),
                     before);
    candidates.resize(b);
    std::sort(candidates.begin(), candidates.end(), before);
    return candidates;
}

/// max^b |v| and argmax^b |v|, ties broken by lowest index.
inline Selection select_top_b_abs(std::span<const double> v, std::size_t b)
{
    if (v.empty()) throw ConfigError("select_top_b_abs: empty input");
    std::vector<Index> idx(v.size());
    std::iota(idx.begin(), idx.end(), Index{0});
    Selection out;
    out.indices = select_first_b(std::move(idx), b, [&](Index x, Index y) {
        const double ax = std::abs(v[static_cast<std::size_t>(x)]), ay = std::abs(v[static_cast<std::size_t>(y)]);
        return ax > ay || (ax == ay && x < y);
    });
    out.threshold = std::abs(v[static_cast<std::size_t>(out.indices.back())]);
    return out;
}

/// min^b and argmin^b over the listed positions of v, skipping +∞; ties by lowest index.
inline Selection select_bottom_b(std::span<const double> v, std::span<const Index> positions, std::size_t b)
{
    std::vector<Index> finite;
    for (Index j : positions)
        if (v[static_cast<std::size_t>(j)] < std::numeric_limits<double>::infinity()) finite.push_back(j);
    Selection out;
    out.indices = select_first_b(std::move(finite), b, [&](Index x, Index y) {
        const double gx = v[static_cast<std::size_t>(x)], gy = v[static_cast<std::size_t>(y)];
        return gx < gy || (gx == gy && x < y);
    });
    out.threshold = out.indices.empty() ? std::numeric_limits<double>::infinity()
                                        : v[static_cast<std::size_t>(out.indices.back())];
    return out;
}

/// Sum of the k largest absolute entries.
inline double sum_top_k_abs(std::span<const double> v, std::size_t k)
{
    std::vector<double> a(v.size());
    std::transform(v.begin(), v.end(), a.begin(), [](double x) { return std::abs(x); });
    k = std::min(k, a.size());
    std::partial_sort(a.begin(), a.begin() + static_cast<std::ptrdiff_t>(k), a.end(), std::greater<>{});
    return std::accumulate(a.begin(), a.begin() + static_cast<std::ptrdiff_t>(k), 0.0);
}

inline double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

}  // namespace calars
