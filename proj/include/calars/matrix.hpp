#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "calars/error.hpp"
#include "calars/exact_sum.hpp"

namespace calars {

using Index = std::int32_t;

/// Read-only view of one column: dense when `rows` is empty, otherwise
/// (rows[k], values[k]) pairs with strictly increasing row indices.
struct ColumnView {
    std::span<const Index> rows;
    std::span<const double> values;
    Index length = 0;

    bool dense() const noexcept { return rows.empty() && static_cast<Index>(values.size()) == length; }
    std::size_t nnz() const noexcept { return values.size(); }

    template <class F>
    void for_each(F&& f) const
    {
        if (dense()) {
            for (Index i = 0; i < length; ++i) f(i, values[static_cast<std::size_t>(i)]);
        } else {
            for (std::size_t k = 0; k < values.size(); ++k) f(rows[k], values[k]);
        }
    }

    double dot(std::span<const double> v) const
    {
        double s = 0.0;
        for_each([&](Index i, double a) { s += a * v[static_cast<std::size_t>(i)]; });
        return s;
    }

    /// Adds each product a_i * v_i to `acc` (no rounding of the running sum).
    void dot_exact(std::span<const double> v, ExactAccumulator& acc) const
    {
        for_each([&](Index i, double a) { acc.add(a * v[static_cast<std::size_t>(i)]); });
    }

    void axpy(double alpha, std::span<double> out) const
    {
        for_each([&](Index i, double a) { out[static_cast<std::size_t>(i)] += alpha * a; });
    }

    std::vector<double> to_dense() const
    {
        std::vector<double> out(static_cast<std::size_t>(length), 0.0);
        for_each([&](Index i, double a) { out[static_cast<std::size_t>(i)] = a; });
        return out;
    }
};

/// Calls f(a, b) for every row present in both columns.
template <class F>
void for_each_common(const ColumnView& x, const ColumnView& y, F&& f)
{
    if (x.dense() && y.dense()) {
        for (std::size_t i = 0; i < x.values.size(); ++i) f(x.values[i], y.values[i]);
    } else if (x.dense()) {
        for (std::size_t k = 0; k < y.values.size(); ++k)
            f(x.values[static_cast<std::size_t>(y.rows[k])], y.values[k]);
    } else if (y.dense()) {
        for (std::size_t k = 0; k < x.values.size(); ++k)
            f(x.values[k], y.values[static_cast<std::size_t>(x.rows[k])]);
    } else {
        std::size_t i = 0, j = 0;
        while (i < x.rows.size() && j < y.rows.size()) {
            if (x.rows[i] < y.rows[j]) {
                ++i;
            } else if (y.rows[j] < x.rows[i]) {
                ++j;
            } else {
                f(x.values[i], y.values[j]);
                ++i;
                ++j;
            }
        }
    }
}

inline double dot(const ColumnView& x, const ColumnView& y)
{
    double s = 0.0;
    for_each_common(x, y, [&](double a, double b) { s += a * b; });
    return s;
}

inline void dot_exact(const ColumnView& x, const ColumnView& y, ExactAccumulator& acc)
{
    for_each_common(x, y, [&](double a, double b) { acc.add(a * b); });
}

/// Column-major matrix, either dense or compressed sparse column.
class ColumnMatrix {
public:
    enum class Storage { dense, sparse };

    ColumnMatrix() = default;

    static ColumnMatrix dense(Index rows, Index cols, std::vector<double> values)
    {
        if (values.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols))
            throw DataError("dense matrix: value count does not match shape");
        ColumnMatrix m;
        m.storage_ = Storage::dense;
        m.rows_ = rows;
        m.cols_ = cols;
        m.values_ = std::move(values);
        return m;
    }

    static ColumnMatrix sparse(Index rows, Index cols, std::vector<std::size_t> col_ptr,
                               std::vector<Index> row_idx, std::vector<double> values)
    {
        if (col_ptr.size() != static_cast<std::size_t>(cols) + 1 || row_idx.size() != values.size() ||
            col_ptr.back() != values.size())
            throw DataError("sparse matrix: inconsistent CSC arrays");
        ColumnMatrix m;
        m.storage_ = Storage::sparse;
        m.rows_ = rows;
        m.cols_ = cols;
        m.col_ptr_ = std::move(col_ptr);
        m.row_idx_ = std::move(row_idx);
        m.values_ = std::move(values);
        return m;
    }

    Index rows() const noexcept { return rows_; }
    Index cols() const noexcept { return cols_; }
    Storage storage() const noexcept { return storage_; }
    bool is_dense() const noexcept { return storage_ == Storage::dense; }

    ColumnView column(Index j) const
    {
        const auto uj = static_cast<std::size_t>(j);
        if (is_dense()) {
            const auto m = static_cast<std::size_t>(rows_);
            return {{}, std::span<const double>(values_).subspan(uj * m, m), rows_};
        }
        const std::size_t b = col_ptr_[uj], e = col_ptr_[uj + 1];
        return {std::span<const Index>(row_idx_).subspan(b, e - b),
                std::span<const double>(values_).subspan(b, e - b), rows_};
    }

    std::size_t nnz(Index j) const
    {
        if (is_dense()) {
            const auto c = column(j);
            return static_cast<std::size_t>(
                std::count_if(c.values.begin(), c.values.end(), [](double v) { return v != 0.0; }));
        }
        return col_ptr_[static_cast<std::size_t>(j) + 1] - col_ptr_[static_cast<std::size_t>(j)];
    }

    std::size_t nnz() const
    {
        std::size_t total = 0;
        for (Index j = 0; j < cols_; ++j) total += nnz(j);
        return total;
    }

    /// Rows [first, last) of every column, re-indexed from zero.
    ColumnMatrix row_block(Index first, Index last) const
    {
        const Index m = last - first;
        if (is_dense()) {
            std::vector<double> out;
            out.reserve(static_cast<std::size_t>(m) * static_cast<std::size_t>(cols_));
            for (Index j = 0; j < cols_; ++j) {
                const auto c = column(j).values;
                out.insert(out.end(), c.begin() + first, c.begin() + last);
            }
            return dense(m, cols_, std::move(out));
        }
        std::vector<std::size_t> ptr{0};
        std::vector<Index> idx;
        std::vector<double> val;
        for (Index j = 0; j < cols_; ++j) {
            const auto c = column(j);
            const auto b = std::lower_bound(c.rows.begin(), c.rows.end(), first);
            const auto e = std::lower_bound(b, c.rows.end(), last);
            for (auto it = b; it != e; ++it) {
                idx.push_back(*it - first);
                val.push_back(c.values[static_cast<std::size_t>(it - c.rows.begin())]);
            }
            ptr.push_back(idx.size());
        }
        return sparse(m, cols_, std::move(ptr), std::move(idx), std::move(val));
    }

    /// The listed columns, in the given order.
    ColumnMatrix select_columns(std::span<const Index> cols) const
    {
        const auto n = static_cast<Index>(cols.size());
        if (is_dense()) {
            std::vector<double> out;
            out.reserve(static_cast<std::size_t>(rows_) * cols.size());
            for (Index j : cols) {
                const auto c = column(j).values;
                out.insert(out.end(), c.begin(), c.end());
            }
            return dense(rows_, n, std::move(out));
        }
        std::vector<std::size_t> ptr{0};
        std::vector<Index> idx;
        std::vector<double> val;
        for (Index j : cols) {
            const auto c = column(j);
            idx.insert(idx.end(), c.rows.begin(), c.rows.end());
            val.insert(val.end(), c.values.begin(), c.values.end());
            ptr.push_back(idx.size());
        }
        return sparse(rows_, n, std::move(ptr), std::move(idx), std::move(val));
    }

    double at(Index i, Index j) const
    {
        const auto c = column(j);
        if (c.dense()) return c.values[static_cast<std::size_t>(i)];
        const auto it = std::lower_bound(c.rows.begin(), c.rows.end(), i);
        if (it == c.rows.end() || *it != i) return 0.0;
        return c.values[static_cast<std::size_t>(it - c.rows.begin())];
    }

private:
    Storage storage_ = Storage::dense;
    Index rows_ = 0;
    Index cols_ = 0;
    std::vector<std::size_t> col_ptr_;
    std::vector<Index> row_idx_;
    std::vector<double> values_;
};

}  // namespace calars
