#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <functional>
#include <istream>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "calars/error.hpp"
#include "calars/matrix.hpp"

namespace calars {

struct Entry {
    Index row = 0;
    Index col = 0;
    double value = 0.0;

    friend bool operator==(const Entry&, const Entry&) = default;
};

/// Parsed LIBSVM data: sparse triplets for A (0-based) and the response b.
struct RawDataset {
    Index n_rows = 0;
    Index n_cols = 0;
    std::vector<Entry> entries;  // row-major order, as read
    std::vector<double> response;

    friend bool operator==(const RawDataset&, const RawDataset&) = default;
};

namespace detail {

inline bool parse_double(std::string_view s, double& out)
{
    if (s.empty()) return false;
    if (s.front() == '+') s.remove_prefix(1);
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size();
}

inline bool parse_index(std::string_view s, std::int64_t& out)
{
    if (s.empty()) return false;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size();
}

inline std::string format_double(double v)
{
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

}  // namespace detail

/// Reads `label idx:val idx:val ...` lines; indices are 1-based and strictly
/// increasing per line. Blank lines are skipped. `n_cols` overrides the
/// inferred column count (it must cover every index seen).
inline RawDataset parse_libsvm(std::istream& in, std::optional<Index> n_cols = std::nullopt)
{
    RawDataset out;
    std::string line;
    std::size_t line_no = 0;
    std::int64_t max_idx = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::string_view rest(line);
        auto next_token = [&rest]() -> std::string_view {
            const auto b = rest.find_first_not_of(" \t");
            if (b == std::string_view::npos) {
                rest = {};
                return {};
            }
            rest.remove_prefix(b);
            const auto e = rest.find_first_of(" \t");
            const auto tok = rest.substr(0, e);
            rest.remove_prefix(e == std::string_view::npos ? rest.size() : e);
            return tok;
        };

        const auto label_tok = next_token();
        if (label_tok.empty()) continue;
        double label = 0.0;
        if (!detail::parse_double(label_tok, label))
            throw ParseError(line_no, "bad label '" + std::string(label_tok) + "'");
        const auto row = static_cast<Index>(out.response.size());
        out.response.push_back(label);

        std::int64_t prev = 0;
        for (auto tok = next_token(); !tok.empty(); tok = next_token()) {
            const auto colon = tok.find(':');
            if (colon == std::string_view::npos)
                throw ParseError(line_no, "malformed token '" + std::string(tok) + "'");
            std::int64_t idx = 0;
            double val = 0.0;
            if (!detail::parse_index(tok.substr(0, colon), idx) || idx < 1)
                throw ParseError(line_no, "bad index in '" + std::string(tok) + "'");
            if (!detail::parse_double(tok.substr(colon + 1), val))
                throw ParseError(line_no, "non-numeric value in '" + std::string(tok) + "'");
            if (idx <= prev) throw ParseError(line_no, "indices not strictly increasing at '" + std::string(tok) + "'");
            if (idx > std::numeric_limits<Index>::max()) throw ParseError(line_no, "index too large");
            prev = idx;
            max_idx = std::max(max_idx, idx);
            out.entries.push_back({row, static_cast<Index>(idx - 1), val});
        }
    }
    if (out.response.empty()) throw ParseError(0, "no samples");
    out.n_rows = static_cast<Index>(out.response.size());
    if (n_cols) {
        if (*n_cols < max_idx)
            throw ParseError(0, "column override " + std::to_string(*n_cols) + " is below max index " +
                                    std::to_string(max_idx));
        out.n_cols = *n_cols;
    } else {
        out.n_cols = static_cast<Index>(max_idx);
    }
    if (out.n_cols < 1) throw ParseError(0, "no features");
    return out;
}

inline void serialize_libsvm(const RawDataset& data, std::ostream& out)
{
    std::size_t k = 0;
    for (Index r = 0; r < data.n_rows; ++r) {
        out << detail::format_double(data.response[static_cast<std::size_t>(r)]);
        for (; k < data.entries.size() && data.entries[k].row == r; ++k)
            out << ' ' << (data.entries[k].col + 1) << ':' << detail::format_double(data.entries[k].value);
        out << '\n';
    }
}

/// Column-normalized design matrix. `original_norms[j]` is the ℓ2 norm column
/// j had before scaling; `source_columns[j]` is its index in the raw data
/// (they differ only when zero columns were dropped).
struct DataMatrix {
    ColumnMatrix matrix;
    bool column_norms_applied = false;
    std::vector<double> original_norms;
    std::vector<Index> source_columns;
    std::vector<Index> dropped_columns;

    Index rows() const noexcept { return matrix.rows(); }
    Index cols() const noexcept { return matrix.cols(); }
    ColumnView column(Index j) const { return matrix.column(j); }
};

struct NormalizeOptions {
    bool drop_zero_columns = false;
    /// Store dense when the fill ratio is at least this; 0 forces dense, > 1 forces sparse.
    double dense_threshold = 0.25;
};

/// Scales every column of the raw data to unit ℓ2 norm. Explicit zeros are dropped.
inline DataMatrix normalize_columns(const RawDataset& data, const NormalizeOptions& opts = {})
{
    const Index m = data.n_rows;
    const Index n = data.n_cols;
    std::vector<std::vector<std::pair<Index, double>>> cols(static_cast<std::size_t>(n));
    for (const auto& e : data.entries) {
        if (e.row < 0 || e.row >= m || e.col < 0 || e.col >= n) throw DataError("entry index out of range");
        if (e.value != 0.0) cols[static_cast<std::size_t>(e.col)].emplace_back(e.row, e.value);
    }

    DataMatrix out;
    std::size_t nnz = 0;
    for (Index j = 0; j < n; ++j) {
        auto& c = cols[static_cast<std::size_t>(j)];
        std::sort(c.begin(), c.end());
        for (std::size_t k = 1; k < c.size(); ++k)
            if (c[k].first == c[k - 1].first) throw DataError("duplicate entry in column " + std::to_string(j));
        double ss = 0.0;
        for (const auto& [r, v] : c) ss += v * v;
        const double norm = std::sqrt(ss);
        if (!(norm > 0.0) || !std::isfinite(norm)) {
            if (!opts.drop_zero_columns)
                throw DataError("column " + std::to_string(j) + " has zero norm; columns must be nonzero");
            out.dropped_columns.push_back(j);
            c.clear();
            continue;
        }
        for (auto& [r, v] : c) v /= norm;
        out.original_norms.push_back(norm);
        out.source_columns.push_back(j);
        nnz += c.size();
    }

    const auto kept = static_cast<Index>(out.source_columns.size());
    if (kept == 0) throw DataError("no nonzero columns");
    const double fill = static_cast<double>(nnz) / (static_cast<double>(m) * static_cast<double>(kept));
    if (fill >= opts.dense_threshold) {
        std::vector<double> values(static_cast<std::size_t>(m) * static_cast<std::size_t>(kept), 0.0);
        for (Index k = 0; k < kept; ++k)
            for (const auto& [r, v] : cols[static_cast<std::size_t>(out.source_columns[static_cast<std::size_t>(k)])])
                values[static_cast<std::size_t>(k) * static_cast<std::size_t>(m) + static_cast<std::size_t>(r)] = v;
        out.matrix = ColumnMatrix::dense(m, kept, std::move(values));
    } else {
        std::vector<std::size_t> ptr{0};
        std::vector<Index> idx;
        std::vector<double> val;
        idx.reserve(nnz);
        val.reserve(nnz);
        for (Index src : out.source_columns) {
            for (const auto& [r, v] : cols[static_cast<std::size_t>(src)]) {
                idx.push_back(r);
                val.push_back(v);
            }
            ptr.push_back(idx.size());
        }
        out.matrix = ColumnMatrix::sparse(m, kept, std::move(ptr), std::move(idx), std::move(val));
    }
    out.column_norms_applied = true;
    return out;
}

/// Wraps an already-normalized dense column-major matrix (used by tests and generators).
inline DataMatrix make_normalized_dense(Index m, Index n, std::vector<double> values)
{
    DataMatrix out;
    for (Index j = 0; j < n; ++j) {
        double ss = 0.0;
        const auto base = static_cast<std::size_t>(j) * static_cast<std::size_t>(m);
        for (Index i = 0; i < m; ++i) ss += values[base + static_cast<std::size_t>(i)] * values[base + static_cast<std::size_t>(i)];
        const double norm = std::sqrt(ss);
        if (!(norm > 0.0)) throw DataError("column " + std::to_string(j) + " has zero norm; columns must be nonzero");
        for (Index i = 0; i < m; ++i) values[base + static_cast<std::size_t>(i)] /= norm;
        out.original_norms.push_back(norm);
        out.source_columns.push_back(j);
    }
    out.matrix = ColumnMatrix::dense(m, n, std::move(values));
    out.column_norms_applied = true;
    return out;
}

enum class PartitionKind { row, column };

struct PartitionPlan {
    PartitionKind kind = PartitionKind::row;
    int P = 1;
    std::vector<int> assignment;        // index -> rank
    std::vector<std::size_t> per_rank_nnz;  // rows per rank for a row plan without a matrix
    std::vector<Index> order;           // column processing order (column plans)
    std::optional<std::uint64_t> seed;

    /// Indices owned by `rank`, ascending.
    std::vector<Index> owned(int rank) const
    {
        std::vector<Index> out;
        for (std::size_t i = 0; i < assignment.size(); ++i)
            if (assignment[i] == rank) out.push_back(static_cast<Index>(i));
        return out;
    }

    /// [begin, end) of each rank's row block (row plans only).
    std::vector<std::pair<Index, Index>> ranges() const
    {
        std::vector<std::pair<Index, Index>> out(static_cast<std::size_t>(P), {0, 0});
        std::vector<bool> seen(static_cast<std::size_t>(P), false);
        for (std::size_t i = 0; i < assignment.size(); ++i) {
            auto& [b, e] = out[static_cast<std::size_t>(assignment[i])];
            if (!seen[static_cast<std::size_t>(assignment[i])]) {
                b = static_cast<Index>(i);
                seen[static_cast<std::size_t>(assignment[i])] = true;
            }
            e = static_cast<Index>(i) + 1;
        }
        return out;
    }

    double imbalance_ratio() const
    {
        const auto [lo, hi] = std::minmax_element(per_rank_nnz.begin(), per_rank_nnz.end());
        if (*lo == 0) return *hi == 0 ? 1.0 : std::numeric_limits<double>::infinity();
        return static_cast<double>(*hi) / static_cast<double>(*lo);
    }
};

/// Contiguous row blocks; the first m mod P ranks get one extra row.
inline PartitionPlan partition_rows(Index m, int P)
{
    if (P < 1) throw ConfigError("partition_rows: P must be >= 1");
    if (P > m) throw ConfigError("partition_rows: P=" + std::to_string(P) + " exceeds m=" + std::to_string(m));
    PartitionPlan plan;
    plan.kind = PartitionKind::row;
    plan.P = P;
    plan.assignment.resize(static_cast<std::size_t>(m));
    plan.per_rank_nnz.assign(static_cast<std::size_t>(P), 0);
    const Index base = m / P;
    const Index extra = m % P;
    Index row = 0;
    for (int r = 0; r < P; ++r) {
        const Index size = base + (r < extra ? 1 : 0);
        for (Index i = 0; i < size; ++i) plan.assignment[static_cast<std::size_t>(row++)] = r;
        plan.per_rank_nnz[static_cast<std::size_t>(r)] = static_cast<std::size_t>(size);
    }
    return plan;
}

/// Row plan whose loads count the nonzeros each rank holds.
inline PartitionPlan partition_rows(const DataMatrix& a, int P)
{
    auto plan = partition_rows(a.rows(), P);
    std::fill(plan.per_rank_nnz.begin(), plan.per_rank_nnz.end(), 0);
    for (Index j = 0; j < a.cols(); ++j)
        a.column(j).for_each([&](Index i, double v) {
            if (v != 0.0) ++plan.per_rank_nnz[static_cast<std::size_t>(plan.assignment[static_cast<std::size_t>(i)])];
        });
    return plan;
}

/// Balances nonzeros across ranks by list scheduling: each column goes to the
/// least-loaded rank (lowest rank on ties). Without a seed the columns are
/// processed by nnz descending, index ascending (LPT). With a seed they are
/// processed in a seeded random order, giving a random but still balanced plan.
inline PartitionPlan partition_columns_balanced(const DataMatrix& a, int P,
                                                std::optional<std::uint64_t> seed = std::nullopt)
{
    const Index n = a.cols();
    if (P < 1) throw ConfigError("partition_columns_balanced: P must be >= 1");
    if (n < P) throw ConfigError("partition_columns_balanced: n=" + std::to_string(n) + " < P=" + std::to_string(P));

    std::vector<std::size_t> nnz(static_cast<std::size_t>(n));
    for (Index j = 0; j < n; ++j) nnz[static_cast<std::size_t>(j)] = a.matrix.nnz(j);

    PartitionPlan plan;
    plan.kind = PartitionKind::column;
    plan.P = P;
    plan.seed = seed;
    plan.order.resize(static_cast<std::size_t>(n));
    std::iota(plan.order.begin(), plan.order.end(), Index{0});
    if (seed) {
        std::mt19937_64 rng(*seed);
        std::shuffle(plan.order.begin(), plan.order.end(), rng);
    } else {
        std::stable_sort(plan.order.begin(), plan.order.end(), [&](Index x, Index y) {
            return nnz[static_cast<std::size_t>(x)] > nnz[static_cast<std::size_t>(y)];
        });
    }

    // min-heap on (load, rank)
    using Slot = std::pair<std::size_t, int>;
    std::vector<Slot> heap;
    for (int r = 0; r < P; ++r) heap.emplace_back(0, r);
    const auto cmp = std::greater<Slot>{};
    std::make_heap(heap.begin(), heap.end(), cmp);

    plan.assignment.assign(static_cast<std::size_t>(n), 0);
    plan.per_rank_nnz.assign(static_cast<std::size_t>(P), 0);
    for (Index j : plan.order) {
        std::pop_heap(heap.begin(), heap.end(), cmp);
        auto& [load, rank] = heap.back();
        plan.assignment[static_cast<std::size_t>(j)] = rank;
        load += nnz[static_cast<std::size_t>(j)];
        plan.per_rank_nnz[static_cast<std::size_t>(rank)] = load;
        std::push_heap(heap.begin(), heap.end(), cmp);
    }
    return plan;
}

struct Histogram {
    double lo = 0.0;
    double hi = 0.0;
    std::vector<std::size_t> counts;

    std::size_t total() const { return std::accumulate(counts.begin(), counts.end(), std::size_t{0}); }
};

/// Equal-width histogram of per-column nonzero counts over [min, max]; the last bin is closed.
inline Histogram nnz_histogram(const DataMatrix& a, int bins = 128)
{
    if (bins < 1) throw ConfigError("nnz_histogram: bins must be >= 1");
    Histogram h;
    h.counts.assign(static_cast<std::size_t>(bins), 0);
    if (a.cols() == 0) return h;
    std::vector<double> nnz(static_cast<std::size_t>(a.cols()));
    for (Index j = 0; j < a.cols(); ++j) nnz[static_cast<std::size_t>(j)] = static_cast<double>(a.matrix.nnz(j));
    const auto [lo, hi] = std::minmax_element(nnz.begin(), nnz.end());
    h.lo = *lo;
    h.hi = *hi;
    const double width = (h.hi - h.lo) / bins;
    for (double v : nnz) {
        std::size_t bin = 0;
        if (width > 0.0) bin = std::min(static_cast<std::size_t>((v - h.lo) / width), static_cast<std::size_t>(bins - 1));
        ++h.counts[bin];
    }
    return h;
}

inline nlohmann::json to_json(const Histogram& h)
{
    return {{"min_nnz", h.lo}, {"max_nnz", h.hi}, {"bins", h.counts.size()}, {"counts", h.counts}};
}

inline nlohmann::json to_json(const PartitionPlan& p)
{
    nlohmann::json j;
    j["kind"] = p.kind == PartitionKind::row ? "row" : "column";
    j["P"] = p.P;
    j["per_rank_load"] = p.per_rank_nnz;
    j["imbalance_ratio"] = p.imbalance_ratio();
    j["seed"] = p.seed ? nlohmann::json(*p.seed) : nlohmann::json(nullptr);
    j["assignment"] = p.assignment;
    return j;
}

}  // namespace calars
