#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "calars/comm.hpp"
#include "calars/dataset.hpp"
#include "calars/error.hpp"
#include "calars/exact_sum.hpp"
#include "calars/lars.hpp"
#include "calars/linalg.hpp"
#include "calars/path.hpp"

namespace calars {

struct BlarsConfig {
    int b = 1;  // columns admitted per iteration
    int t = 1;  // target active-set size
    int P = 1;

    void validate(Index m, Index n) const
    {
        if (b < 1) throw ConfigError("block size b must be >= 1");
        if (P < 1) throw ConfigError("P must be >= 1");
        if (P > m) throw ConfigError("P=" + std::to_string(P) + " exceeds the row count " + std::to_string(m));
        if (t < 1 || t > std::min(m, n)) throw ConfigError("t must lie in [1, min(m, n)]");
    }
};

namespace phase {
inline constexpr std::string_view corr_reduce = "corr_reduce";
inline constexpr std::string_view active_bcast = "active_bcast";
inline constexpr std::string_view gram_reduce = "gram_reduce";
inline constexpr std::string_view w_bcast = "w_bcast";
inline constexpr std::string_view a_reduce = "a_reduce";
inline constexpr std::string_view gamma_bcast = "gamma_bcast";
inline constexpr std::string_view gram_update_reduce = "gram_update_reduce";
}  // namespace phase

struct BlockSelection {
    double c_level = 0.0;
    std::vector<Index> indices;  // ascending
};

/// c_level = b-th largest |c|; every column with |c_j| ≥ c_level − tol_eq
/// joins, so ties can admit more than b. An all-zero c gives an empty block.
inline BlockSelection initial_block_selection(std::span<const double> c, std::size_t b)
{
    BlockSelection out;
    if (c.empty()) return out;
    out.c_level = select_top_b_abs(c, b).threshold;
    if (!(out.c_level > 0.0)) {
        out.c_level = 0.0;
        return out;
    }
    const double tol = tol_eq(out.c_level);
    for (std::size_t j = 0; j < c.size(); ++j)
        if (std::abs(c[j]) >= out.c_level - tol) out.indices.push_back(static_cast<Index>(j));
    return out;
}

/// What rank 0 sees at initialization (record == nullptr) and after each iteration.
struct BlarsSnapshot {
    std::span<const double> c;
    double c_level = 0.0;
    double selection_level = 0.0;  // level the latest block was selected at
    std::span<const Index> active;
    const PathRecord* record = nullptr;
    const LowerTriangular* factor = nullptr;
};

struct NoBlarsObserver {
    void operator()(const BlarsSnapshot&) const noexcept {}
};

namespace detail {

struct StepBroadcast {
    double gamma = 0.0;
    std::vector<Index> block;
    std::size_t words() const noexcept { return 1 + block.size(); }
};

/// Exact Gram entries between `left` and `right` over the local rows, column-major |left|×|right|.
inline void local_cross(const ColumnMatrix& a, std::span<const Index> left, std::span<const Index> right,
                        std::vector<ExactAccumulator>& out)
{
    for (Index j : right) {
        const auto cj = a.column(j);
        for (Index i : left) {
            ExactAccumulator acc;
            dot_exact(a.column(i), cj, acc);
            out.push_back(std::move(acc));
        }
    }
}

/// Packed upper triangle (row i, cols i..b-1) of the local Gram of `block`.
inline void local_gram_upper(const ColumnMatrix& a, std::span<const Index> block, std::vector<ExactAccumulator>& out)
{
    for (std::size_t i = 0; i < block.size(); ++i)
        for (std::size_t j = i; j < block.size(); ++j) {
            ExactAccumulator acc;
            dot_exact(a.column(block[i]), a.column(block[j]), acc);
            out.push_back(std::move(acc));
        }
}

inline std::vector<double> unpack_upper(std::span<const double> packed, std::size_t b)
{
    std::vector<double> g(b * b);
    std::size_t k = 0;
    for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = i; j < b; ++j) g[i * b + j] = g[j * b + i] = packed[k++];
    return g;
}

inline std::string list_columns(std::span<const Index> cols)
{
    std::string s;
    for (std::size_t i = 0; i < cols.size(); ++i) s += (i ? "," : "") + std::to_string(cols[i]);
    return s;
}

/// One rank of block LARS on its row block `a` (all n columns) and `b_local`.
template <class Observer>
std::optional<SolutionPath> blars_rank(Communicator& comm, const ColumnMatrix& a, std::span<const double> b_local,
                                       const BlarsConfig& cfg, Observer& observer)
{
    const bool root = comm.is_root();
    const Index n = a.cols();
    const auto m_local = static_cast<std::size_t>(a.rows());
    std::size_t local_nnz = 0;
    for (Index j = 0; j < n; ++j) local_nnz += a.column(j).nnz();

    std::vector<double> y(m_local, 0.0);
    std::vector<double> r(b_local.begin(), b_local.end());

    // c = Aᵀr, with ‖r‖² riding along.
    std::vector<ExactAccumulator> acc(static_cast<std::size_t>(n) + 1);
    for (Index j = 0; j < n; ++j) a.column(j).dot_exact(r, acc[static_cast<std::size_t>(j)]);
    for (double v : r) acc.back().add(v * v);
    comm.add_flops(2 * local_nnz + 2 * m_local);
    auto reduced = comm.reduce_sum_exact(std::move(acc), phase::corr_reduce);

    // Root-only state.
    std::vector<double> c;
    double c_level = 0.0;
    double selection_level = 0.0;
    LowerTriangular factor;
    std::vector<double> x;
    SolutionPath path;

    std::optional<std::vector<Index>> initial;
    if (root) {
        c.assign(reduced.begin(), reduced.end() - 1);
        auto sel = initial_block_selection(c, static_cast<std::size_t>(cfg.b));
        if (static_cast<int>(sel.indices.size()) > cfg.t) {
            // Keep the t strongest of the tied columns.
            std::vector<double> tied;
            for (Index j : sel.indices) tied.push_back(c[static_cast<std::size_t>(j)]);
            auto top = select_top_b_abs(tied, static_cast<std::size_t>(cfg.t)).indices;
            std::vector<Index> kept;
            for (Index p : top) kept.push_back(sel.indices[static_cast<std::size_t>(p)]);
            std::sort(kept.begin(), kept.end());
            sel.indices = std::move(kept);
        }
        c_level = selection_level = sel.c_level;
        initial = std::move(sel.indices);
        comm.add_flops(static_cast<std::uint64_t>(n));
    }
    std::vector<Index> active = comm.broadcast(std::move(initial), phase::active_bcast);
    if (active.empty()) return root ? std::optional<SolutionPath>(std::move(path)) : std::nullopt;

    std::vector<char> in_active(static_cast<std::size_t>(n), 0);
    for (Index j : active) in_active[static_cast<std::size_t>(j)] = 1;

    {
        std::vector<ExactAccumulator> g;
        local_gram_upper(a, active, g);
        comm.add_flops(2 * active.size() * active.size() * m_local);
        auto gram = comm.reduce_sum_exact(std::move(g), phase::gram_reduce);
        if (root) {
            try {
                factor = cholesky_append_block({}, {}, unpack_upper(gram, active.size()), active.size());
            } catch (const NumericalError& e) {
                throw NumericalError(std::string(e.what()) + " [columns " + list_columns(active) + "]");
            }
            x.assign(active.size(), 0.0);
            path.initial = active;
            observer(BlarsSnapshot{c, c_level, selection_level, active, nullptr, &factor});
        }
    }

    const auto t = static_cast<std::size_t>(cfg.t);
    const auto nn = static_cast<std::size_t>(n);
    bool landed = false;
    int k = 0;
    std::vector<double> u(m_local);
    while (active.size() == nn ? !landed : active.size() < t) {
        // Direction scalars on the root, then w to everyone.
        std::optional<std::vector<double>> w_root;
        double h = 0.0;
        if (root) {
            std::vector<double> s(active.size());
            for (std::size_t i = 0; i < active.size(); ++i) s[i] = c[static_cast<std::size_t>(active[i])];
            auto dw = direction_weights(factor, s);
            h = dw.h;
            w_root = std::move(dw.w);
            comm.add_flops(2 * active.size() * active.size());
        }
        const auto w = comm.broadcast(std::move(w_root), phase::w_bcast);

        std::fill(u.begin(), u.end(), 0.0);
        for (std::size_t i = 0; i < active.size(); ++i) a.column(active[i]).axpy(w[i], u);

        std::vector<ExactAccumulator> pa(nn);
        for (Index j = 0; j < n; ++j) a.column(j).dot_exact(u, pa[static_cast<std::size_t>(j)]);
        comm.add_flops(2 * local_nnz + 2 * active.size() * m_local);
        const auto av = comm.reduce_sum_exact(std::move(pa), phase::a_reduce);

        std::optional<StepBroadcast> step_root;
        if (root) {
            std::vector<double> gam(nn, std::numeric_limits<double>::infinity());
            std::vector<Index> complement;
            for (Index j = 0; j < n; ++j) {
                if (in_active[static_cast<std::size_t>(j)]) continue;
                complement.push_back(j);
                gam[static_cast<std::size_t>(j)] =
                    min_positive_step(c_level, h, c[static_cast<std::size_t>(j)], av[static_cast<std::size_t>(j)]);
            }
            const std::size_t want = std::min(static_cast<std::size_t>(cfg.b), t > active.size() ? t - active.size() : 0);
            auto sel = select_bottom_b(gam, complement, want);
            StepBroadcast st;
            st.gamma = std::min(sel.indices.empty() ? std::numeric_limits<double>::infinity() : sel.threshold, 1.0 / h);
            st.block = std::move(sel.indices);
            step_root = std::move(st);
            comm.add_flops(8 * complement.size());
        }
        const auto step = comm.broadcast(std::move(step_root), phase::gamma_bcast);

        for (std::size_t i = 0; i < m_local; ++i) {
            y[i] += step.gamma * u[i];
            r[i] = b_local[i] - y[i];
        }

        PathRecord rec;
        if (root) {
            const double shrink = 1.0 - step.gamma * h;
            rec.iteration = k;
            rec.gamma = step.gamma;
            rec.c_level = c_level;
            rec.h = h;
            for (Index j = 0; j < n; ++j) {
                if (in_active[static_cast<std::size_t>(j)])
                    c[static_cast<std::size_t>(j)] *= shrink;
                else
                    c[static_cast<std::size_t>(j)] -= step.gamma * av[static_cast<std::size_t>(j)];
            }
            c_level *= shrink;
            for (std::size_t i = 0; i < x.size(); ++i) x[i] += step.gamma * w[i];
            comm.add_flops(2 * nn);
        }

        // A_Iᵀ A_B, A_Bᵀ A_B and ‖r‖² in one reduction.
        std::vector<ExactAccumulator> g;
        local_cross(a, active, step.block, g);
        local_gram_upper(a, step.block, g);
        g.emplace_back();
        for (double v : r) g.back().add(v * v);
        comm.add_flops(2 * (active.size() + step.block.size()) * step.block.size() * m_local + 2 * m_local);
        const auto gv = comm.reduce_sum_exact(std::move(g), phase::gram_update_reduce);

        if (root && !step.block.empty()) {
            const std::size_t kb = active.size() * step.block.size();
            try {
                factor = cholesky_append_block(std::move(factor), std::span<const double>(gv).first(kb),
                                               unpack_upper(std::span<const double>(gv).subspan(kb, gv.size() - kb - 1),
                                                            step.block.size()),
                                               step.block.size());
            } catch (const NumericalError& e) {
                throw NumericalError(std::string(e.what()) + " [block columns " + list_columns(step.block) + "]");
            }
        }
        for (Index j : step.block) {
            active.push_back(j);
            in_active[static_cast<std::size_t>(j)] = 1;
        }
        if (step.block.empty()) landed = true;

        if (root) {
            x.resize(active.size(), 0.0);
            selection_level = c_level;
            rec.added = step.block;
            for (std::size_t i = 0; i < active.size(); ++i) rec.coeffs.emplace_back(active[i], x[i]);
            rec.residual_norm = std::sqrt(std::max(gv.back(), 0.0));
            rec.comm = comm.clock();
            path.records.push_back(std::move(rec));
            observer(BlarsSnapshot{c, c_level, selection_level, active, &path.records.back(), &factor});
        }
        ++k;
        if (step.block.empty()) break;
    }
    return root ? std::optional<SolutionPath>(std::move(path)) : std::nullopt;
}

}  // namespace detail

/// Block LARS on row-partitioned data: P ranks each hold a contiguous row
/// block; correlations and Gram blocks are reduced to rank 0, which picks the
/// b columns with the smallest step sizes per iteration. All reductions are
/// exact, so the path is bitwise identical for every P.
template <class Observer = NoBlarsObserver>
FitResult blars_fit(const DataMatrix& a, std::span<const double> b, const BlarsConfig& cfg,
                    const SpmdOptions& opts = {}, Observer&& observer = {})
{
    if (static_cast<Index>(b.size()) != a.rows()) throw ConfigError("response length does not match row count");
    cfg.validate(a.rows(), a.cols());
    const auto plan = partition_rows(a.rows(), cfg.P);
    const auto ranges = plan.ranges();

    std::vector<ColumnMatrix> blocks;
    blocks.reserve(ranges.size());
    for (const auto& [lo, hi] : ranges) blocks.push_back(a.matrix.row_block(lo, hi));

    auto run = spmd_run(
        cfg.P,
        [&](Communicator& comm) {
            const auto [lo, hi] = ranges[static_cast<std::size_t>(comm.rank())];
            return detail::blars_rank(comm, blocks[static_cast<std::size_t>(comm.rank())],
                                      b.subspan(static_cast<std::size_t>(lo), static_cast<std::size_t>(hi - lo)), cfg,
                                      observer);
        },
        opts);

    FitResult out;
    out.path = std::move(*run.results[0]);
    out.stats = std::move(run.stats);
    for (const auto& r : run.ranks) {
        out.rank_idle_seconds.push_back(r.idle_seconds);
        out.rank_flops.push_back(r.flops);
    }
    return out;
}

}  // namespace calars
