#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "calars/comm.hpp"
#include "calars/dataset.hpp"
#include "calars/error.hpp"
#include "calars/lars.hpp"
#include "calars/linalg.hpp"
#include "calars/path.hpp"

namespace calars {

/// Which branch of the step-size rule produced γ. `violation_*` branches
/// apply when |c_j| exceeds the current level.
enum class StepCase { same_sign, opposite_sign, violation_reachable, violation_unreachable, violation_opposite };

inline const char* to_string(StepCase k)
{
    switch (k) {
    case StepCase::same_sign: return "same_sign";
    case StepCase::opposite_sign: return "opposite_sign";
    case StepCase::violation_reachable: return "violation_reachable";
    case StepCase::violation_unreachable: return "violation_unreachable";
    case StepCase::violation_opposite: return "violation_opposite";
    }
    return "?";
}

struct StepSize {
    double gamma = 0.0;
    StepCase kind = StepCase::same_sign;
};

/// Step at which column j ties the level, c(1 − γh) = |c_j − γa_j|, for a
/// column that may already exceed the level. γ always lies in [0, 1/h].
inline StepSize step_lars(double c_level, double h, double c_j, double a_j)
{
    const double full = 1.0 / h;
    const auto clamp = [full](double g) { return std::clamp(g, 0.0, full); };
    const bool same = sign(c_j) == sign(a_j);
    const double cj = std::abs(c_j), aj = std::abs(a_j);
    if (c_level >= cj) {
        if (same) return {clamp(std::min(min_positive_step(c_level, h, c_j, a_j), full)), StepCase::same_sign};
        return {clamp((c_level - cj) / (c_level * h + aj)), StepCase::opposite_sign};
    }
    if (same && cj * h <= aj) return {clamp((c_level - cj) / (c_level * h - aj)), StepCase::violation_reachable};
    if (same) return {full, StepCase::violation_unreachable};
    return {0.0, StepCase::violation_opposite};
}

struct MlarsInput {
    std::size_t b = 1;
    std::vector<double> y;
    std::vector<Index> active;      // I0
    std::vector<Index> candidates;  // Iv; entries already active are ignored
    LowerTriangular factor;         // Cholesky factor of the Gram of I0
    std::vector<double> coeffs;     // aligned with `active`; empty means zeros
};

/// One inner iteration of mLARS.
struct MlarsStep {
    double gamma = 0.0;
    double h = 0.0;
    double c_level = 0.0;  // level the step started from
    Index added = -1;
    bool zero_step = false;
    double max_excess = 0.0;  // max over candidates of |c_j| − c_level before the step
    double residual_norm = 0.0;
};

struct MlarsResult {
    std::vector<double> y;
    std::vector<Index> active;  // I
    std::vector<Index> added;   // B, in order of entry
    LowerTriangular factor;
    std::vector<double> coeffs;  // aligned with `active`
    double c_level = 0.0;
    std::vector<MlarsStep> steps;
    std::uint64_t flops = 0;
};

/// Modified LARS restricted to the active set plus `in.candidates`, admitting
/// up to b new columns. A candidate whose correlation already exceeds the
/// level (so no step can make it tie) is admitted at γ = 0; when several
/// are, the one with the largest |c_j| goes first. `column(j)` returns the
/// ColumnView of global column j.
template <class ColumnFn>
MlarsResult mlars(ColumnFn&& column, std::span<const double> response, MlarsInput in)
{
    MlarsResult out;
    const std::size_t m = response.size();
    if (in.y.size() != m) throw ConfigError("mlars: y has the wrong length");
    if (in.coeffs.empty()) in.coeffs.assign(in.active.size(), 0.0);
    if (in.factor.order() != in.active.size() || in.coeffs.size() != in.active.size())
        throw ConfigError("mlars: factor and coefficients must match the active set");

    std::vector<double> r(m);
    for (std::size_t i = 0; i < m; ++i) r[i] = response[i] - in.y[i];

    std::vector<Index> cand;
    {
        std::vector<Index> sorted_active = in.active;
        std::sort(sorted_active.begin(), sorted_active.end());
        cand = in.candidates;
        std::sort(cand.begin(), cand.end());
        cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
        std::erase_if(cand, [&](Index j) { return std::binary_search(sorted_active.begin(), sorted_active.end(), j); });
    }

    std::vector<double> c_act(in.active.size()), c_cand(cand.size());
    for (std::size_t i = 0; i < in.active.size(); ++i) c_act[i] = column(in.active[i]).dot(r);
    for (std::size_t i = 0; i < cand.size(); ++i) {
        const auto col = column(cand[i]);
        c_cand[i] = col.dot(r);
        out.flops += 2 * col.nnz();
    }
    std::vector<char> live(cand.size(), 1);
    std::size_t remaining = cand.size();

    out.y = std::move(in.y);
    out.active = std::move(in.active);
    out.factor = std::move(in.factor);
    out.coeffs = std::move(in.coeffs);
    const std::size_t target = out.active.size() + in.b;

    const auto level_of_active = [&] {
        double lvl = 0.0;
        for (double v : c_act) lvl = std::max(lvl, std::abs(v));
        return lvl;
    };
    const auto admit = [&](std::size_t p) {
        const Index j = cand[p];
        const auto cj = column(j);
        std::vector<double> cross(out.active.size());
        for (std::size_t i = 0; i < out.active.size(); ++i) cross[i] = dot(column(out.active[i]), cj);
        out.factor = cholesky_append_one(std::move(out.factor), cross, dot(cj, cj));
        out.flops += 2 * (out.active.size() + 1) * cj.nnz();
        out.active.push_back(j);
        out.added.push_back(j);
        out.coeffs.push_back(0.0);
        c_act.push_back(c_cand[p]);
        live[p] = 0;
        --remaining;
    };

    if (out.active.empty()) {
        if (remaining == 0) return out;
        std::size_t best = 0;
        for (std::size_t p = 1; p < cand.size(); ++p)
            if (std::abs(c_cand[p]) > std::abs(c_cand[best])) best = p;
        admit(best);
    }
    out.c_level = level_of_active();

    std::vector<double> s, u(m), ac(cand.size());
    while (out.active.size() < target && remaining > 0) {
        s = c_act;
        const auto dw = direction_weights(out.factor, s);
        std::fill(u.begin(), u.end(), 0.0);
        for (std::size_t i = 0; i < out.active.size(); ++i) {
            const auto col = column(out.active[i]);
            col.axpy(dw.w[i], u);
            out.flops += 2 * col.nnz();
        }

        MlarsStep step;
        step.h = dw.h;
        step.c_level = out.c_level;
        step.max_excess = -std::numeric_limits<double>::infinity();
        std::size_t pick = cand.size(), zero_pick = cand.size();
        double best_gamma = std::numeric_limits<double>::infinity();
        for (std::size_t p = 0; p < cand.size(); ++p) {
            if (!live[p]) continue;
            const auto col = column(cand[p]);
            ac[p] = col.dot(u);
            out.flops += 2 * col.nnz();
            step.max_excess = std::max(step.max_excess, std::abs(c_cand[p]) - out.c_level);
            const double g = step_lars(out.c_level, dw.h, c_cand[p], ac[p]).gamma;
            if (g == 0.0) {
                if (zero_pick == cand.size() || std::abs(c_cand[p]) > std::abs(c_cand[zero_pick])) zero_pick = p;
            } else if (g < best_gamma) {
                best_gamma = g;
                pick = p;
            }
        }
        if (zero_pick < cand.size()) {
            // Admit the strongest remaining candidate, not only among the zero steps.
            step.zero_step = true;
            step.gamma = 0.0;
            pick = zero_pick;
            for (std::size_t p = 0; p < cand.size(); ++p)
                if (live[p] && std::abs(c_cand[p]) > std::abs(c_cand[pick])) pick = p;
        } else {
            step.gamma = best_gamma;
        }

        const double gamma = step.gamma;
        if (gamma != 0.0) {
            for (std::size_t i = 0; i < m; ++i) out.y[i] += gamma * u[i];
            for (std::size_t i = 0; i < out.coeffs.size(); ++i) out.coeffs[i] += gamma * dw.w[i];
            const double shrink = 1.0 - gamma * dw.h;
            for (double& v : c_act) v *= shrink;
            for (std::size_t p = 0; p < cand.size(); ++p)
                if (live[p]) c_cand[p] -= gamma * ac[p];
        }
        step.added = cand[pick];
        admit(pick);
        out.c_level = level_of_active();

        double rr = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            const double d = response[i] - out.y[i];
            rr += d * d;
        }
        step.residual_norm = std::sqrt(rr);
        out.steps.push_back(step);
    }
    return out;
}

struct TblarsConfig {
    int b = 1;
    int t = 1;
    int P = 1;
    std::optional<std::uint64_t> partition_seed;  // random balanced column plan when set

    void validate(Index m, Index n) const
    {
        if (b < 1) throw ConfigError("block size b must be >= 1");
        if (P < 1) throw ConfigError("P must be >= 1");
        if (P > n) throw ConfigError("P=" + std::to_string(P) + " exceeds the column count " + std::to_string(n));
        if (t < 1 || t > std::min(m, n)) throw ConfigError("t must lie in [1, min(m, n)]");
    }
};

/// One mLARS competition in the tournament. Level 0 is the leaves, whose
/// input is the rank's whole column set (recorded by count only).
struct TournamentRound {
    int iteration = 0;
    int level = 0;
    int node = 0;  // rank that ran it
    std::size_t in_count = 0;
    std::vector<Index> in_candidates;  // empty at level 0
    std::vector<Index> out_candidates;
    std::uint64_t payload_words = 0;  // words received for this round

    friend bool operator==(const TournamentRound&, const TournamentRound&) = default;
};

inline nlohmann::json to_json(const TournamentRound& r)
{
    return {{"iteration", r.iteration},         {"level", r.level},
            {"node", r.node},                   {"in_count", r.in_count},
            {"in_candidates", r.in_candidates}, {"out_candidates", r.out_candidates},
            {"payload_words", r.payload_words}};
}

inline nlohmann::json to_json(const std::vector<TournamentRound>& trace)
{
    nlohmann::json out = nlohmann::json::array();
    for (const auto& r : trace) out.push_back(to_json(r));
    return out;
}

struct TblarsResult : FitResult {
    PartitionPlan plan;
    std::vector<TournamentRound> trace;  // sorted by (iteration, level, node)
};

namespace detail {

/// Winners travelling up the tree, with their columns as dense m-vectors.
struct Candidates {
    std::vector<Index> indices;
    std::vector<double> columns;  // column-major, m per index
    std::size_t m = 0;
    std::size_t words() const noexcept { return indices.size() * m; }
};

/// What the root sends down after each outer iteration.
struct RootUpdate {
    std::vector<Index> added;
    std::vector<double> columns;  // dense, m per added index
    std::vector<double> y;
    std::vector<std::vector<double>> factor_rows;  // new rows of L
    double c_level = 0.0;

    std::size_t words() const noexcept
    {
        std::size_t w = columns.size() + y.size() + 1;
        for (const auto& row : factor_rows) w += row.size();
        return w;
    }
};

struct TblarsRankOutput {
    std::optional<SolutionPath> path;
    std::vector<TournamentRound> trace;
};

class ColumnStore {
public:
    ColumnStore(const ColumnMatrix& local, std::span<const Index> owned, Index m) : local_(local), m_(m)
    {
        for (std::size_t i = 0; i < owned.size(); ++i) where_[owned[i]] = static_cast<Index>(i);
    }

    ColumnView operator()(Index j) const
    {
        if (auto it = dense_.find(j); it != dense_.end()) return ColumnView{{}, it->second, m_};
        if (auto it = where_.find(j); it != where_.end()) return local_.column(it->second);
        throw ProtocolError("column " + std::to_string(j) + " is not available on this rank");
    }

    void put(Index j, std::span<const double> values) { dense_[j].assign(values.begin(), values.end()); }
    void drop(Index j) { dense_.erase(j); }

    void append_dense(Index j, std::vector<double>& out) const
    {
        const auto v = (*this)(j).to_dense();
        out.insert(out.end(), v.begin(), v.end());
    }

private:
    const ColumnMatrix& local_;
    Index m_;
    std::unordered_map<Index, Index> where_;
    std::unordered_map<Index, std::vector<double>> dense_;
};

inline std::vector<Index> merge_disjoint(std::span<const Index> mine, std::span<const Index> theirs, int level)
{
    std::vector<Index> out(mine.begin(), mine.end());
    for (Index j : theirs) {
        if (std::find(mine.begin(), mine.end(), j) != mine.end())
            throw ProtocolError("duplicate winner " + std::to_string(j) + " from sibling subtrees at level " +
                                std::to_string(level));
        out.push_back(j);
    }
    return out;
}

inline TblarsRankOutput tblars_rank(Communicator& comm, const ColumnMatrix& local, std::span<const Index> owned,
                                    std::span<const double> b, const TblarsConfig& cfg)
{
    const int P = comm.size();
    const int depth = tree_depth(P);
    const auto m = static_cast<Index>(b.size());
    const auto mu = b.size();
    ColumnStore store(local, owned, m);

    TblarsRankOutput out;
    std::vector<double> y(mu, 0.0);
    std::vector<Index> active;
    LowerTriangular factor;
    std::vector<double> coeffs;  // root only
    SolutionPath path;
    const auto t = static_cast<std::size_t>(cfg.t);

    int l = 0;
    while (active.size() < t) {
        const std::size_t b_eff = std::min(static_cast<std::size_t>(cfg.b), t - active.size());
        const auto run = [&](std::vector<Index> cands) {
            MlarsInput in;
            in.b = b_eff;
            in.y = y;
            in.active = active;
            in.candidates = std::move(cands);
            in.factor = factor;
            if (comm.is_root()) in.coeffs = coeffs;
            auto res = mlars(store, b, std::move(in));
            comm.add_flops(res.flops);
            return res;
        };

        std::optional<MlarsResult> root_result;
        std::vector<Index> borrowed;  // dense copies received from children
        std::vector<Index> leaf_cands(owned.begin(), owned.end());
        std::erase_if(leaf_cands, [&](Index j) { return std::find(active.begin(), active.end(), j) != active.end(); });
        auto leaf = run(leaf_cands);

        if (depth == 0) {
            root_result = std::move(leaf);
        } else {
            out.trace.push_back({l, 0, comm.rank(), leaf_cands.size(), {}, leaf.added, 0});
            Candidates payload;
            payload.m = mu;
            payload.indices = leaf.added;
            for (Index j : payload.indices) store.append_dense(j, payload.columns);

            for (int level = 1; level <= depth; ++level) {
                auto got = comm.tree_up(level, payload, "tree_up");
                if (!got) continue;  // sent, bye, or idle: payload moves on unchanged
                for (std::size_t k = 0; k < got->indices.size(); ++k) {
                    store.put(got->indices[k], std::span<const double>(got->columns).subspan(k * mu, mu));
                    borrowed.push_back(got->indices[k]);
                }
                auto merged = merge_disjoint(payload.indices, got->indices, level);
                auto res = run(merged);
                out.trace.push_back({l, level, comm.rank(), merged.size(), merged, res.added, got->words()});
                if (level == depth) {
                    root_result = std::move(res);
                } else {
                    Candidates next;
                    next.m = mu;
                    next.indices = res.added;
                    for (Index j : next.indices) store.append_dense(j, next.columns);
                    payload = std::move(next);
                }
            }
        }

        std::optional<RootUpdate> update_root;
        if (comm.is_root()) {
            auto& res = *root_result;
            RootUpdate up;
            up.added = res.added;
            for (Index j : up.added) store.append_dense(j, up.columns);
            up.y = res.y;
            for (std::size_t i = active.size(); i < res.factor.order(); ++i) {
                const auto row = res.factor.row(i);
                up.factor_rows.emplace_back(row.begin(), row.end());
            }
            up.c_level = res.c_level;

            PathRecord rec;
            rec.iteration = l;
            rec.added = res.added;
            if (!res.steps.empty()) {
                rec.gamma = res.steps.back().gamma;
                rec.c_level = res.steps.back().c_level;
                rec.h = res.steps.back().h;
            } else {
                rec.c_level = res.c_level;  // bootstrap only: nothing moved
            }
            for (std::size_t i = 0; i < res.active.size(); ++i) rec.coeffs.emplace_back(res.active[i], res.coeffs[i]);
            double rr = 0.0;
            for (std::size_t i = 0; i < mu; ++i) rr += (b[i] - res.y[i]) * (b[i] - res.y[i]);
            rec.residual_norm = std::sqrt(rr);
            path.records.push_back(std::move(rec));
            coeffs = std::move(res.coeffs);
            update_root = std::move(up);
        }
        auto update = comm.broadcast(std::move(update_root), "root_bcast");
        for (Index j : borrowed) store.drop(j);

        for (std::size_t k = 0; k < update.added.size(); ++k)
            store.put(update.added[k], std::span<const double>(update.columns).subspan(k * mu, mu));
        active.insert(active.end(), update.added.begin(), update.added.end());
        for (const auto& row : update.factor_rows) factor.push_row(row);
        y = std::move(update.y);
        if (comm.is_root()) path.records.back().comm = comm.clock();
        ++l;
        if (update.added.empty()) break;  // no candidates left anywhere
    }
    if (comm.is_root()) out.path = std::move(path);
    return out;
}

}  // namespace detail

/// Tournament block LARS on column-partitioned data. Each outer iteration,
/// every rank runs mLARS on its own columns, winners compete pairwise up a
/// binary tree, and rank 0 commits up to b columns and broadcasts the new
/// fit and factor rows.
inline TblarsResult tblars_fit(const DataMatrix& a, std::span<const double> b, const TblarsConfig& cfg,
                               const SpmdOptions& opts = {})
{
    if (static_cast<Index>(b.size()) != a.rows()) throw ConfigError("response length does not match row count");
    cfg.validate(a.rows(), a.cols());

    TblarsResult out;
    out.plan = partition_columns_balanced(a, cfg.P, cfg.partition_seed);
    std::vector<std::vector<Index>> owned(static_cast<std::size_t>(cfg.P));
    std::vector<ColumnMatrix> locals;
    for (int r = 0; r < cfg.P; ++r) {
        owned[static_cast<std::size_t>(r)] = out.plan.owned(r);
        locals.push_back(a.matrix.select_columns(owned[static_cast<std::size_t>(r)]));
    }

    auto run = spmd_run(
        cfg.P,
        [&](Communicator& comm) {
            const auto r = static_cast<std::size_t>(comm.rank());
            return detail::tblars_rank(comm, locals[r], owned[r], b, cfg);
        },
        opts);

    out.path = std::move(*run.results[0].path);
    out.stats = std::move(run.stats);
    for (const auto& r : run.ranks) {
        out.rank_idle_seconds.push_back(r.idle_seconds);
        out.rank_flops.push_back(r.flops);
    }
    for (auto& r : run.results) out.trace.insert(out.trace.end(), r.trace.begin(), r.trace.end());
    std::sort(out.trace.begin(), out.trace.end(), [](const TournamentRound& x, const TournamentRound& y) {
        return std::tie(x.iteration, x.level, x.node) < std::tie(y.iteration, y.level, y.node);
    });
    return out;
}

}  // namespace calars
