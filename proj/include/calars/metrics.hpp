#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "calars/blars.hpp"
#include "calars/comm.hpp"
#include "calars/dataset.hpp"
#include "calars/error.hpp"
#include "calars/lars.hpp"
#include "calars/path.hpp"
#include "calars/tblars.hpp"

namespace calars {

/// |selected ∩ truth| / |selected|.
inline double precision(std::span<const Index> selected, std::span<const Index> truth)
{
    if (selected.empty()) throw ConfigError("precision: selected set is empty");
    const std::unordered_set<Index> t(truth.begin(), truth.end());
    const std::unordered_set<Index> s(selected.begin(), selected.end());
    std::size_t hit = 0;
    for (Index j : s) hit += t.count(j);
    return static_cast<double>(hit) / static_cast<double>(s.size());
}

/// precision of the first k entries of each list, for k = 1..min(|selected|, |truth|).
inline std::vector<double> prefix_precision(std::span<const Index> selected, std::span<const Index> truth)
{
    const std::size_t n = std::min(selected.size(), truth.size());
    std::vector<double> out;
    out.reserve(n);
    std::unordered_set<Index> s, t;
    std::size_t hit = 0;
    for (std::size_t k = 0; k < n; ++k) {
        if (s.insert(selected[k]).second) hit += t.count(selected[k]);
        if (t.insert(truth[k]).second) hit += s.count(truth[k]);
        out.push_back(static_cast<double>(hit) / static_cast<double>(s.size()));
    }
    return out;
}

struct CurvePoint {
    std::size_t n_selected = 0;
    double residual = 0.0;

    friend bool operator==(const CurvePoint&, const CurvePoint&) = default;
};

/// One point per path record: cumulative columns selected and ‖b − y‖₂.
inline std::vector<CurvePoint> residual_curve(const SolutionPath& path)
{
    std::vector<CurvePoint> out;
    std::size_t count = path.initial.size();
    for (const auto& r : path.records) {
        count += r.added.size();
        out.push_back({count, r.residual_norm});
    }
    return out;
}

struct QualityReport {
    std::vector<CurvePoint> residual_curve;
    double precision = 0.0;
    std::vector<double> prefix_precision;
    std::vector<Index> selected;
    std::vector<Index> ground_truth;
};

inline QualityReport quality_report(const SolutionPath& path, std::span<const Index> truth)
{
    QualityReport q;
    q.residual_curve = residual_curve(path);
    q.selected = path.selected();
    q.ground_truth.assign(truth.begin(), truth.end());
    q.precision = precision(q.selected, truth);
    q.prefix_precision = prefix_precision(q.selected, truth);
    return q;
}

enum class Algorithm { lars, blars, tblars };

inline std::string to_string(Algorithm a)
{
    switch (a) {
    case Algorithm::lars: return "lars";
    case Algorithm::blars: return "blars";
    case Algorithm::tblars: return "tblars";
    }
    return "?";
}

inline Algorithm parse_algorithm(std::string_view s)
{
    if (s == "lars") return Algorithm::lars;
    if (s == "blars") return Algorithm::blars;
    if (s == "tblars") return Algorithm::tblars;
    throw ConfigError("unknown algorithm '" + std::string(s) + "' (expected lars, blars or tblars)");
}

struct CompareGrid {
    std::vector<Algorithm> algos;
    std::vector<int> bs{1};
    std::vector<int> Ps{1};
    std::vector<std::optional<std::uint64_t>> seeds{std::nullopt};  // column plans for tblars
    int t = 1;
};

struct RunReport {
    Algorithm algo = Algorithm::blars;
    int b = 1;
    int P = 1;
    std::optional<std::uint64_t> seed;
    QualityReport quality;
    CommStats stats;

    std::string key() const
    {
        return to_string(algo) + "/b=" + std::to_string(b) + "/P=" + std::to_string(P) +
               "/seed=" + (seed ? std::to_string(*seed) : std::string("none"));
    }
};

struct CompareResult {
    SolutionPath ground_truth;
    std::vector<RunReport> runs;
};

/// Runs one solver configuration. `lars` with P > 1 is bLARS with b = 1.
inline FitResult run_solver(Algorithm algo, const DataMatrix& a, std::span<const double> b, int block, int P, int t,
                            std::optional<std::uint64_t> seed, const SpmdOptions& opts = {})
{
    switch (algo) {
    case Algorithm::lars:
        if (P == 1) return FitResult{lars_fit(a, b, t), {}, {0.0}, {0}};
        return blars_fit(a, b, BlarsConfig{1, t, P}, opts);
    case Algorithm::blars: return blars_fit(a, b, BlarsConfig{block, t, P}, opts);
    case Algorithm::tblars: {
        auto r = tblars_fit(a, b, TblarsConfig{block, t, P, seed}, opts);
        return static_cast<FitResult&&>(std::move(r));
    }
    }
    throw ConfigError("unknown algorithm");
}

/// Sequential LARS as ground truth, then every (algo, b, P, seed) point of the
/// grid. Seeds only vary tblars; the other algorithms run once per (b, P).
inline CompareResult compare_run(const DataMatrix& a, std::span<const double> b, const CompareGrid& grid)
{
    CompareResult out;
    out.ground_truth = lars_fit(a, b, grid.t);
    const auto truth = out.ground_truth.selected();
    for (Algorithm algo : grid.algos)
        for (int block : algo == Algorithm::lars ? std::vector<int>{1} : grid.bs)
            for (int P : grid.Ps) {
                const auto seeds =
                    algo == Algorithm::tblars ? grid.seeds : std::vector<std::optional<std::uint64_t>>{std::nullopt};
                for (const auto& seed : seeds) {
                    auto fit = run_solver(algo, a, b, block, P, grid.t, seed);
                    RunReport rep;
                    rep.algo = algo;
                    rep.b = block;
                    rep.P = P;
                    rep.seed = seed;
                    rep.quality = quality_report(fit.path, truth);
                    rep.stats = std::move(fit.stats);
                    out.runs.push_back(std::move(rep));
                }
            }
    return out;
}

/// Columns: algo, b, P, n_selected, residual, seed.
inline void write_residual_curves_csv(const CompareResult& r, std::ostream& out)
{
    out << "algo,b,P,n_selected,residual,seed\n";
    const auto row = [&](const std::string& algo, int b, int P, const CurvePoint& p, const std::string& seed) {
        out << algo << ',' << b << ',' << P << ',' << p.n_selected << ',' << format_number(p.residual) << ',' << seed
            << '\n';
    };
    for (const auto& p : residual_curve(r.ground_truth)) row("lars_reference", 1, 1, p, "");
    for (const auto& run : r.runs)
        for (const auto& p : run.quality.residual_curve)
            row(to_string(run.algo), run.b, run.P, p, run.seed ? std::to_string(*run.seed) : "");
}

/// Keyed by "algo/b=../P=../seed=..": final-set precision, prefix curve, and counters.
inline nlohmann::json precision_json(const CompareResult& r)
{
    nlohmann::json out = nlohmann::json::object();
    for (const auto& run : r.runs)
        out[run.key()] = {{"precision", run.quality.precision},
                          {"prefix_precision", run.quality.prefix_precision},
                          {"selected", run.quality.selected},
                          {"messages", run.stats.messages},
                          {"words", run.stats.words}};
    return out;
}

}  // namespace calars
