#pragma once

#include <charconv>
#include <cstdint>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "calars/comm.hpp"
#include "calars/matrix.hpp"

namespace calars {

/// One solver iteration: the step along the current direction and the
/// columns that joined the active set at its end.
struct PathRecord {
    int iteration = 0;
    std::vector<Index> added;
    double gamma = 0.0;
    double c_level = 0.0;  // correlation level the step started from
    double h = 0.0;
    std::vector<std::pair<Index, double>> coeffs;  // x over the active set, after the step
    double residual_norm = 0.0;                    // ‖b − y‖₂ after the step
    Clock comm;                                    // root's critical-path clock after the iteration

    friend bool operator==(const PathRecord&, const PathRecord&) = default;
};

struct SolutionPath {
    std::vector<Index> initial;  // active set before the first step
    std::vector<PathRecord> records;

    /// Active set in order of entry.
    std::vector<Index> selected() const
    {
        std::vector<Index> out = initial;
        for (const auto& r : records) out.insert(out.end(), r.added.begin(), r.added.end());
        return out;
    }

    std::vector<std::pair<Index, double>> final_coeffs() const
    {
        return records.empty() ? std::vector<std::pair<Index, double>>{} : records.back().coeffs;
    }

    friend bool operator==(const SolutionPath&, const SolutionPath&) = default;
};

inline std::string format_number(double v)
{
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

/// Columns: k, added_indices (';'-separated), gamma, c_level, residual_norm.
/// Numbers use the shortest round-trip representation.
inline void write_path_csv(const SolutionPath& path, std::ostream& out)
{
    out << "k,added_indices,gamma,c_level,residual_norm\n";
    for (const auto& r : path.records) {
        out << r.iteration << ',';
        for (std::size_t i = 0; i < r.added.size(); ++i) out << (i ? ";" : "") << r.added[i];
        out << ',' << format_number(r.gamma) << ',' << format_number(r.c_level) << ','
            << format_number(r.residual_norm) << '\n';
    }
}

inline nlohmann::json iteration_clocks_json(const SolutionPath& path)
{
    nlohmann::json out = nlohmann::json::array();
    for (const auto& r : path.records) out.push_back({{"k", r.iteration}, {"messages", r.comm.messages}, {"words", r.comm.words}});
    return out;
}

/// A solver run: the path as seen by rank 0 plus merged counters.
struct FitResult {
    SolutionPath path;
    CommStats stats;
    std::vector<double> rank_idle_seconds;
    std::vector<std::uint64_t> rank_flops;
};

}  // namespace calars
