#pragma once

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "calars/calars.hpp"

namespace calars::cli {

inline constexpr int manifest_schema_version = 1;
inline constexpr const char* tool_version = "1.0.0";

inline std::string sha256_hex(const std::string& bytes)
{
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw Error("sha256 failed");
    std::ostringstream hex;
    for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
    return hex.str();
}

struct RunConfig {
    std::string command;
    std::string data_path;
    std::string out_dir;
    int t = 75;
    CostModel cost;
    bool drop_zero_columns = false;
    // fit
    std::string algo = "blars";
    int b = 1;
    int P = 1;
    std::optional<std::uint64_t> seed;
    bool timing = false;
    // compare
    std::vector<std::string> algos{"blars", "tblars"};
    std::vector<int> bs{1};
    std::vector<int> Ps{1};
    std::vector<std::uint64_t> seeds;
    // histogram
    int bins = 128;
    std::optional<int> partition_P;

    nlohmann::json to_json() const
    {
        nlohmann::json j = {{"command", command}, {"data", data_path}, {"drop_zero_columns", drop_zero_columns},
                            {"cost_model", calars::to_json(cost)}};
        if (command == "fit") {
            j["algo"] = algo;
            j["t"] = t;
            j["b"] = b;
            j["P"] = P;
            j["seed"] = seed ? nlohmann::json(*seed) : nlohmann::json(nullptr);
        } else if (command == "compare") {
            j["algos"] = algos;
            j["t"] = t;
            j["b"] = bs;
            j["P"] = Ps;
            j["seeds"] = seeds;
        } else {
            j["bins"] = bins;
            j["P"] = partition_P ? nlohmann::json(*partition_P) : nlohmann::json(nullptr);
            j["seed"] = seed ? nlohmann::json(*seed) : nlohmann::json(nullptr);
        }
        return j;
    }
};

struct LoadedData {
    DataMatrix matrix;
    std::vector<double> response;
    std::string sha256;
    std::size_t nnz = 0;
};

inline LoadedData load(const RunConfig& cfg)
{
    std::ifstream in(cfg.data_path, std::ios::binary);
    if (!in) throw DataError("cannot open data file '" + cfg.data_path + "'");
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    LoadedData d;
    d.sha256 = sha256_hex(bytes);
    std::istringstream text(bytes);
    auto raw = parse_libsvm(text);
    d.nnz = raw.entries.size();
    d.matrix = normalize_columns(raw, NormalizeOptions{cfg.drop_zero_columns});
    d.response = std::move(raw.response);
    return d;
}

inline void write_text(const std::filesystem::path& p, const std::string& text)
{
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error("cannot write '" + p.string() + "'");
    out << text;
}

inline void write_json(const std::filesystem::path& p, const nlohmann::json& j) { write_text(p, j.dump(2) + "\n"); }

inline nlohmann::json manifest(const RunConfig& cfg, const LoadedData& d, const std::vector<std::string>& outputs)
{
    return {{"schema_version", manifest_schema_version},
            {"tool", {{"name", "calars"}, {"version", tool_version}}},
            {"config", cfg.to_json()},
            {"dataset",
             {{"sha256", d.sha256},
              {"rows", d.matrix.rows()},
              {"cols", d.matrix.cols()},
              {"nnz", d.nnz},
              {"dropped_columns", d.matrix.dropped_columns},
              {"storage", d.matrix.matrix.is_dense() ? "dense" : "sparse"}}},
            {"outputs", outputs}};
}

inline nlohmann::json stats_json(const FitResult& fit, const CostModel& cost)
{
    auto j = to_json(fit.stats);
    j["modeled_time"] = modeled_time(fit.stats, static_cast<double>(fit.stats.flops), cost);
    j["cost_model"] = to_json(cost);
    j["iterations"] = iteration_clocks_json(fit.path);
    return j;
}

inline void run_fit(const RunConfig& cfg, const std::filesystem::path& out)
{
    const auto data = load(cfg);
    const auto algo = parse_algorithm(cfg.algo);
    std::optional<TblarsResult> tb;
    FitResult fit;
    if (algo == Algorithm::tblars) {
        tb = tblars_fit(data.matrix, data.response, TblarsConfig{cfg.b, cfg.t, cfg.P, cfg.seed});
        fit = *tb;
    } else {
        fit = run_solver(algo, data.matrix, data.response, cfg.b, cfg.P, cfg.t, cfg.seed);
    }

    std::vector<std::string> outputs{"path.csv", "stats.json", "coefficients.csv"};
    std::ostringstream path_csv;
    write_path_csv(fit.path, path_csv);
    write_text(out / "path.csv", path_csv.str());
    write_json(out / "stats.json", stats_json(fit, cfg.cost));

    std::ostringstream coef;
    coef << "index,column,coefficient,original_scale\n";
    for (const auto& [j, x] : fit.path.final_coeffs()) {
        const auto k = static_cast<std::size_t>(j);
        coef << j << ',' << data.matrix.source_columns[k] << ',' << format_number(x) << ','
             << format_number(x / data.matrix.original_norms[k]) << '\n';
    }
    write_text(out / "coefficients.csv", coef.str());

    if (tb) {
        write_json(out / "tournament.json", {{"plan", to_json(tb->plan)}, {"rounds", to_json(tb->trace)}});
        outputs.push_back("tournament.json");
    }
    if (cfg.timing) {
        // Wall-clock figures vary run to run, so they stay out of the other artifacts.
        write_json(out / "timing.json", {{"rank_idle_seconds", fit.rank_idle_seconds}, {"rank_flops", fit.rank_flops}});
        outputs.push_back("timing.json");
    }
    write_json(out / "manifest.json", manifest(cfg, data, outputs));
}

inline void run_compare(const RunConfig& cfg, const std::filesystem::path& out)
{
    const auto data = load(cfg);
    CompareGrid grid;
    for (const auto& a : cfg.algos) grid.algos.push_back(parse_algorithm(a));
    grid.bs = cfg.bs;
    grid.Ps = cfg.Ps;
    grid.t = cfg.t;
    if (!cfg.seeds.empty()) {
        grid.seeds.clear();
        for (auto s : cfg.seeds) grid.seeds.emplace_back(s);
    }
    const auto result = compare_run(data.matrix, data.response, grid);

    std::ostringstream curves;
    write_residual_curves_csv(result, curves);
    write_text(out / "residual_curves.csv", curves.str());
    write_json(out / "precision.json", precision_json(result));

    nlohmann::json stats = nlohmann::json::object();
    for (const auto& run : result.runs) {
        auto j = to_json(run.stats);
        j["modeled_time"] = modeled_time(run.stats, static_cast<double>(run.stats.flops), cfg.cost);
        stats[run.key()] = std::move(j);
    }
    write_json(out / "stats.json", stats);
    write_json(out / "manifest.json",
               manifest(cfg, data, {"residual_curves.csv", "precision.json", "stats.json"}));
}

inline void run_histogram(const RunConfig& cfg, const std::filesystem::path& out)
{
    const auto data = load(cfg);
    std::vector<std::string> outputs{"histogram.json"};
    write_json(out / "histogram.json", to_json(nnz_histogram(data.matrix, cfg.bins)));
    if (cfg.partition_P) {
        write_json(out / "partition.json",
                   to_json(partition_columns_balanced(data.matrix, *cfg.partition_P, cfg.seed)));
        outputs.push_back("partition.json");
    }
    write_json(out / "manifest.json", manifest(cfg, data, outputs));
}

/// Parses and runs one command. Returns the process exit code: 0 on success,
/// 1 on solver or data errors, 2 on bad flags.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr)
{
    RunConfig cfg;
    CLI::App app{"Least angle regression with communication-avoiding block variants", "calars"};
    app.require_subcommand(1);

    const auto common = [&cfg](CLI::App* sub) {
        sub->add_option("--data", cfg.data_path, "LIBSVM file")->required();
        sub->add_option("--out", cfg.out_dir, "output directory (default: $CALARS_OUT_DIR or .)");
        sub->add_flag("--drop-zero-columns", cfg.drop_zero_columns, "drop all-zero columns instead of failing");
        sub->add_option("--cost-gamma", cfg.cost.gamma, "seconds per flop")->check(CLI::PositiveNumber);
        sub->add_option("--cost-alpha", cfg.cost.alpha, "seconds per message")->check(CLI::PositiveNumber);
        sub->add_option("--cost-beta", cfg.cost.beta, "seconds per word")->check(CLI::PositiveNumber);
    };

    auto* fit = app.add_subcommand("fit", "run one solver");
    common(fit);
    fit->add_option("--algo", cfg.algo, "lars | blars | tblars")->check(CLI::IsMember({"lars", "blars", "tblars"}));
    fit->add_option("--t", cfg.t, "columns to select")->check(CLI::PositiveNumber);
    fit->add_option("--b", cfg.b, "block size")->check(CLI::PositiveNumber);
    fit->add_option("--P", cfg.P, "logical ranks")->check(CLI::PositiveNumber);
    fit->add_option("--seed", cfg.seed, "random column partition seed (tblars)");
    fit->add_flag("--timing", cfg.timing, "also write per-rank wall-clock idle time");

    auto* cmp = app.add_subcommand("compare", "precision and residual curves against sequential LARS");
    common(cmp);
    cmp->add_option("--algos", cfg.algos, "comma-separated algorithms")
        ->delimiter(',')
        ->check(CLI::IsMember({"lars", "blars", "tblars"}));
    cmp->add_option("--t", cfg.t, "columns to select")->check(CLI::PositiveNumber);
    cmp->add_option("--b", cfg.bs, "comma-separated block sizes")->delimiter(',')->check(CLI::PositiveNumber);
    cmp->add_option("--P", cfg.Ps, "comma-separated rank counts")->delimiter(',')->check(CLI::PositiveNumber);
    cmp->add_option("--seeds", cfg.seeds, "comma-separated column partition seeds (tblars)")->delimiter(',');

    auto* hist = app.add_subcommand("histogram", "nnz-per-column histogram and optional column partition");
    common(hist);
    hist->add_option("--bins", cfg.bins, "bin count")->check(CLI::PositiveNumber);
    hist->add_option("--P", cfg.partition_P, "also write the balanced column plan for P ranks")
        ->check(CLI::PositiveNumber);
    hist->add_option("--seed", cfg.seed, "random column partition seed");

    std::vector<std::string> rev(args.rbegin(), args.rend());
    try {
        app.parse(rev);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return 2;
    }

    if (fit->parsed()) cfg.command = "fit";
    if (cmp->parsed()) cfg.command = "compare";
    if (hist->parsed()) cfg.command = "histogram";

    try {
        std::filesystem::path dir = cfg.out_dir;
        if (dir.empty()) {
            const char* env = std::getenv("CALARS_OUT_DIR");
            dir = env && *env ? env : ".";
        }
        std::filesystem::create_directories(dir);
        if (cfg.command == "fit")
            run_fit(cfg, dir);
        else if (cfg.command == "compare")
            run_compare(cfg, dir);
        else
            run_histogram(cfg, dir);
        out << "wrote " << cfg.command << " artifacts to " << dir.string() << "\n";
        return 0;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace calars::cli
